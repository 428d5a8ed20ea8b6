import numpy as np
import pytest
from hypothesis import given, strategies as st

from subaction_lab.dynamics import (
    CircleGrid,
    CircleMap,
    FunctionField,
    ShiftSpace,
    check_same_space,
    circle_distance,
    parse_word_label,
    word_label,
)


def test_forward_examples():
    assert CircleMap(2).forward(0.3) == pytest.approx(0.6)
    assert CircleMap(2).forward(0.75) == 0.5
    assert CircleMap(3).forward(0.0) == 0.0


def test_inverse_branch_examples():
    T = CircleMap(2)
    assert T.inverse_branch(0, 0.5) == 0.25
    assert T.inverse_branch(1, 0.5) == 0.75
    with pytest.raises(IndexError):
        T.inverse_branch(2, 0.5)
    with pytest.raises(IndexError):
        T.inverse_branch(-1, 0.5)


def test_degree_validation():
    with pytest.raises(ValueError):
        CircleMap(1)


@given(st.integers(2, 7), st.data(), st.floats(0.0, 1.0, exclude_max=True))
def test_forward_undoes_inverse_branch(d, data, x):
    j = data.draw(st.integers(0, d - 1))
    T = CircleMap(d)
    assert circle_distance(T.forward(T.inverse_branch(j, x)), x) <= 1e-12


@given(st.integers(2, 5), st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_branches_contract_by_degree(d, x1, x2):
    T = CircleMap(d)
    for j in range(d):
        gap = abs(T.inverse_branch(j, x1) - T.inverse_branch(j, x2))
        assert gap == pytest.approx(abs(x1 - x2) / d, abs=1e-15)


@given(st.integers(2, 6), st.floats(0, 1, exclude_max=True))
def test_preimages_distinct_and_d_many(d, x):
    pre = CircleMap(d).preimages(x)
    assert len(pre) == d
    assert len(set(np.round(pre, 14))) == d


def test_circle_distance():
    assert circle_distance(0.1, 0.9) == pytest.approx(0.2)
    assert circle_distance(0.25, 0.75) == pytest.approx(0.5)
    assert circle_distance(0.0, 0.0) == 0.0


def test_grid_requires_multiple_of_degree():
    with pytest.raises(ValueError):
        CircleGrid(CircleMap(2), 7)
    with pytest.raises(ValueError):
        CircleGrid(CircleMap(3), 8)
    assert CircleGrid(CircleMap(3), 9).size == 9


def test_grid_interpolation_and_wraparound():
    g = CircleGrid(CircleMap(2), 4)
    values = np.array([0.0, 1.0, 2.0, 3.0])
    assert g.evaluate(values, 0.25) == 1.0
    assert g.evaluate(values, 0.125) == pytest.approx(0.5)
    # between the last node and 1 = 0
    assert g.evaluate(values, 0.875) == pytest.approx(1.5)


def test_grid_forward_index_is_exact():
    g = CircleGrid(CircleMap(2), 16)
    fwd = g.forward_index()
    assert np.allclose(g.points[fwd], CircleMap(2).forward(g.points))


def test_preimage_points_map_back():
    g = CircleGrid(CircleMap(3), 12)
    pts = g.preimage_points()
    assert pts.shape == (12, 3)
    assert np.allclose(CircleMap(3).forward(pts), g.points[:, None])


def test_shift_states_and_transitions():
    s = ShiftSpace(2, 3)
    assert s.n_states == 4
    assert s.states[s.index((1, 0))] == (1, 0)
    for j in range(4):
        succ = s.successors(j)
        assert len(succ) == 2
        assert all(s.transition_exists(j, i) for i in succ)
    assert not s.transition_exists(s.index((0, 0)), s.index((1, 1)))


def test_shift_predecessor_prepends_symbol():
    s = ShiftSpace(3, 3)
    i = s.index((2, 1))
    p = s.predecessor(i, 0)
    assert s.states[p] == (0, 2)
    assert s.transition_exists(p, i)
    table = s.predecessor_table()
    assert table.shape == (9, 3)
    assert table[i, 0] == p


def test_edge_word_reads_new_symbol_first():
    s = ShiftSpace(2, 2)
    # edge from state of y (= y0) to state of Ty (= y1) carries the word (y0, y1)
    assert s.edge_word(0, 1) == 1  # word (0, 1) in base 2
    assert s.edge_word(1, 0) == 2


def test_word_labels_round_trip():
    assert word_label((0, 1, 1), 2) == "011"
    assert parse_word_label("011", 2) == (0, 1, 1)
    assert parse_word_label(word_label((10, 3), 12), 12) == (10, 3)


def test_function_field_is_immutable_and_checks_space():
    s = ShiftSpace(2, 2)
    f = FunctionField(np.array([1.0, -2.0]), s)
    with pytest.raises(ValueError):
        f.values[0] = 3.0
    assert f.sup() == 1.0 and f.inf() == -2.0 and f.sup_norm() == 2.0
    g = f.replace(np.array([0.0, 0.0]))
    assert f.distance(g) == 2.0
    with pytest.raises(ValueError):
        check_same_space(s, ShiftSpace(3, 2))
    with pytest.raises(ValueError):
        FunctionField(np.zeros(3), s)
