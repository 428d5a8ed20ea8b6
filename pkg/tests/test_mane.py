import json
import math

import numpy as np
import pytest

from subaction_lab.dynamics import FunctionField, ShiftSpace
from subaction_lab.mane import (
    ManeMatrix,
    MaxPlusMatrix,
    check_calibrated,
    check_subaction,
    circle_periodic_max,
    compute_V,
    critical_entropy,
    karp_max_cycle_mean,
    mane_grid,
    mane_matrix,
    max_cycle_mean,
    simple_cycles,
    symbolic_oracle,
    transition_weights,
)
from subaction_lab.potentials import (
    AnalyticPotential,
    WordPotential,
    constant_potential,
    example_potential,
    random_word_potential,
)


def favored_loop() -> WordPotential:
    shift = ShiftSpace(2, 2)
    table = np.zeros(4)
    table[shift.index((0, 0))] = 1.0
    return WordPotential(shift, table)


def walks(W: np.ndarray, start: int, length: int):
    """Every walk of exactly ``length`` edges from ``start``: (end node, total weight)."""
    frontier = [(start, 0.0)]
    for _ in range(length):
        frontier = [(i, w + W[j, i]) for j, w in frontier for i in np.flatnonzero(np.isfinite(W[j]))]
    return frontier


def brute_max_cycle_mean(W: np.ndarray) -> float:
    n = W.shape[0]
    best = -math.inf
    for start in range(n):
        for length in range(1, n + 1):
            for end, w in walks(W, start, length):
                if end == start:
                    best = max(best, w / length)
    return best


def brute_mane(W: np.ndarray, m: float, max_len: int = 8) -> np.ndarray:
    n = W.shape[0]
    S = np.full((n, n), -np.inf)
    for start in range(n):
        for length in range(1, max_len + 1):
            for end, w in walks(W, start, length):
                S[start, end] = max(S[start, end], w - length * m)
    return S


SYSTEMS = [
    ("example", example_potential),
    ("favored-loop", favored_loop),
    ("constant", lambda: constant_potential(0.25, 2, 3)),
] + [(f"random-{s}", lambda s=s: random_word_potential(s, 2, 3)) for s in range(8)]


def test_transition_weights_example():
    W = transition_weights(example_potential()).weights
    assert W.tolist() == [[0.0, -5.0], [-3.0, 0.0]]


def test_transition_weights_sparse_for_longer_words():
    W = transition_weights(random_word_potential(0, 2, 3)).weights
    assert W.shape == (4, 4)
    assert (np.isfinite(W).sum(axis=1) == 2).all()
    assert (np.isfinite(W).sum(axis=0) == 2).all()


@pytest.mark.parametrize("name,make", SYSTEMS)
def test_karp_matches_brute_force(name, make):
    W = transition_weights(make()).weights
    assert karp_max_cycle_mean(W) == pytest.approx(brute_max_cycle_mean(W), abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_karp_three_symbols(seed):
    W = transition_weights(random_word_potential(seed, 3, 2)).weights
    assert karp_max_cycle_mean(W) == pytest.approx(brute_max_cycle_mean(W), abs=1e-12)


def test_cycles_example():
    res = max_cycle_mean(transition_weights(example_potential()))
    assert res.m == 0.0
    assert sorted(c.nodes for c in res.cycles) == [(0,), (1,)]
    assert not res.capped


def test_cycles_favored_loop():
    res = max_cycle_mean(transition_weights(favored_loop()))
    assert res.m == 1.0
    assert [c.nodes for c in res.cycles] == [(0,)]
    V = symbolic_oracle(favored_loop()).V.values
    assert V.tolist() == [0.0, -1.0]


def test_cycles_constant_all_optimal():
    A = constant_potential(0.5, 2, 3)
    res = max_cycle_mean(transition_weights(A))
    assert res.m == 0.5
    everything, _ = simple_cycles([np.flatnonzero(np.isfinite(r)).tolist() for r in A.edge_matrix()])
    assert len(res.cycles) == len(everything)
    assert critical_entropy(transition_weights(A), res.m) == pytest.approx(math.log(2.0), abs=1e-12)


def test_critical_entropy_zero_on_isolated_loops():
    W = transition_weights(example_potential())
    assert critical_entropy(W, 0.0) == 0.0


def test_simple_cycles_of_complete_graph():
    adj = [[0, 1, 2], [0, 1, 2], [0, 1, 2]]
    cycles, capped = simple_cycles(adj)
    # 3 loops, 3 two-cycles, 2 three-cycles
    assert len(cycles) == 8 and not capped
    _, capped = simple_cycles(adj, cap=3)
    assert capped


@pytest.mark.parametrize("name,make", SYSTEMS)
def test_mane_matrix_matches_path_search(name, make):
    A = make()
    W = transition_weights(A)
    m = max_cycle_mean(W).m
    S = mane_matrix(W, m).values
    assert np.allclose(S, brute_mane(W.weights, m), atol=1e-12)


@pytest.mark.parametrize("name,make", SYSTEMS)
def test_mane_structure(name, make):
    orc = symbolic_oracle(make())
    S = orc.S.values
    n = S.shape[0]
    # no cycle has positive weight
    assert np.all(S + S.T <= 1e-12)
    assert np.all(np.diag(S) <= 1e-12)
    # triangle inequality
    for j in range(n):
        assert np.all(S[:, j, None] + S[None, j, :] <= S + 1e-12)
    for i in orc.aubry:
        assert abs(S[i, i]) <= 1e-12


@pytest.mark.parametrize("name,make", SYSTEMS)
def test_V_is_a_calibrated_subaction(name, make):
    A = make()
    orc = symbolic_oracle(A)
    assert check_subaction(orc.V, A, orc.m) <= 1e-12
    assert check_calibrated(orc.V, A, orc.m) <= 1e-12
    # V integrates to 0 against at least one maximizing cycle and is <= 0 on each
    means = [orc.V.values[list(c.nodes)].mean() for c in orc.cycles]
    assert max(means) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name,make", SYSTEMS)
def test_V_representation(name, make):
    orc = symbolic_oracle(make())
    S = brute_mane(orc.W.weights, orc.m)
    expected = np.max([S[list(c.nodes)].mean(axis=0) for c in orc.cycles], axis=0)
    assert np.allclose(orc.V.values, expected, atol=1e-12)


def test_compute_V_needs_cycles():
    orc = symbolic_oracle(example_potential())
    with pytest.raises(ValueError):
        compute_V(orc.S, [])


def test_positive_cycle_is_rejected():
    W = transition_weights(example_potential())
    with pytest.raises(ValueError, match="positive cycle"):
        mane_matrix(W, -0.1)


def test_dead_node_rejected():
    W = MaxPlusMatrix(np.array([[0.0, -np.inf], [-np.inf, -np.inf]]))
    with pytest.raises(ValueError):
        max_cycle_mean(W)


def test_checkers_flag_bad_candidates():
    A = example_potential()
    D = FunctionField(np.array([0.0, 4.0]), A.shift)
    # 1 -> 0 under A - 0: -3 + 4 - 0 = 1
    assert check_subaction(D, A, 0.0) == pytest.approx(1.0)
    assert check_calibrated(D, A, 0.0) > 0.5


def test_json_round_trips():
    orc = symbolic_oracle(random_word_potential(2, 2, 3))
    text = json.dumps(orc.to_json())
    data = json.loads(text)
    W = MaxPlusMatrix.from_json(data["W"])
    assert np.array_equal(W.weights, orc.W.weights)
    S = ManeMatrix.from_json(data["mane"])
    assert np.array_equal(S.values, orc.S.values) and S.m == orc.m
    assert data["V"] == orc.V.values.tolist()


# --------------------------------------------------------------------------- circle


def test_mane_grid_fixed_point():
    cos = AnalyticPotential("cosine")
    assert mane_grid(cos, 1.0, 0.0, 0.0, depth=10, eps=1e-3) >= 0.0


def test_mane_grid_half():
    cos = AnalyticPotential("cosine")
    s = mane_grid(cos, 1.0, 0.0, 0.5, depth=14, eps=1e-3)
    assert -2 * math.pi <= s <= 0.0


def test_mane_grid_monotone():
    cos = AnalyticPotential("cosine")
    by_depth = [mane_grid(cos, 1.0, 0.1, 0.5, depth=n, eps=0.05) for n in (4, 8, 12)]
    assert by_depth[0] <= by_depth[1] <= by_depth[2]
    by_eps = [mane_grid(cos, 1.0, 0.1, 0.5, depth=10, eps=e) for e in (0.01, 0.05, 0.2)]
    assert by_eps[0] <= by_eps[1] <= by_eps[2]


def test_mane_grid_no_branch_is_minus_inf():
    cos = AnalyticPotential("cosine")
    assert mane_grid(cos, 1.0, 0.3, 0.5, depth=1, eps=1e-6) == -math.inf


def test_mane_grid_depth_limits():
    cos = AnalyticPotential("cosine")
    with pytest.raises(ValueError):
        mane_grid(cos, 1.0, 0.0, 0.0, depth=25, eps=0.1)
    with pytest.raises(ValueError):
        mane_grid(cos, 1.0, 0.0, 0.0, depth=0, eps=0.1)


def test_circle_periodic_max_cosine():
    best, orbit = circle_periodic_max(AnalyticPotential("cosine"), max_period=8)
    assert best == pytest.approx(1.0)
    assert orbit.tolist() == [0.0]


def test_circle_periodic_max_beats_every_short_orbit():
    pot = AnalyticPotential("cosine", amplitude=0.5).shifted(0.0)
    best, orbit = circle_periodic_max(pot, max_period=6)
    # period-2 orbit {1/3, 2/3} as an explicit competitor
    assert best >= float(np.mean(pot(np.array([1 / 3, 2 / 3])))) - 1e-15
    assert best == pytest.approx(float(np.mean(pot(orbit))))
