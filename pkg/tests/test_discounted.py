import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subaction_lab.discounted import (
    ConvergenceError,
    DiscountParams,
    bellman_operator,
    discounted_sum,
    estimate_m,
    estimate_m_staged,
    greedy_realizer,
    integrate,
    integrate_pushforward,
    normalized_subaction,
    occupational_measure,
    solve_normalized,
    solve_subaction,
    truncation_depth,
)
from subaction_lab.dynamics import FunctionField
from subaction_lab.mane import symbolic_oracle
from subaction_lab.potentials import (
    AnalyticPotential,
    constant_potential,
    example_potential,
    random_word_potential,
    sample_to_grid,
)

EPS = np.finfo(float).eps


# ------------------------------------------------------------------------ operator


def test_operator_on_constants():
    A = constant_potential(1.25, 3)
    b = FunctionField(np.full(3, 2.0), A.shift)
    assert np.allclose(bellman_operator(b, 0.7, A).values, 0.7 * 2.0 + 1.25)


def test_operator_on_example_from_zero():
    A = example_potential()
    out = bellman_operator(FunctionField(np.zeros(2), A.shift), 0.5, A)
    assert out.values.tolist() == [0.0, 0.0]


@pytest.mark.parametrize("seed", range(5))
def test_operator_matches_enumeration(seed):
    # state x = first symbol of the point; its preimages prepend a symbol a
    A = random_word_potential(seed)
    rng = np.random.default_rng(seed)
    b = rng.normal(size=2)
    lam = 0.8
    out = bellman_operator(FunctionField(b, A.shift), lam, A).values
    for x in range(2):
        expect = max(lam * b[a] + A.value((a, x)) for a in range(2))
        assert out[x] == pytest.approx(expect, abs=1e-15)


fields = st.lists(st.floats(-50, 50), min_size=4, max_size=4)


@settings(max_examples=60, deadline=None)
@given(fields, fields, st.floats(0.01, 0.999), st.integers(0, 10_000))
def test_operator_contracts(f, g, lam, seed):
    A = random_word_potential(seed, 2, 3)
    F, G = FunctionField(np.array(f), A.shift), FunctionField(np.array(g), A.shift)
    lhs = bellman_operator(F, lam, A).distance(bellman_operator(G, lam, A))
    assert lhs <= lam * F.distance(G) + 4 * EPS * 100


@settings(max_examples=60, deadline=None)
@given(fields, st.lists(st.floats(0, 10), min_size=4, max_size=4), st.floats(0.01, 0.999))
def test_operator_is_monotone(f, bump, lam):
    A = random_word_potential(3, 2, 3)
    F = FunctionField(np.array(f), A.shift)
    G = FunctionField(np.array(f) + np.array(bump), A.shift)
    assert np.all(bellman_operator(F, lam, A).values <= bellman_operator(G, lam, A).values)


# --------------------------------------------------------------------------- solver


@pytest.mark.parametrize("c,lam,d", [(1.5, 0.5, 2), (-0.3, 0.9, 3), (2.0, 0.99, 2)])
def test_solve_constant(c, lam, d):
    b, rep = solve_subaction(constant_potential(c, d), DiscountParams(lam))
    assert np.allclose(b.values, c / (1 - lam), atol=1e-8)
    assert estimate_m(b, lam) == pytest.approx(c, abs=1e-10)


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9, 0.999])
def test_solve_example_is_zero(lam):
    b, _ = solve_subaction(example_potential(), DiscountParams(lam))
    assert b.values.tolist() == [0.0, 0.0]
    assert estimate_m(b, lam) == 0.0
    assert normalized_subaction(b, 0.0, lam).values.tolist() == [0.0, 0.0]


@pytest.mark.parametrize("seed,lam", [(1, 0.5), (2, 0.9), (3, 0.99), (4, 0.999)])
def test_residual_within_tolerance(seed, lam):
    A = random_word_potential(seed, 2, 3)
    p = DiscountParams(lam, tol=1e-10)
    b, rep = solve_subaction(A, p)
    residual = bellman_operator(b, lam, A).distance(b)
    assert residual == rep.residual_sup
    assert residual <= p.tol * (1 - lam)


@pytest.mark.parametrize("seed", range(5))
def test_discounted_calibration(seed):
    A = random_word_potential(seed, 2, 3)
    lam = 0.95
    b, rep = solve_subaction(A, DiscountParams(lam))
    W = A.edge_matrix()
    for j, i in zip(*np.nonzero(np.isfinite(W))):
        assert b.values[i] >= lam * b.values[j] + W[j, i] - rep.residual_sup - 1e-15


def test_convergence_error_carries_partial_result():
    with pytest.raises(ConvergenceError) as info:
        solve_subaction(random_word_potential(0), DiscountParams(0.999, max_iter=5))
    assert info.value.field is not None
    assert info.value.report.iterations == 5
    assert not info.value.report.converged


def test_params_validation():
    with pytest.raises(ValueError):
        DiscountParams(1.0)
    with pytest.raises(ValueError):
        DiscountParams(0.5, tol=0.0)


def test_cosine_grid_value_at_fixed_point():
    # independent oracle: staying on branch 0 from x = 0 collects cos(0) = 1 forever
    cos = AnalyticPotential("cosine")
    lam = 0.999
    b, rep = solve_subaction(sample_to_grid(cos, 4096), DiscountParams(lam))
    total, tail = discounted_sum(cos, lam, 0.0, [0] * 40_000, space=b.space)
    assert (1 - lam) * total == pytest.approx(1.0, abs=1e-12)
    assert abs((1 - lam) * b.values[0] - (1 - lam) * total) <= 0.02
    assert abs(estimate_m(b, lam) - 1.0) <= 0.02


def test_normalized_solve_matches_shifted_values():
    A = random_word_potential(11)
    m = symbolic_oracle(A).m
    lam = 0.99
    b, rb = solve_subaction(A, DiscountParams(lam))
    U, ru = solve_normalized(A, m, DiscountParams(lam))
    assert U.distance(normalized_subaction(b, m, lam)) <= rb.error_bound + ru.error_bound


def test_normalized_solve_on_grid():
    cos = AnalyticPotential("cosine")
    lam = 0.9
    U, _ = solve_normalized(cos, 1.0, DiscountParams(lam), space=sample_to_grid(cos, 256).space)
    b, _ = solve_subaction(cos, DiscountParams(lam), space=U.space)
    assert U.distance(normalized_subaction(b, 1.0, lam)) <= 1e-8


def test_staged_m_estimate():
    m, estimates, diffs = estimate_m_staged(random_word_potential(2), lams=(0.9, 0.99, 0.999))
    assert len(estimates) == 3 and len(diffs) == 2
    assert abs(m - symbolic_oracle(random_word_potential(2)).m) <= 1e-2


# ------------------------------------------------------------------------ realizers


def test_realizer_example_stays_put():
    A = example_potential()
    b, _ = solve_subaction(A, DiscountParams(0.9))
    r = greedy_realizer(b, A, 0.9, 0)
    assert r.symbols[0] == 0 and r.orbit[0] == 0
    assert (r.preperiod, r.period) == (0, 1)


def test_realizer_tie_break_on_constants():
    A = constant_potential(0.4, 3)
    b, _ = solve_subaction(A, DiscountParams(0.9))
    r = greedy_realizer(b, A, 0.9, 2, depth=6)
    assert r.symbols == (0,) * 6


def test_realizer_cosine_matches_word_search():
    cos = AnalyticPotential("cosine")
    lam = 0.9
    b, _ = solve_subaction(sample_to_grid(cos, 4096), DiscountParams(lam))
    r = greedy_realizer(b, cos, lam, 0.5, depth=10)
    assert r.symbols == (0,) * 10
    orbit = np.array(r.orbit)
    assert np.all(np.diff(orbit) < 0) and orbit[-1] == pytest.approx(0.5 / 2**10)

    def score(word):
        z, total = 0.5, 0.0
        for n, a in enumerate(word):
            z = (z + a) / 2.0
            total += lam**n * cos(z)
        return total + lam ** len(word) * b.evaluate(z)

    best = max(itertools.product((0, 1), repeat=10), key=score)
    assert best == r.symbols


def test_truncation_depth():
    assert truncation_depth(0.9, 1e-12) == 263
    assert 0.9**263 < 1e-12 <= 0.9**262


# ---------------------------------------------------------------- occupational measure


def test_measure_example_single_atom():
    A = example_potential()
    b, _ = solve_subaction(A, DiscountParams(0.9))
    mu = occupational_measure(greedy_realizer(b, A, 0.9, 0), 0.9)
    assert mu.exact and mu.tail == 0.0
    assert mu.atoms == ((0, pytest.approx(1.0, abs=1e-15)),)
    # identity with w = indicator of state 0: both sides vanish
    w = np.array([1.0, 0.0])
    lhs = integrate_pushforward(mu, w) - integrate(mu, w)
    assert lhs == pytest.approx(0.0, abs=1e-15)
    assert (1 - 0.9) * (w[0] - integrate(mu, w)) == pytest.approx(0.0, abs=1e-15)


def test_measure_truncated_on_circle():
    cos = AnalyticPotential("cosine")
    lam = 0.9
    b, _ = solve_subaction(sample_to_grid(cos, 1024), DiscountParams(lam))
    r = greedy_realizer(b, cos, lam, 0.3)
    mu = occupational_measure(r, lam, tol=1e-12)
    assert len(mu.edges) == 263
    assert mu.total_mass + mu.tail == pytest.approx(1.0, abs=1e-12)
    assert integrate(mu, lambda x: 1.0) == pytest.approx(1.0 - mu.tail, abs=1e-12)


def test_measure_needs_depth():
    cos = AnalyticPotential("cosine")
    b, _ = solve_subaction(sample_to_grid(cos, 256), DiscountParams(0.9))
    with pytest.raises(ValueError):
        occupational_measure(greedy_realizer(b, cos, 0.9, 0.3, depth=10), 0.9)


@pytest.mark.parametrize("seed", range(8))
def test_io_identity_and_mass(seed):
    A = random_word_potential(seed, 3, 2)
    rng = np.random.default_rng(seed)
    lam = 0.93
    b, rep = solve_subaction(A, DiscountParams(lam))
    for y in range(3):
        mu = occupational_measure(greedy_realizer(b, A, lam, y), lam)
        assert mu.total_mass == pytest.approx(1.0, abs=1e-12)
        w = rng.normal(size=3)
        lhs = integrate_pushforward(mu, w) - integrate(mu, w)
        rhs = (1 - lam) * (w[y] - integrate(mu, w))
        assert abs(lhs - rhs) <= 1e-10
        assert abs(b.values[y] - integrate(mu, A) / (1 - lam)) <= rep.error_bound


@pytest.mark.parametrize("seed", range(10))
def test_nonnegative_on_maximizing_measures(seed):
    A = random_word_potential(seed)
    o = symbolic_oracle(A)
    for lam in (0.9, 0.99):
        U, rep = solve_normalized(A, o.m, DiscountParams(lam))
        for c in o.cycles:
            assert c.integrate(U) >= -rep.error_bound


@pytest.mark.parametrize("seed", range(10))
def test_dual_inequality(seed):
    A = random_word_potential(seed, 2, 3)
    o = symbolic_oracle(A)
    lam = 0.95
    U, rep = solve_normalized(A, o.m, DiscountParams(lam))
    for y in range(A.shift.n_states):
        mu = occupational_measure(greedy_realizer(U, A.shifted(o.m), lam, y), lam)
        assert U.values[y] <= o.V.values[y] - integrate(mu, o.V) + rep.error_bound + 1e-12


# ----------------------------------------------------------------------- sums


def test_discounted_sum_examples():
    A = example_potential()
    total, tail = discounted_sum(A, 0.5, 0, [0] * 30)
    assert total == 0.0
    total, _ = discounted_sum(A, 0.5, 0, [1] * 30)
    assert total == -3.0
    lam, K = 0.8, 25
    total, tail = discounted_sum(constant_potential(2.0), lam, 1, [1] * K)
    assert total == pytest.approx(2.0 * (1 - lam**K) / (1 - lam), rel=1e-14)
    assert tail == pytest.approx(lam**K * 2.0 / (1 - lam))
    with pytest.raises(ValueError):
        discounted_sum(A, 0.5, 0, [], depth=0)
