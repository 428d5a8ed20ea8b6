"""Discounted Gibbs fixed point e^{u(x)} = sum_{T y = x} e^{beta A(y) + lambda u(y)}.

Everything stays in log space: e^u is never formed, so beta in the thousands is
fine.  The log-sum-exp used here keeps the largest term out of the sum and
adds the rest through log1p, so corrections far below machine epsilon relative
to the leading term (e.g. log(1 + e^{-200})) survive.  Several results in the
zero-temperature regime depend on those tiny numbers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .discounted import (
    FLOAT_FLOOR,
    ConvergenceError,
    SolveReport,
    interpolation_slack,
    stagnation_window,
)
from .dynamics import CircleGrid, FunctionField, ShiftSpace, check_same_space
from .potentials import WordPotential, build_stencil, space_of

logger = logging.getLogger(__name__)


def logsumexp(z, axis=None):
    """log(sum(exp(z))) with the maximal term factored out and the rest added via log1p.

    All ``-inf`` slices give ``-inf``.
    """
    z = np.asarray(z, dtype=float)
    if axis is None:
        z = z.ravel()
        axis = 0
    top_idx = np.expand_dims(np.argmax(z, axis=axis), axis)
    top = np.take_along_axis(z, top_idx, axis)
    safe_top = np.where(np.isfinite(top), top, 0.0)
    rest = z.copy()
    np.put_along_axis(rest, top_idx, -np.inf, axis)
    with np.errstate(invalid="ignore"):
        s = np.exp(rest - safe_top).sum(axis=axis, keepdims=True)
        out = np.where(np.isneginf(top), -np.inf, top + np.log1p(s))
    out = np.squeeze(out, axis=axis)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GibbsParams:
    beta: float
    lam: float
    tol: float = 1e-10
    max_iter: int = 50_000_000

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.tol > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")


def _stencil_for(u: FunctionField, A):
    if isinstance(A, WordPotential):
        check_same_space(u.space, A.shift)
    elif isinstance(A, FunctionField):
        check_same_space(u.space, A.space)
    return build_stencil(u.space, A)


def gibbs_operator(u: FunctionField, params: GibbsParams, A, stencil=None) -> FunctionField:
    """u -> log sum_j exp(beta A(tau_j x) + lam u(tau_j x))."""
    if not np.all(np.isfinite(u.values)):
        raise ValueError("gibbs_operator needs finite input values")
    st = stencil or _stencil_for(u, A)
    z = params.beta * st.weight + params.lam * st.pull(u.values)
    return u.replace(logsumexp(z, axis=1), role="S(u)", lam=params.lam, beta=params.beta)


def _newton(u0: np.ndarray, st, params: GibbsParams, threshold: float, max_steps: int = 200):
    """Newton's method for S(u) = u on an exact (shift) stencil.

    The Jacobian of S is lam P with P the row-stochastic softmax weights, so
    I - lam P is always invertible.
    """
    n, d = st.weight.shape
    lam, beta = params.lam, params.beta
    u = u0.copy()
    prev = math.inf
    for step in range(1, max_steps + 1):
        z = beta * st.weight + lam * u[st.lo]
        su = logsumexp(z, axis=1)
        resid = su - u
        rnorm = float(np.max(np.abs(resid)))
        if rnorm <= max(threshold, FLOAT_FLOOR * float(np.max(np.abs(su)))):
            return su, step, True
        if rnorm > prev:
            return u, step, False
        prev = rnorm
        weights = np.exp(z - su[:, None])
        jac = np.eye(n)
        for a in range(d):
            np.add.at(jac, (np.arange(n), st.lo[:, a]), -lam * weights[:, a])
        delta = np.linalg.solve(jac, resid)
        u = u + delta
        if float(np.max(np.abs(delta))) <= max(threshold, FLOAT_FLOOR * float(np.max(np.abs(u)))):
            return u, step, True
    return u, max_steps, False


def solve_gibbs(A, params: GibbsParams, space=None, method: str = "auto"):
    """Fixed point u_{lam,beta} of the log-sum-exp operator, starting from u = 0.

    ``method`` is "value-iteration", "newton" (shift spaces only) or "auto",
    which uses Newton on shift spaces when value iteration would need more
    than a million sweeps.  Both stop on the rule used by
    :func:`~subaction_lab.discounted.solve_subaction`.
    """
    space = space or space_of(A)
    st = build_stencil(space, A)
    lam, beta = params.lam, params.beta
    threshold = params.tol * (1.0 - lam) / lam
    start = np.zeros(space.size)

    if method == "auto":
        first = logsumexp(beta * st.weight, axis=1)
        scale = max(float(np.max(np.abs(first))), 1e-300)
        sweeps = math.log(max(scale / threshold, 1.0)) / -math.log(lam)
        method = "newton" if isinstance(space, ShiftSpace) and sweeps > 1e6 else "value-iteration"

    hit = False
    iters = 0
    if method == "newton":
        if not isinstance(space, ShiftSpace):
            raise ValueError("newton solves are only available on shift spaces")
        values, iters, hit = _newton(start, st, params, threshold)
        if not hit:
            logger.info("newton did not settle; continuing with value iteration")
            start, method = values, "value-iteration"
    if method == "value-iteration":
        values, more, delta, hit = _kernels.iterate(
            1, start, lam, beta, st.lo, st.hi, st.frac, st.weight,
            threshold, stagnation_window(lam), params.max_iter,
        )
        iters += int(more)
    elif method != "newton":
        raise ValueError(f"unknown method {method!r}")

    u = FunctionField(values, space, role="u", lam=lam, beta=beta)
    residual = float(np.max(np.abs(gibbs_operator(u, params, A, st).values - values)))
    report = SolveReport(
        lam=lam,
        iterations=int(iters),
        residual_sup=residual,
        m_estimate=(1.0 - lam) * u.inf() / beta,
        interpolation_slack=beta * interpolation_slack(A, space),
        beta=beta,
        method=method,
        value_scale=u.sup_norm(),
    )
    if not hit:
        if iters >= params.max_iter:
            report.converged = False
            raise ConvergenceError(f"gibbs iteration did not converge in {iters} steps", u, report)
        report.notes.append("stopped at float resolution before the requested threshold")
    return u, report


# ------------------------------------------------------------------------------ pressure


def _log_matmul(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """(log X) (x) (log Y) in the log-sum-exp semiring."""
    return logsumexp(X[:, :, None] + Y[None, :, :], axis=1)


@dataclass(frozen=True)
class RuelleEigen:
    pressure: float
    log_eigenfunction: np.ndarray  # normalised so the maximum is 0
    squarings: int
    eigen_residual: float


def _log_transfer(A: WordPotential, beta: float) -> np.ndarray:
    """log of the transfer matrix: entry [j, i] = beta A(j -> i), -inf off the graph."""
    W = A.edge_matrix()
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(W), beta * W, -np.inf)


def _pressure_from_vector(L: np.ndarray, l: np.ndarray) -> tuple[float, float]:
    """Rayleigh-type pressure from a left log-eigenvector, and its spread across states."""
    per_state = logsumexp(l[:, None] + L - l[None, :], axis=0)
    ref = float(np.max(per_state))
    w = np.exp(l - logsumexp(l))
    p = ref + math.log1p(float(np.sum(w * np.expm1(per_state - ref))))
    return p, float(np.max(per_state) - np.min(per_state))


def ruelle_eigenfunction(A: WordPotential, beta: float, rtol: float = 1e-13, max_squarings: int = 200_000) -> RuelleEigen:
    """Leading left eigenvector of the transfer matrix, in log space.

    Power iteration 1^T M^N with N = 2, 4, 8, ...: the log matrix is squared in
    the log-sum-exp semiring and renormalised each time.  Doubling N matters
    because the gap between the two leading eigenvalues can be as small as
    e^{-c beta}, far beyond any feasible count of single steps.  Rows index
    source states, so the row vector recovered here satisfies phi M = alpha phi.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    L0 = _log_transfer(A, beta)
    L = L0.copy()
    finite = np.isfinite(L)
    for count in range(1, max_squarings + 1):
        nxt = _log_matmul(L, L)
        nxt = nxt - np.max(nxt)
        finite = np.isfinite(nxt)
        scale = 1.0 + float(np.max(np.abs(nxt[finite])))
        same_support = np.array_equal(finite, np.isfinite(L))
        change = float(np.max(np.abs(nxt[finite] - L[finite]))) if same_support else math.inf
        L = nxt
        if change <= rtol * scale:
            break
    else:
        raise ConvergenceError(
            f"log-space power iteration did not settle after {max_squarings} squarings", None, None
        )
    l = logsumexp(L, axis=0)
    l = l - np.max(l)
    p, spread = _pressure_from_vector(L0, l)
    return RuelleEigen(p, l, count, spread)


def pressure_exact(A: WordPotential, beta: float) -> float:
    """P(beta A) = log of the spectral radius of the transfer matrix e^{beta A(j -> i)}.

    The table maximum is factored out first, so constant potentials come out
    as exactly beta c + log d.
    """
    c0 = float(np.max(A.table))
    return beta * c0 + ruelle_eigenfunction(A.shifted(c0), beta).pressure


def entropy_gap(A: WordPotential, beta: float, m: float) -> float:
    """P(beta A) - beta m(A), computed as P(beta (A - m)) to avoid cancellation."""
    return ruelle_eigenfunction(A.shifted(m), beta).pressure


@dataclass
class PressureReport:
    beta: float
    lam: float | None
    p_exact: float | None
    p_lower: float
    p_upper: float
    entropy_gap: float | None = None

    def to_json(self) -> dict:
        out = {
            "beta": self.beta,
            "lambda": self.lam,
            "p_lower": self.p_lower,
            "p_upper": self.p_upper,
            "entropy_gap": self.entropy_gap,
        }
        if self.p_exact is not None:
            out["p_exact"] = self.p_exact
        return out

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.p_lower + self.p_upper)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.p_upper - self.p_lower)


def pressure_bounds(u: FunctionField, lam: float, error_bound: float = 0.0) -> tuple[float, float]:
    """[(1 - lam) inf u, (1 - lam) sup u], widened by (1 - lam) * error_bound.

    ``error_bound`` is the sup-distance of ``u`` from the true fixed point
    (residual / (1 - lam) from the solve report).
    """
    pad = (1.0 - lam) * error_bound
    return (1.0 - lam) * u.inf() - pad, (1.0 - lam) * u.sup() + pad


def scaled_eigen_log(u: FunctionField, beta: float) -> FunctionField:
    """(u - sup u) / beta, the approximation of (1/beta) log phi_beta normalised to max 0."""
    if beta == 0:
        raise ValueError("beta must be nonzero")
    return u.replace((u.values - u.sup()) / beta, role="log-eigen/beta")


def theorem2_field(u: FunctionField, beta: float, lam: float, P: float) -> FunctionField:
    """(1/beta) (u - P / (1 - lam))."""
    return u.replace((u.values - P / (1.0 - lam)) / beta, role="(u - P/(1-lam))/beta")


def sandwich_check(
    b: FunctionField, u: FunctionField, beta: float, lam: float, d: int, slack: float = 0.0
) -> float:
    """Largest violation of b <= u / beta <= b + log d / (beta (1 - lam)), less ``slack``, floored at 0."""
    check_same_space(b.space, u.space)
    scaled = u.values / beta
    lower = b.values - scaled
    upper = scaled - b.values - math.log(d) / (beta * (1.0 - lam))
    raw = float(max(np.max(lower), np.max(upper)))
    return max(0.0, raw - slack)
