"""Discounted subaction b_lambda: b(x) = max_{T y = x} [lambda b(y) + A(y)].

Value iteration from b = 0, realizers (greedy backward orbits attaining the
max), occupational measures along realizers, and the normalisation
U_lambda = b_lambda - m / (1 - lambda).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .dynamics import CircleGrid, FunctionField, ShiftSpace, check_same_space
from .potentials import (
    AnalyticPotential,
    WordPotential,
    build_stencil,
    potential_lipschitz,
    potential_sup_abs,
    space_of,
)

logger = logging.getLogger(__name__)

# Newton steps below this multiple of |u| are float noise
EPS = float(np.finfo(float).eps)
FLOAT_FLOOR = 8.0 * EPS


def stagnation_window(lam: float) -> int:
    """Steps within which a lam-contraction must halve its step size: ceil(2 / (1 - lam)) + 10."""
    return int(math.ceil(2.0 / (1.0 - lam))) + 10


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration hits its cap; carries the partial result."""

    def __init__(self, message: str, field: FunctionField, report: "SolveReport"):
        super().__init__(message)
        self.field = field
        self.report = report


@dataclass(frozen=True)
class DiscountParams:
    lam: float
    tol: float = 1e-10
    max_iter: int = 50_000_000

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.tol > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")


@dataclass
class SolveReport:
    lam: float
    iterations: int
    residual_sup: float
    m_estimate: float | None = None
    interpolation_slack: float = 0.0
    beta: float | None = None
    converged: bool = True
    method: str = "value-iteration"
    notes: list[str] = field(default_factory=list)
    # sup |field|; the residual is only known up to a few ulps of it
    value_scale: float = 0.0

    @property
    def error_bound(self) -> float:
        """Bound on the sup-distance to the true fixed point: residual / (1 - lambda).

        The residual is widened by 4 ulps of the field magnitude, the rounding
        incurred when it is evaluated in floating point.
        """
        return (self.residual_sup + 4.0 * EPS * self.value_scale) / (1.0 - self.lam)

    def to_json(self) -> dict:
        out = {
            "lambda": self.lam,
            "iterations": self.iterations,
            "residual_sup": self.residual_sup,
            "m_estimate": self.m_estimate,
            "interpolation_slack": self.interpolation_slack,
        }
        if self.beta is not None:
            out["beta"] = self.beta
        return out


def _stencil_for(b: FunctionField, A):
    if isinstance(A, FunctionField):
        check_same_space(b.space, A.space)
    elif isinstance(A, WordPotential):
        check_same_space(b.space, A.shift)
    elif not isinstance(b.space, CircleGrid):
        raise ValueError("analytic potentials need a circle grid field")
    return build_stencil(b.space, A)


def bellman_operator(b: FunctionField, lam: float, A, stencil=None) -> FunctionField:
    """One application of b -> max_j [lam * b(tau_j x) + A(tau_j x)]."""
    st = stencil or _stencil_for(b, A)
    z = lam * st.pull(b.values) + st.weight
    return b.replace(z.max(axis=1), role="B(b)", lam=lam)


def interpolation_slack(A, space) -> float:
    """Per-application interpolation error allowance Lip(A) d / ((d - 1) N) on grids."""
    if isinstance(space, ShiftSpace):
        return 0.0
    lip = potential_lipschitz(A) or 0.0
    return lip * space.d / ((space.d - 1) * space.n)


def solve_subaction(A, params: DiscountParams, space=None) -> tuple[FunctionField, SolveReport]:
    """Fixed point of the discounted Bellman operator by value iteration from zero.

    Stops when the successive sup-distance is <= tol (1 - lam) / lam, so the
    residual of the returned field is <= tol (1 - lam).  If float resolution of
    |b| is reached first the iteration stops there and the report says so.
    """
    space = space or space_of(A)
    st = build_stencil(space, A)
    lam = params.lam
    threshold = params.tol * (1.0 - lam) / lam
    values, iters, delta, hit = _kernels.iterate(
        0, np.zeros(space.size), lam, 1.0, st.lo, st.hi, st.frac, st.weight,
        threshold, stagnation_window(lam), params.max_iter,
    )
    b = FunctionField(values, space, role="b", lam=lam)
    residual = float(np.max(np.abs(bellman_operator(b, lam, A, st).values - values)))
    report = SolveReport(
        lam=lam,
        iterations=int(iters),
        residual_sup=residual,
        m_estimate=(1.0 - lam) * b.inf(),
        interpolation_slack=interpolation_slack(A, space),
        value_scale=b.sup_norm(),
    )
    if not hit:
        if iters >= params.max_iter:
            report.converged = False
            raise ConvergenceError(
                f"value iteration did not converge in {iters} iterations (last step {delta:.3e})",
                b, report,
            )
        report.notes.append("stopped at float resolution before the requested threshold")
        logger.info("lambda=%g: stopped at float floor, residual %.3e", lam, residual)
    return b, report


# --------------------------------------------------------------------------- realizers


@dataclass(frozen=True)
class Realizer:
    """Greedy backward orbit: ``orbit[n]`` is tau_{a_n} ... tau_{a_0}(base)."""

    base: float | int
    symbols: tuple[int, ...]
    orbit: tuple
    space: CircleGrid | ShiftSpace
    preperiod: int | None = None
    period: int | None = None

    @property
    def periodic(self) -> bool:
        return self.period is not None


def potential_at(A, x):
    """A at a circle point."""
    if isinstance(A, FunctionField):
        return A.evaluate(x)
    return A(x)


def _branch_scores(b: FunctionField, A, lam: float, z):
    space = b.space
    if isinstance(space, ShiftSpace):
        preds = [space.predecessor(z, a) for a in range(space.d)]
        scores = [lam * b.values[p] + A.edge(p, z) for p in preds]
        return preds, scores
    preds = [space.map.inverse_branch(a, z) for a in range(space.d)]
    scores = [lam * b.evaluate(p) + potential_at(A, p) for p in preds]
    return preds, scores


def _argmax_smallest(scores: Sequence[float], tie_tol: float) -> int:
    best = max(scores)
    cut = best - tie_tol * max(1.0, abs(best))
    return next(a for a, s in enumerate(scores) if s >= cut)


def greedy_realizer(
    b: FunctionField, A, lam: float, y, depth: int | None = None, tie_tol: float = 1e-12
) -> Realizer:
    """Follow the branch maximising lam b(tau_j z) + A(tau_j z); ties go to the smallest j.

    On shift spaces the walk stops just before the first repeated state unless
    ``depth`` asks for more, and the (preperiod, period) of the atom sequence is
    recorded.  On the circle ``depth`` defaults to the smallest K with
    lam**K < 1e-12.
    """
    space = b.space
    symbolic = isinstance(space, ShiftSpace)
    if depth is not None:
        limit = depth
    elif symbolic:
        limit = space.n_states + 1  # pigeonhole: some state repeats by then
    else:
        limit = truncation_depth(lam, 1e-12)
    symbols, orbit = [], []
    first_seen: dict = {}
    preperiod = period = None
    z = y
    while len(orbit) < limit:
        preds, scores = _branch_scores(b, A, lam, z)
        a = _argmax_smallest(scores, tie_tol)
        z = preds[a]
        if symbolic and period is None:
            if z in first_seen:
                preperiod = first_seen[z]
                period = len(orbit) - preperiod
                if depth is None:
                    break
            else:
                first_seen[z] = len(orbit)
        symbols.append(a)
        orbit.append(z)
    return Realizer(y, tuple(symbols), tuple(orbit), space, preperiod, period)


def truncation_depth(lam: float, tol: float) -> int:
    """Smallest K with lam**K < tol."""
    k = int(math.floor(math.log(tol) / math.log(lam))) + 1
    while lam**k >= tol:
        k += 1
    while k > 1 and lam ** (k - 1) < tol:
        k -= 1
    return k


# ----------------------------------------------------------------- occupational measures


@dataclass(frozen=True)
class OccupationalMeasure:
    """Geometric-weight probability on a realizer's backward orbit.

    ``atoms`` are (point, mass) pairs, merged per point.  ``edges`` are
    (point, image, mass) triples where ``image`` is T(point) along the orbit;
    they carry what is needed to integrate w o T and potentials on shifts.
    """

    atoms: tuple
    edges: tuple
    tail: float
    lam: float
    exact: bool
    space: CircleGrid | ShiftSpace

    @property
    def total_mass(self) -> float:
        return math.fsum(m for _, m in self.atoms)

    def error_bound(self, w) -> float:
        """Truncation error of :func:`integrate` for ``w``: tail * sup |w|."""
        return self.tail * _sup_abs(w)


def _sup_abs(w) -> float:
    if isinstance(w, FunctionField):
        return w.sup_norm()
    if isinstance(w, (WordPotential, AnalyticPotential)):
        return w.sup_abs()
    return float(np.max(np.abs(w)))


def occupational_measure(r: Realizer, lam: float, tol: float = 1e-12) -> OccupationalMeasure:
    """mu = (1 - lam) sum_n lam**n delta_{orbit[n]}.

    Eventually periodic realizers on shift spaces give the exact closed form
    (geometric series per cycle position, zero tail); otherwise the first K
    atoms with lam**K < tol are kept and lam**K is recorded as tail mass.
    """
    space = r.space
    if r.periodic and isinstance(space, ShiftSpace):
        return _periodic_measure(r, lam, space)
    k = truncation_depth(lam, tol)
    if len(r.orbit) < k:
        raise ValueError(
            f"realizer has depth {len(r.orbit)} but {k} steps are needed for tail < {tol}"
        )
    edges = []
    for n in range(k):
        image = r.base if n == 0 else r.orbit[n - 1]
        edges.append((r.orbit[n], image, (1.0 - lam) * lam**n))
    return OccupationalMeasure(_merge(edges), tuple(edges), lam**k, lam, False, space)


def _periodic_measure(r: Realizer, lam: float, space) -> OccupationalMeasure:
    p, q = r.preperiod, r.period
    orbit = r.orbit
    edges = []
    for n in range(p):
        image = r.base if n == 0 else orbit[n - 1]
        edges.append((orbit[n], image, (1.0 - lam) * lam**n))
    geo = 1.0 / (1.0 - lam**q)
    first_image = r.base if p == 0 else orbit[p - 1]
    edges.append((orbit[p], first_image, (1.0 - lam) * lam**p))
    edges.append((orbit[p], orbit[p + q - 1], (1.0 - lam) * lam ** (p + q) * geo))
    for t in range(1, q):
        edges.append((orbit[p + t], orbit[p + t - 1], (1.0 - lam) * lam ** (p + t) * geo))
    return OccupationalMeasure(_merge(edges), tuple(edges), 0.0, lam, True, space)


def _merge(edges) -> tuple:
    mass: dict = {}
    for point, _, m in edges:
        mass[point] = mass.get(point, 0.0) + m
    return tuple(mass.items())


def _pointwise(w, space, points):
    if isinstance(w, FunctionField):
        return np.array([w.evaluate(p) for p in points], dtype=float)
    if isinstance(w, AnalyticPotential) or callable(w):
        return np.array([w(p) for p in points], dtype=float)
    arr = np.asarray(w, dtype=float)
    return arr[np.asarray(points, dtype=int)]


def integrate(mu: OccupationalMeasure, w) -> float:
    """Sum of mass * w(point).

    ``w`` may be a field, an array over states, a callable on circle points or,
    on shift spaces, a :class:`WordPotential` (evaluated on the point's edge).
    """
    if isinstance(w, WordPotential):
        return math.fsum(m * w.edge(p, img) for p, img, m in mu.edges)
    points = [p for p, _ in mu.atoms]
    vals = _pointwise(w, mu.space, points)
    return math.fsum(m * v for (_, m), v in zip(mu.atoms, vals))


def integrate_pushforward(mu: OccupationalMeasure, w) -> float:
    """Integral of w o T, using the orbit images recorded on the measure's edges."""
    images = [img for _, img, _ in mu.edges]
    vals = _pointwise(w, mu.space, images)
    return math.fsum(m * v for (_, _, m), v in zip(mu.edges, vals))


# ------------------------------------------------------------------ sums and normalisation


def discounted_sum(A, lam: float, x, symbols: Sequence[int], depth: int | None = None, space=None):
    """Partial sum of lam**n A(tau_{a_n} ... tau_{a_0} x) over n < depth, and its tail bound."""
    depth = len(symbols) if depth is None else depth
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if len(symbols) < depth:
        raise ValueError(f"need {depth} symbols, got {len(symbols)}")
    space = space or space_of(A)
    terms = []
    z = x
    for n in range(depth):
        a = symbols[n]
        if isinstance(space, ShiftSpace):
            p = space.predecessor(z, a)
            terms.append(lam**n * A.edge(p, z))
        else:
            p = space.map.inverse_branch(a, z)
            terms.append(lam**n * potential_at(A, p))
        z = p
    tail = lam**depth * potential_sup_abs(A) / (1.0 - lam)
    return math.fsum(terms), tail


def estimate_m(b: FunctionField, lam: float) -> float:
    """(1 - lam) inf b, which tends to m(A) as lam -> 1."""
    return (1.0 - lam) * b.inf()


def estimate_m_staged(A, lams=(0.9, 0.99, 0.999), tol: float = 1e-10, space=None):
    """m(A) estimates at increasing lam, with successive differences as error indicator."""
    estimates = []
    for lam in lams:
        b, _ = solve_subaction(A, DiscountParams(lam, tol), space)
        estimates.append(estimate_m(b, lam))
    diffs = [abs(b2 - b1) for b1, b2 in zip(estimates, estimates[1:])]
    return estimates[-1], estimates, diffs


def normalized_subaction(b: FunctionField, m: float, lam: float) -> FunctionField:
    """U_lam = b - m / (1 - lam)."""
    return b.replace(b.values - m / (1.0 - lam), role="U", lam=lam)


def solve_normalized(A, m: float, params: DiscountParams, space=None) -> tuple[FunctionField, SolveReport]:
    """U_lam computed directly as the fixed point for the potential A - m.

    Same field as ``normalized_subaction(solve_subaction(A)[0], m, lam)``, but
    the iterates stay O(1) instead of O(1 / (1 - lam)), so the float floor is
    far lower when lam is close to 1.
    """
    if isinstance(A, FunctionField):
        shifted = A.replace(A.values - m)
    else:
        shifted = A.shifted(m)
    b, report = solve_subaction(shifted, params, space)
    return b.replace(b.values, role="U"), report
