"""Exact ergodic-optimisation ground truth for locally constant potentials on full shifts.

On the de Bruijn graph of states, with edge weights W(j, i) = A(j -> i):

* m(A) is the maximum cycle mean (Karp);
* the Mane potential S(i, x) is the best path weight from i to x under W - m,
  i.e. the max-plus closure sum_{n >= 1} (W - m)^n;
* maximizing measures are convex combinations of simple cycles of mean m;
* V(x) = max over those cycles C of mean_{i in C} S(i, x).

A finite-depth lower bound for S on the circle and checkers for
(calibrated) subactions on either kind of space are also here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import CircleGrid, FunctionField, ShiftSpace, circle_distance, check_same_space
from .potentials import AnalyticPotential, WordPotential, build_stencil

logger = logging.getLogger(__name__)

CYCLE_TOL = 1e-9
CYCLE_CAP = 10_000
NEG_INF = "-inf"


def _encode(x: float):
    return NEG_INF if x == -math.inf else float(x)


def _decode(x) -> float:
    return -math.inf if x == NEG_INF else float(x)


@dataclass(frozen=True, eq=False)
class MaxPlusMatrix:
    """Square matrix over R u {-inf}; entry [j, i] is the weight of j -> i."""

    weights: np.ndarray
    shift: ShiftSpace | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def to_json(self) -> list:
        return [[_encode(v) for v in row] for row in self.weights]

    @classmethod
    def from_json(cls, rows, shift=None) -> "MaxPlusMatrix":
        return cls(np.array([[_decode(v) for v in row] for row in rows], dtype=float), shift)


def maxplus_matmul(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.max(X[:, :, None] + Y[None, :, :], axis=1)


def transition_weights(A: WordPotential) -> MaxPlusMatrix:
    return MaxPlusMatrix(A.edge_matrix(), A.shift)


def karp_max_cycle_mean(W: np.ndarray) -> float:
    """Maximum mean weight over all cycles (Karp, with a zero-weight super source)."""
    n = W.shape[0]
    D = np.full((n + 1, n), -np.inf)
    D[0] = 0.0
    for t in range(1, n + 1):
        D[t] = np.max(D[t - 1][:, None] + W, axis=0)
    best = -math.inf
    for v in range(n):
        if not np.isfinite(D[n, v]):
            continue
        worst = math.inf
        for t in range(n):
            if np.isfinite(D[t, v]):
                worst = min(worst, (D[n, v] - D[t, v]) / (n - t))
        best = max(best, worst)
    return best


@dataclass(frozen=True)
class CycleMeasure:
    """Uniform measure on the periodic orbit following a simple cycle of states."""

    nodes: tuple[int, ...]
    mean: float
    entropy: float = 0.0

    def distribution(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[list(self.nodes)] = 1.0 / len(self.nodes)
        return out

    def integrate(self, w) -> float:
        values = w.values if isinstance(w, FunctionField) else np.asarray(w, dtype=float)
        return math.fsum(values[i] for i in self.nodes) / len(self.nodes)

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "mean": self.mean, "entropy": self.entropy}


@dataclass(frozen=True)
class CycleMeanResult:
    m: float
    cycles: list
    capped: bool


def _check_rows(W: np.ndarray) -> None:
    dead = [j for j in range(W.shape[0]) if not np.any(np.isfinite(W[j]))]
    if dead:
        raise ValueError(f"nodes {dead} have no finite outgoing edge")


def max_cycle_mean(W: MaxPlusMatrix, tol: float = CYCLE_TOL) -> CycleMeanResult:
    """Karp's maximum cycle mean together with every simple cycle attaining it (within tol)."""
    _check_rows(W.weights)
    m = karp_max_cycle_mean(W.weights)
    cycles, capped = _optimal_cycles(W, m, tol)
    if cycles:
        # the mean of a shortest optimal cycle carries the least rounding (exact for loops)
        m = min(cycles, key=lambda c: len(c.nodes)).mean
    return CycleMeanResult(m, cycles, capped)


def simple_cycles(adjacency: list[list[int]], cap: int = CYCLE_CAP) -> tuple[list[tuple[int, ...]], bool]:
    """All simple cycles, each listed once starting from its smallest node."""
    n = len(adjacency)
    found: list[tuple[int, ...]] = []
    for start in range(n):
        stack = [(start, iter(adjacency[start]))]
        path = [start]
        on_path = {start}
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt == start:
                found.append(tuple(path))
                if len(found) >= cap:
                    return found, True
            elif nxt > start and nxt not in on_path:
                path.append(nxt)
                on_path.add(nxt)
                stack.append((nxt, iter(adjacency[nxt])))
    return found, False


def _optimal_cycles(W: MaxPlusMatrix, m: float, tol: float):
    S = mane_matrix(W, m).values
    Wm = W.weights - m
    n = W.n
    # edge j -> i lies on a cycle of mean m iff (W - m)(j, i) + S(i, j) = 0
    adjacency = [
        [i for i in range(n) if np.isfinite(Wm[j, i]) and Wm[j, i] + S[i, j] >= -tol]
        for j in range(n)
    ]
    raw, capped = simple_cycles(adjacency)
    if capped:
        logger.warning("cycle enumeration hit the cap of %d cycles", CYCLE_CAP)
    cycles = []
    for nodes in raw:
        q = len(nodes)
        total = math.fsum(W.weights[nodes[t], nodes[(t + 1) % q]] for t in range(q))
        mean = total / q
        if mean >= m - tol:
            cycles.append(CycleMeasure(nodes, mean))
    return cycles, capped


@dataclass(frozen=True, eq=False)
class ManeMatrix:
    """S[i, j]: best weight of a path i -> j of length >= 1 under W - m."""

    values: np.ndarray
    m: float
    shift: ShiftSpace | None = None

    def to_json(self) -> dict:
        return {"m": self.m, "S": [[_encode(v) for v in row] for row in self.values]}

    @classmethod
    def from_json(cls, data: dict, shift=None) -> "ManeMatrix":
        vals = np.array([[_decode(v) for v in row] for row in data["S"]], dtype=float)
        return cls(vals, float(data["m"]), shift)


def mane_matrix(W: MaxPlusMatrix, m: float, improve_tol: float = 1e-12) -> ManeMatrix:
    """Max-plus closure of W - m by repeated products until nothing improves.

    Paths of length <= n + 1 already contain every simple path and cycle, so an
    improvement after that many products means some cycle has positive weight,
    i.e. ``m`` is below the maximum cycle mean.
    """
    Wm = W.weights - m
    S = Wm.copy()
    n = W.n
    for step in range(n + 2):
        nxt = np.maximum(S, maxplus_matmul(S, Wm))
        with np.errstate(invalid="ignore"):
            gain = np.where(np.isfinite(nxt) & ~np.isfinite(S), np.inf, nxt - S)
        gain = np.nan_to_num(gain, nan=0.0)
        S = nxt
        if float(np.max(gain)) <= improve_tol:
            return ManeMatrix(S, m, W.shift)
    raise ValueError(f"positive cycle under W - m: m={m} is below the maximum cycle mean")


def maximizing_cycle_measures(W: MaxPlusMatrix, m: float, tol: float = CYCLE_TOL) -> list:
    return _optimal_cycles(W, m, tol)[0]


def aubry_support(cycles) -> list[int]:
    return sorted({i for c in cycles for i in c.nodes})


def compute_V(S: ManeMatrix, cycles, shift: ShiftSpace | None = None) -> FunctionField:
    """V(x) = max over optimal simple cycles C of mean_{i in C} S(i, x)."""
    if not cycles:
        raise ValueError("compute_V needs at least one maximizing cycle")
    shift = shift or S.shift
    rows = [S.values[list(c.nodes)].mean(axis=0) for c in cycles]
    return FunctionField(np.max(rows, axis=0), shift, role="V")


def critical_entropy(W: MaxPlusMatrix, m: float, tol: float = CYCLE_TOL) -> float:
    """Largest entropy among maximizing measures: log spectral radius of the graph of optimal edges.

    0 when the optimal edges form disjoint simple cycles; log d for constant potentials.
    """
    S = mane_matrix(W, m).values
    Wm = W.weights - m
    with np.errstate(invalid="ignore"):
        tight = np.isfinite(Wm) & (Wm + S.T >= -tol)
    adj = tight.astype(float)
    if not adj.any():
        return 0.0
    rho = max(abs(np.linalg.eigvals(adj)))
    return float(math.log(rho)) if rho > 1.0 + 1e-12 else 0.0


@dataclass
class Oracle:
    """Exact objects for a word potential, computed once."""

    W: MaxPlusMatrix
    m: float
    cycles: list
    capped: bool
    S: ManeMatrix
    V: FunctionField

    @property
    def aubry(self) -> list[int]:
        return aubry_support(self.cycles)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "W": self.W.to_json(),
            "mane": self.S.to_json(),
            "cycles": [c.to_json() for c in self.cycles],
            "cycle_cap_hit": self.capped,
            "aubry_support": self.aubry,
            "V": self.V.values.tolist(),
        }


def symbolic_oracle(A: WordPotential) -> Oracle:
    W = transition_weights(A)
    res = max_cycle_mean(W)
    S = mane_matrix(W, res.m)
    return Oracle(W, res.m, res.cycles, res.capped, S, compute_V(S, res.cycles, A.shift))


# ------------------------------------------------------------------------- circle side


def mane_grid(A, m: float, y: float, x: float, depth: int, eps: float, d: int = 2) -> float:
    """Lower bound for S(y, x) on the circle from a finite preimage tree.

    Max over n <= depth and over all y' with T^n y' = x and dist(y', y) <= eps of
    the Birkhoff sum of A - m along y', T y', ..., T^{n-1} y'.  Returns -inf
    when no branch enters the eps-ball.
    """
    if depth > 24:
        raise ValueError(f"depth {depth} exceeds the cap of 24")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    evaluate = A.evaluate if isinstance(A, FunctionField) else A
    branches = np.arange(d)

    def expand(pts, acc):
        pts = ((pts[:, None] + branches[None, :]) / d).ravel()
        return pts, np.repeat(acc, d) + (np.asarray(evaluate(pts)) - m)

    def best_in_ball(pts, acc, current):
        hit = circle_distance(pts, y) <= eps
        return max(current, float(acc[hit].max())) if hit.any() else current

    best = -math.inf
    # walk the first levels breadth-first, then finish each subtree separately
    # so no level holds more than d**18 points
    split = max(0, depth - 18)
    pts, acc = np.array([float(x)]), np.zeros(1)
    for _ in range(split):
        pts, acc = expand(pts, acc)
        best = best_in_ball(pts, acc, best)
    for root, base in zip(pts, acc):
        sub_pts, sub_acc = np.array([root]), np.array([base])
        for _ in range(split, depth):
            sub_pts, sub_acc = expand(sub_pts, sub_acc)
            best = best_in_ball(sub_pts, sub_acc, best)
    return best


def circle_periodic_max(A, d: int = 2, max_period: int = 12):
    """Best mean of A over periodic orbits of x -> d x mod 1 with period <= max_period.

    Points of period p are k / (d^p - 1); the orbit is computed in integers.
    Returns (best mean, orbit points).
    """
    evaluate = A.evaluate if isinstance(A, FunctionField) else A
    best, best_orbit = -math.inf, None
    for p in range(1, max_period + 1):
        q = d**p - 1
        ks = np.arange(q, dtype=np.int64)
        orbit = np.empty((p, q), dtype=np.int64)
        orbit[0] = ks
        for j in range(1, p):
            orbit[j] = (orbit[j - 1] * d) % q
        means = np.asarray(evaluate(orbit / q)).mean(axis=0)
        idx = int(np.argmax(means))
        if means[idx] > best + 1e-15:
            best, best_orbit = float(means[idx]), orbit[:, idx] / q
    return best, best_orbit


# ---------------------------------------------------------------------------- checkers


def check_subaction(D: FunctionField, A, m: float) -> float:
    """max_x (A(x) + D(x) - m - D(T x))^+."""
    if isinstance(D.space, ShiftSpace):
        check_same_space(D.space, A.shift)
        W = A.edge_matrix()
        with np.errstate(invalid="ignore"):
            gap = W + D.values[:, None] - m - D.values[None, :]
        gap = np.where(np.isfinite(W), gap, -np.inf)
        return max(0.0, float(np.max(gap)))
    grid: CircleGrid = D.space
    pts = grid.points
    a_vals = A.evaluate(pts) if isinstance(A, FunctionField) else np.asarray(A(pts))
    gap = a_vals + D.values - m - D.values[grid.forward_index()]
    return max(0.0, float(np.max(gap)))


def check_calibrated(D: FunctionField, A, m: float) -> float:
    """max_x |D(x) - max_{T y = x} (A(y) + D(y) - m)|."""
    st = build_stencil(D.space, A)
    best = np.max(st.weight + st.pull(D.values), axis=1) - m
    return float(np.max(np.abs(D.values - best)))
