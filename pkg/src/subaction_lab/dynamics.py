"""State spaces: the expanding circle map x -> d x (mod 1) and the one-sided full shift.

Two concrete spaces carry functions in this package:

* :class:`CircleGrid` -- N equispaced samples i/N of the circle, with linear
  interpolation (wrapping from (N-1)/N back to 0) between samples.
* :class:`ShiftSpace` -- the full shift on ``d`` symbols seen through words of
  length ``k - 1``.  A locally constant potential of depth ``k`` only sees these
  states, and so do the discounted and Gibbs fixed points built from it.

Symbols are always ``0, ..., d-1``.  Words are indexed in base-d lexicographic
order, first symbol most significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def circle_distance(x, y):
    """Distance on R/Z, ``min(|x - y|, 1 - |x - y|)`` (vectorised)."""
    delta = np.abs(np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), 1.0))
    return np.minimum(delta, 1.0 - delta)


@dataclass(frozen=True)
class CircleMap:
    degree: int = 2

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 2:
            raise ValueError(f"degree must be an integer >= 2, got {self.degree!r}")

    def forward(self, x):
        """T(x) = d x mod 1."""
        out = np.mod(self.degree * np.asarray(x, dtype=float), 1.0)
        # guard against mod returning 1.0 for tiny negative round-off
        out = np.where(out >= 1.0, 0.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def inverse_branch(self, j: int, x):
        """The j-th inverse branch (x + j) / d, a contraction with ratio 1/d."""
        if not 0 <= j < self.degree:
            raise IndexError(f"branch index {j} out of range for degree {self.degree}")
        out = (np.asarray(x, dtype=float) + j) / self.degree
        return float(out) if np.ndim(out) == 0 else out

    def preimages(self, x) -> np.ndarray:
        return np.array([self.inverse_branch(j, x) for j in range(self.degree)])


@dataclass(frozen=True)
class CircleGrid:
    """Uniform sample grid i/N on the circle for a given map."""

    map: CircleMap
    n: int = 4096

    def __post_init__(self):
        if self.n < 2 or self.n % self.map.degree:
            raise ValueError(
                f"grid size must be >= 2 and a multiple of d={self.map.degree}, got {self.n}"
            )

    @property
    def d(self) -> int:
        return self.map.degree

    @property
    def size(self) -> int:
        return self.n

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def interpolation(self, x):
        """Left sample index, right sample index and fractional weight of ``x``."""
        pos = np.mod(np.asarray(x, dtype=float), 1.0) * self.n
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo = np.mod(lo, self.n)
        hi = np.mod(lo + 1, self.n)
        return lo, hi, frac

    def evaluate(self, values: np.ndarray, x):
        lo, hi, frac = self.interpolation(x)
        out = (1.0 - frac) * values[lo] + frac * values[hi]
        return float(out) if np.ndim(out) == 0 else out

    def forward_index(self) -> np.ndarray:
        """Index of T(i/N); exact because T maps the grid into itself."""
        return np.mod(self.d * np.arange(self.n), self.n)

    def preimage_points(self) -> np.ndarray:
        """Array of shape (N, d): entry [i, j] is tau_j(i/N)."""
        i = np.arange(self.n)[:, None]
        j = np.arange(self.d)[None, :]
        return (i + j * self.n) / (self.d * self.n)

    def describe(self) -> dict:
        return {"kind": "circle", "d": self.d, "n": self.n}


@dataclass(frozen=True)
class ShiftSpace:
    """Full shift on ``d`` symbols, seen through words of length ``k - 1``.

    Transition ``j -> i`` (forward in time, ``j`` is the state of y and ``i`` the
    state of T(y)) exists iff the last k-2 symbols of ``j`` equal the first k-2
    symbols of ``i``.  The word carried by the edge is ``j`` followed by the
    last symbol of ``i``.
    """

    d: int = 2
    k: int = 2
    _states: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"alphabet size must be >= 2, got {self.d}")
        if self.k < 2:
            raise ValueError(f"depth must be >= 2, got {self.k}")
        states = tuple(itertools.product(range(self.d), repeat=self.k - 1))
        object.__setattr__(self, "_states", states)

    @property
    def n_states(self) -> int:
        return self.d ** (self.k - 1)

    @property
    def size(self) -> int:
        return self.n_states

    @property
    def states(self) -> tuple:
        return self._states

    def index(self, word: Sequence[int]) -> int:
        idx = 0
        for s in word:
            if not 0 <= s < self.d:
                raise ValueError(f"symbol {s} outside alphabet of size {self.d}")
            idx = idx * self.d + int(s)
        return idx

    def state_of(self, sequence: Sequence[int]) -> int:
        """State (first k-1 symbols) of a sequence."""
        if len(sequence) < self.k - 1:
            raise ValueError(f"need at least {self.k - 1} symbols")
        return self.index(sequence[: self.k - 1])

    def transition_exists(self, j: int, i: int) -> bool:
        sj, si = self._states[j], self._states[i]
        return sj[1:] == si[:-1]

    def predecessor(self, i: int, symbol: int) -> int:
        """State of tau_symbol(x) when x has state ``i``: prepend, drop last."""
        if not 0 <= symbol < self.d:
            raise IndexError(f"symbol {symbol} out of range for alphabet {self.d}")
        return self.index((symbol,) + self._states[i][:-1])

    def successors(self, j: int) -> list[int]:
        tail = self._states[j][1:]
        return [self.index(tail + (s,)) for s in range(self.d)]

    def predecessor_table(self) -> np.ndarray:
        """Array (n_states, d): entry [i, a] is the state of tau_a applied to state i."""
        return np.array(
            [[self.predecessor(i, a) for a in range(self.d)] for i in range(self.n_states)],
            dtype=np.int64,
        )

    def edge_word(self, j: int, i: int) -> int:
        """Index of the length-k word carried by the transition j -> i."""
        if not self.transition_exists(j, i):
            raise ValueError(f"no transition {j} -> {i}")
        return j * self.d + self._states[i][-1]

    def label(self, i: int) -> str:
        return word_label(self._states[i], self.d)

    def describe(self) -> dict:
        return {"kind": "shift", "d": self.d, "k": self.k}


def word_label(word: Sequence[int], d: int) -> str:
    sep = "" if d <= 10 else ","
    return sep.join(str(int(s)) for s in word)


def parse_word_label(label: str, d: int) -> tuple[int, ...]:
    parts = label.split(",") if d > 10 else list(label)
    return tuple(int(p) for p in parts)


@dataclass(frozen=True, eq=False)
class FunctionField:
    """A real function on a :class:`CircleGrid` or :class:`ShiftSpace`.

    ``role`` tags what the values represent ("b", "U", "u", "u*", "V", "A", ...);
    ``lam`` and ``beta`` record the parameters it was computed at, when any.
    """

    values: np.ndarray
    space: CircleGrid | ShiftSpace
    role: str = ""
    lam: float | None = None
    beta: float | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.space.size,):
            raise ValueError(
                f"expected {self.space.size} values for {self.space.describe()}, got {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def evaluate(self, x):
        """Value at a circle point (interpolated) or at a shift state index."""
        if isinstance(self.space, CircleGrid):
            return self.space.evaluate(self.values, x)
        return self.values[x]

    def sup(self) -> float:
        return float(np.max(self.values))

    def inf(self) -> float:
        return float(np.min(self.values))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def distance(self, other: "FunctionField") -> float:
        """Sup-distance between two fields on the same space."""
        check_same_space(self.space, other.space)
        return float(np.max(np.abs(self.values - other.values)))

    def replace(self, values, role: str | None = None, **kwargs) -> "FunctionField":
        return FunctionField(
            values=values,
            space=self.space,
            role=self.role if role is None else role,
            lam=kwargs.get("lam", self.lam),
            beta=kwargs.get("beta", self.beta),
            lipschitz=kwargs.get("lipschitz", self.lipschitz),
        )

    def to_dict(self) -> dict:
        out = {"role": self.role, "space": self.space.describe(), "values": self.values.tolist()}
        if self.lam is not None:
            out["lambda"] = self.lam
        if self.beta is not None:
            out["beta"] = self.beta
        return out


def check_same_space(a, b) -> None:
    if a != b:
        raise ValueError(f"mismatched state spaces: {a.describe()} vs {b.describe()}")
