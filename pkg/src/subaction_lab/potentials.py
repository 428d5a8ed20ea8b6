"""Potentials A: locally constant tables on a full shift, or Lipschitz functions on S^1.

Convention for words: the weight of the transition j -> i (j the state of y,
i the state of T(y)) is A evaluated on the length-k word "j then last symbol
of i".  For k = 2 this is A(y_0, y_1): the appended (preimage) symbol is read
first.  Every module in the package uses this single convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (
    CircleGrid,
    CircleMap,
    FunctionField,
    ShiftSpace,
    check_same_space,
    parse_word_label,
    word_label,
)


@dataclass(frozen=True, eq=False)
class WordPotential:
    shift: ShiftSpace
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        expected = self.shift.d ** self.shift.k
        if table.shape != (expected,):
            raise ValueError(f"table needs {expected} entries, got shape {table.shape}")
        if not np.all(np.isfinite(table)):
            raise ValueError("potential table must be finite on every word")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def d(self) -> int:
        return self.shift.d

    @property
    def k(self) -> int:
        return self.shift.k

    def value(self, word: Sequence[int]) -> float:
        if len(word) != self.k:
            raise ValueError(f"word must have length {self.k}")
        return float(self.table[self.shift.index(word)])

    def __call__(self, sequence: Sequence[int]) -> float:
        """A at a sequence; only the first k symbols matter."""
        return self.value(tuple(sequence[: self.k]))

    def edge(self, j: int, i: int) -> float:
        return float(self.table[self.shift.edge_word(j, i)])

    def edge_matrix(self) -> np.ndarray:
        """Weights W[j, i] of transitions j -> i, ``-inf`` where none exists."""
        n = self.shift.n_states
        out = np.full((n, n), -np.inf)
        for j in range(n):
            for i in self.shift.successors(j):
                out[j, i] = self.table[self.shift.edge_word(j, i)]
        return out

    def shifted(self, c: float) -> "WordPotential":
        return WordPotential(self.shift, self.table - c)

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.table)))

    def to_json(self) -> dict:
        words = [
            word_label(w, self.d) for w in np.ndindex(*(self.d,) * self.k)
        ]
        return {
            "d": self.d,
            "k": self.k,
            "table": {w: float(v) for w, v in zip(words, self.table)},
        }

    @classmethod
    def from_json(cls, data: dict) -> "WordPotential":
        d, k = int(data["d"]), int(data["k"])
        shift = ShiftSpace(d, k)
        table = np.full(d**k, np.nan)
        for label, value in data["table"].items():
            word = parse_word_label(label, d)
            if len(word) != k:
                raise ValueError(f"word {label!r} does not have length {k}")
            table[shift.index(word)] = float(value)
        if np.isnan(table).any():
            raise ValueError("potential table is not total: some words are missing")
        return cls(shift, table)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "WordPotential":
        return cls.from_json(json.loads(Path(path).read_text()))


FAMILIES = ("cosine", "piecewise-linear", "constant")


@dataclass(frozen=True)
class AnalyticPotential:
    """Closed-form Lipschitz potential on the circle.

    cosine:            amplitude * cos(2 pi x)
    piecewise-linear:  -slope * dist(x, peak)
    constant:          value

    minus ``offset`` in every case.
    """

    family: str
    amplitude: float = 1.0
    slope: float = 1.0
    peak: float = 0.0
    value: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "cosine":
            out = self.amplitude * np.cos(2.0 * np.pi * x)
        elif self.family == "piecewise-linear":
            delta = np.abs(np.mod(x - self.peak, 1.0))
            out = -self.slope * np.minimum(delta, 1.0 - delta)
        else:
            out = np.full(x.shape, float(self.value))
        if self.offset:
            out = out - self.offset
        return float(out) if out.ndim == 0 else out

    def shifted(self, c: float) -> "AnalyticPotential":
        return replace(self, offset=self.offset + c)

    @property
    def lipschitz(self) -> float:
        if self.family == "cosine":
            return 2.0 * math.pi * abs(self.amplitude)
        if self.family == "piecewise-linear":
            return abs(self.slope)
        return 0.0

    def sup_abs(self) -> float:
        """sup |A|; an upper bound once an offset is present."""
        if self.family == "cosine":
            base = abs(self.amplitude)
        elif self.family == "piecewise-linear":
            base = abs(self.slope) / 2.0
        else:
            base = abs(self.value)
        return base + abs(self.offset)


def sample_to_grid(pot: AnalyticPotential, n: int, d: int = 2) -> FunctionField:
    """Sample ``pot`` at i/N on a grid for the degree-d map."""
    if n < 2 or n % d:
        raise ValueError(f"sample count must be >= 2 and a multiple of d={d}, got {n}")
    grid = CircleGrid(CircleMap(d), n)
    return FunctionField(pot(grid.points), grid, role="A", lipschitz=pot.lipschitz)


def example_potential() -> WordPotential:
    """The two-symbol, two-coordinate potential with A(1,1)=A(2,2)=0, A(1,2)=-5, A(2,1)=-3.

    Symbols 1, 2 are stored as 0, 1.
    """
    shift = ShiftSpace(2, 2)
    table = np.zeros(4)
    table[shift.index((0, 1))] = -5.0
    table[shift.index((1, 0))] = -3.0
    return WordPotential(shift, table)


def constant_potential(c: float, d: int = 2, k: int = 2) -> WordPotential:
    return WordPotential(ShiftSpace(d, k), np.full(d**k, float(c)))


def random_word_potential(
    seed: int, d: int = 2, k: int = 2, low: float = -1.0, high: float = 0.0
) -> WordPotential:
    """Seeded uniform table on [low, high] per word."""
    rng = np.random.default_rng(seed)
    return WordPotential(ShiftSpace(d, k), rng.uniform(low, high, size=d**k))


def potential_sup_abs(A) -> float:
    if isinstance(A, FunctionField):
        return A.sup_norm()
    return A.sup_abs()


def potential_lipschitz(A) -> float | None:
    if isinstance(A, AnalyticPotential):
        return A.lipschitz
    if isinstance(A, FunctionField):
        return A.lipschitz
    return None


@dataclass(frozen=True, eq=False)
class Stencil:
    """Preimage structure of a space together with A evaluated at the preimages.

    Row i, column a describes tau_a(x_i): its value under a field ``f`` is
    ``(1 - frac) f[lo] + frac f[hi]`` and the potential there is ``weight``.
    On shift spaces ``frac`` is zero and ``lo`` is the predecessor state.
    """

    space: CircleGrid | ShiftSpace
    lo: np.ndarray
    hi: np.ndarray
    frac: np.ndarray
    weight: np.ndarray
    exact: bool = field(default=True)

    def pull(self, values: np.ndarray) -> np.ndarray:
        """Field values at all preimages, shape (n, d)."""
        if self.exact:
            return values[self.lo]
        return (1.0 - self.frac) * values[self.lo] + self.frac * values[self.hi]


def build_stencil(space, A) -> Stencil:
    if isinstance(space, ShiftSpace):
        if not isinstance(A, WordPotential):
            raise TypeError("shift spaces need a WordPotential")
        check_same_space(space, A.shift)
        lo = space.predecessor_table()
        weight = np.empty(lo.shape)
        for i in range(space.n_states):
            for a in range(space.d):
                weight[i, a] = A.table[space.edge_word(lo[i, a], i)]
        return Stencil(space, lo, lo, np.zeros(lo.shape), weight, exact=True)

    if isinstance(A, WordPotential):
        raise TypeError("a WordPotential lives on a shift space, not on the circle")
    pts = space.preimage_points()
    lo, hi, frac = space.interpolation(pts)
    if isinstance(A, FunctionField):
        check_same_space(space, A.space)
        weight = A.evaluate(pts)
    else:
        weight = np.asarray(A(pts), dtype=float)
    exact = bool(np.all(frac == 0.0))
    return Stencil(space, lo, hi, frac, weight, exact=exact)


def space_of(A, grid_n: int = 4096, d: int = 2):
    """The natural state space for a potential."""
    if isinstance(A, WordPotential):
        return A.shift
    if isinstance(A, FunctionField):
        return A.space
    return CircleGrid(CircleMap(d), grid_n)


def load_system(name: str, d: int = 2, k: int = 2):
    """Resolve a system name to a potential.

    ``example``, ``constant:<c>``, ``random:<seed>``, ``cosine[:<amplitude>]``,
    ``piecewise-linear[:<slope>]`` or a path to a WordPotential JSON file.
    """
    head, _, arg = name.partition(":")
    if head == "example":
        return example_potential()
    if head == "constant":
        return constant_potential(float(arg), d, k)
    if head == "random":
        return random_word_potential(int(arg), d, k)
    if head == "cosine":
        return AnalyticPotential("cosine", amplitude=float(arg) if arg else 1.0)
    if head == "piecewise-linear":
        return AnalyticPotential("piecewise-linear", slope=float(arg) if arg else 1.0)
    path = Path(name)
    if path.suffix == ".json":
        if not path.exists():
            raise FileNotFoundError(f"potential file not found: {path}")
        return WordPotential.load(path)
    raise ValueError(f"unknown system {name!r}")
