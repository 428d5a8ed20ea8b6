"""Declarative experiment runs: parameter sweeps over (beta, lambda) with exported records.

A run is described by a TOML file, for instance::

    kind = "theorem2_schedule"
    system = "example"
    betas = [16, 64, 256]
    gamma = 0.5

    [outputs]
    csv = "t2.csv"
    svg = "t2.svg"

Relative output paths are resolved against the directory of the TOML file.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .discounted import (
    ConvergenceError,
    DiscountParams,
    normalized_subaction,
    solve_normalized,
    solve_subaction,
)
from .dynamics import CircleGrid, CircleMap
from .gibbs import (
    GibbsParams,
    PressureReport,
    entropy_gap,
    pressure_bounds,
    pressure_exact,
    ruelle_eigenfunction,
    scaled_eigen_log,
    solve_gibbs,
    theorem2_field,
)
from .mane import critical_entropy, symbolic_oracle
from .potentials import WordPotential, load_system

logger = logging.getLogger(__name__)

KINDS = ("theorem1_sweep", "theorem2_schedule", "counterexample", "entropy_gap", "pressure_sweep")
COLUMNS = ("kind", "beta", "lambda", "sup_distance", "bound", "m", "pressure", "entropy_gap", "residual")
OUTPUT_FORMATS = ("csv", "json", "svg", "png")
THREADS_ENV = "SUBACTION_LAB_THREADS"
ENTROPY_MONOTONE_TOL = 1e-9


class SpecError(ValueError):
    """Invalid experiment description."""


class ExperimentError(RuntimeError):
    """A run failed; ``records`` holds whatever was computed before the failure."""

    def __init__(self, message: str, records: "RecordSet | None" = None):
        super().__init__(message)
        self.records = records


def schedule_lambda(beta: float, gamma: float) -> float:
    """lambda(beta) = 1 - beta^(gamma - 1), so that beta (1 - lambda) = beta^gamma."""
    if not 0.0 < gamma < 1.0:
        raise SpecError(f"gamma must lie in (0, 1), got {gamma}")
    lam = 1.0 - beta ** (gamma - 1.0)
    if not 0.0 < lam < 1.0:
        raise SpecError(f"beta={beta} gives lambda={lam} outside (0, 1); use beta > 1")
    return lam


@dataclass
class ExperimentSpec:
    kind: str
    system: str = "example"
    lambdas: list[float] = field(default_factory=list)
    betas: list[float] = field(default_factory=list)
    gamma: float | None = None
    # 1 - lambda used when the discount is sent to 1 before beta grows
    limit_gap: float = 1e-6
    tol: float = 1e-10
    seed: int | None = None
    d: int = 2
    k: int = 2
    grid_n: int = 4096
    outputs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        self.lambdas = [float(v) for v in self.lambdas]
        self.betas = [float(v) for v in self.betas]
        for lam in self.lambdas:
            if not 0.0 < lam < 1.0:
                raise SpecError(f"lambda values must lie in (0, 1), got {lam}")
        for beta in self.betas:
            if not beta > 0.0:
                raise SpecError(f"beta values must be positive, got {beta}")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise SpecError(
                f"gamma must lie in (0, 1) so that beta (1 - lambda) grows without bound, got {self.gamma}"
            )
        if not 0.0 < self.limit_gap < 1.0:
            raise SpecError(f"limit_gap must lie in (0, 1), got {self.limit_gap}")
        if not self.tol > 0.0:
            raise SpecError(f"tol must be positive, got {self.tol}")
        if self.kind == "theorem2_schedule" and self.gamma is None:
            self.gamma = 0.5
        if self.kind == "theorem2_schedule" and any(b <= 1.0 for b in self.betas):
            raise SpecError("theorem2_schedule needs every beta > 1 so that lambda(beta) lies in (0, 1)")
        needs_lambdas = self.kind in ("theorem1_sweep", "pressure_sweep")
        if needs_lambdas and not self.lambdas:
            raise SpecError(f"{self.kind} needs a non-empty 'lambdas' list")
        if self.kind != "theorem1_sweep" and not self.betas:
            raise SpecError(f"{self.kind} needs a non-empty 'betas' list")
        unknown = set(self.outputs) - set(OUTPUT_FORMATS)
        if unknown:
            raise SpecError(f"unknown output formats {sorted(unknown)}; expected {OUTPUT_FORMATS}")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentSpec":
        data = dict(data)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise SpecError(f"unknown spec keys {sorted(unknown)}")
        if "kind" not in data:
            raise SpecError("spec needs a 'kind'")
        outputs = {str(k): str(v) for k, v in data.pop("outputs", {}).items()}
        if base is not None:
            outputs = {k: str(base / v) if not Path(v).is_absolute() else v for k, v in outputs.items()}
        try:
            return cls(outputs=outputs, **data)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc

    @classmethod
    def from_toml(cls, path) -> "ExperimentSpec":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"experiment spec not found: {path}")
        try:
            data = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from exc
        return cls.from_dict(data, base=path.parent)

    def load_potential(self):
        name = self.system
        if name == "random" and self.seed is not None:
            name = f"random:{self.seed}"
        return load_system(name, self.d, self.k)

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "system": self.system,
            "seed": self.seed,
            "tol": self.tol,
            "gamma": self.gamma,
            "limit_gap": self.limit_gap,
            "d": self.d,
            "k": self.k,
            "grid_n": self.grid_n,
        }


@dataclass
class Record:
    kind: str
    beta: float | None = None
    lam: float | None = None
    sup_distance: float | None = None
    bound: float | None = None
    m: float | None = None
    pressure: float | None = None
    entropy_gap: float | None = None
    residual: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("beta", "lam", "sup_distance", "bound", "m", "pressure", "entropy_gap", "residual"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, float(v))

    def sort_key(self):
        return (
            self.beta is not None, self.beta or 0.0,
            self.lam is not None, self.lam or 0.0,
        )

    def row(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_row(cls, row: dict) -> "Record":
        row = dict(row)
        row["lam"] = row.pop("lambda")
        return cls(**row)


@dataclass
class RecordSet:
    records: list[Record]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=Record.sort_key)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        key = "lam" if name == "lambda" else name
        return [getattr(r, key) for r in self.records]

    def to_json(self) -> dict:
        return {"metadata": self.metadata, "records": [r.row() for r in self.records]}

    @classmethod
    def from_json(cls, data: dict) -> "RecordSet":
        return cls([Record.from_row(r) for r in data["records"]], dict(data.get("metadata", {})))

    @classmethod
    def load(cls, path) -> "RecordSet":
        return cls.from_json(json.loads(Path(path).read_text()))


# ------------------------------------------------------------------------------ runners


def _require_word(A, kind: str) -> WordPotential:
    if not isinstance(A, WordPotential):
        raise SpecError(f"{kind} needs a symbolic system (a word potential)")
    return A


def _theorem1(spec, A, oracle, lam):
    U, rep = solve_normalized(A, oracle.m, DiscountParams(lam, spec.tol))
    return Record(
        "theorem1_sweep", None, lam,
        sup_distance=U.distance(oracle.V),
        m=oracle.m,
        residual=rep.residual_sup,
        extra={"iterations": rep.iterations, "error_bound": rep.error_bound},
    )


def _theorem2(spec, A, oracle, beta):
    lam = schedule_lambda(beta, spec.gamma)
    u, urep = solve_gibbs(A, GibbsParams(beta, lam, spec.tol))
    b, brep = solve_subaction(A, DiscountParams(lam, spec.tol))
    P = pressure_exact(A, beta)
    dist = theorem2_field(u, beta, lam, P).distance(oracle.V)
    sandwich = math.log(A.d) / (beta * (1.0 - lam))
    discount_part = normalized_subaction(b, oracle.m, lam).distance(oracle.V)
    slack = urep.error_bound / beta + brep.error_bound
    return Record(
        "theorem2_schedule", beta, lam,
        sup_distance=dist,
        bound=sandwich + discount_part,
        m=oracle.m,
        pressure=P,
        entropy_gap=entropy_gap(A, beta, oracle.m),
        residual=urep.residual_sup,
        extra={
            "sandwich_term": sandwich,
            "discount_term": discount_part,
            "solver_slack": slack,
            "method": urep.method,
        },
    )


def _counterexample(spec, A, oracle, beta):
    lam = 1.0 - spec.limit_gap
    u, urep = solve_gibbs(A, GibbsParams(beta, lam, spec.tol))
    discounted = scaled_eigen_log(u, beta).values
    eig = ruelle_eigenfunction(A.shifted(float(np.max(A.table))), beta)
    exact = eig.log_eigenfunction / beta
    target = oracle.V.values - oracle.V.sup()
    return Record(
        "counterexample", beta, lam,
        sup_distance=float(np.max(np.abs(exact - target))),
        m=oracle.m,
        pressure=pressure_exact(A, beta),
        residual=urep.residual_sup,
        extra={
            "sup_abs_V": oracle.V.sup_norm(),
            "eigen_gap": float(exact[0] - exact[1]),
            "discounted_gap": float(discounted[0] - discounted[1]),
            "discounted_sup_distance": float(np.max(np.abs(discounted - target))),
            "eigen_residual": eig.eigen_residual,
        },
    )


def _entropy(spec, A, oracle, beta):
    gap = entropy_gap(A, beta, oracle.m)
    return Record(
        "entropy_gap", beta, None,
        bound=math.log(A.d),
        m=oracle.m,
        pressure=pressure_exact(A, beta),
        entropy_gap=gap,
        extra={"critical_entropy": critical_entropy(oracle.W, oracle.m)},
    )


def _pressure(spec, A, oracle, beta, lam):
    space = None if isinstance(A, WordPotential) else CircleGrid(CircleMap(spec.d), spec.grid_n)
    u, rep = solve_gibbs(A, GibbsParams(beta, lam, spec.tol), space=space)
    lo, hi = pressure_bounds(u, lam, rep.error_bound)
    exact = gap = None
    if oracle is not None:
        exact = pressure_exact(A, beta)
        gap = entropy_gap(A, beta, oracle.m)
    report = PressureReport(beta, lam, exact, lo, hi, gap)
    return Record(
        "pressure_sweep", beta, lam,
        sup_distance=None if exact is None else abs(exact - report.midpoint),
        bound=report.half_width,
        m=oracle.m if oracle is not None else rep.m_estimate,
        pressure=exact if exact is not None else report.midpoint,
        entropy_gap=gap,
        residual=rep.residual_sup,
        extra=report.to_json(),
    )


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise SpecError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise SpecError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return min(4, os.cpu_count() or 1)


def _tasks(spec: ExperimentSpec, A, oracle):
    if spec.kind == "theorem1_sweep":
        return [(_theorem1, (spec, A, oracle, lam)) for lam in spec.lambdas]
    if spec.kind == "theorem2_schedule":
        return [(_theorem2, (spec, A, oracle, beta)) for beta in spec.betas]
    if spec.kind == "counterexample":
        return [(_counterexample, (spec, A, oracle, beta)) for beta in spec.betas]
    if spec.kind == "entropy_gap":
        return [(_entropy, (spec, A, oracle, beta)) for beta in spec.betas]
    return [(_pressure, (spec, A, oracle, b, lam)) for b in spec.betas for lam in spec.lambdas]


def _validate(spec: ExperimentSpec, records: RecordSet) -> None:
    if spec.kind == "theorem2_schedule":
        for r in records.records:
            if r.sup_distance > r.bound + r.extra["solver_slack"]:
                raise ExperimentError(
                    f"beta={r.beta}: distance {r.sup_distance:.6g} exceeds bound {r.bound:.6g}", records
                )
    if spec.kind == "entropy_gap":
        gaps = records.column("entropy_gap")
        for prev, nxt, r in zip(gaps, gaps[1:], records.records[1:]):
            if nxt > prev + ENTROPY_MONOTONE_TOL:
                raise ExperimentError(
                    f"entropy gap increases at beta={r.beta}: {prev:.12g} -> {nxt:.12g}", records
                )


def run_experiment(spec: ExperimentSpec) -> RecordSet:
    """Compute all records of ``spec``; points run concurrently and are merged by (beta, lambda)."""
    A = spec.load_potential()
    oracle = None
    if isinstance(A, WordPotential):
        oracle = symbolic_oracle(A)
    elif spec.kind != "pressure_sweep":
        _require_word(A, spec.kind)
    tasks = _tasks(spec, A, oracle)
    done: list[Record] = []
    failure = None
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(tasks))) as pool:
        futures = [pool.submit(fn, *args) for fn, args in tasks]
        for fut in futures:
            try:
                done.append(fut.result())
            except ConvergenceError as exc:
                failure = failure or exc
    records = RecordSet(done, spec.metadata())
    if failure is not None:
        raise ExperimentError(f"solver did not converge: {failure}", records)
    _validate(spec, records)
    return records


# ------------------------------------------------------------------------------- export


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(records: RecordSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records.records:
        row = r.row()
        writer.writerow([_cell(row[c]) for c in COLUMNS])
    return buf.getvalue()


def to_json_text(records: RecordSet) -> str:
    return json.dumps(records.to_json(), indent=2, sort_keys=True) + "\n"


# series drawn for each kind, and the quantity on the horizontal axis
SERIES = {
    "theorem1_sweep": ("1/(1-lambda)", ("sup_distance",)),
    "theorem2_schedule": ("beta", ("sup_distance", "bound")),
    "counterexample": ("beta", ("sup_distance",)),
    "entropy_gap": ("beta", ("entropy_gap",)),
    "pressure_sweep": ("beta", ("pressure", "bound")),
}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def plot_series(records: RecordSet):
    """(x label, x values, {series name: y values}) with rows lacking data dropped."""
    kind = records.records[0].kind
    xlabel, names = SERIES[kind]
    if xlabel == "beta":
        xs = [r.beta for r in records.records]
    else:
        xs = [1.0 / (1.0 - r.lam) for r in records.records]
    series = {}
    for name in names:
        pts = [(x, y) for x, y in zip(xs, records.column(name)) if y is not None and x is not None]
        if pts:
            series[name] = pts
    return xlabel, series


def to_svg(records: RecordSet, width: int = 640, height: int = 400) -> str:
    """Static chart: log10 of the x quantity against the raw values, one polyline per series."""
    xlabel, series = plot_series(records)
    allpts = [p for pts in series.values() for p in pts]
    lx = [math.log10(x) for x, _ in allpts]
    ys = [y for _, y in allpts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ys + [0.0]), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y1 = y0 + 1.0
    left, right, top, bottom = 70, 20, 20, 50
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + pw * (math.log10(x) - x0) / (x1 - x0)

    def py(y):
        return top + ph * (1.0 - (y - y0) / (y1 - y0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">log10({xlabel})</text>',
        f'<text x="{left - 8}" y="{top + 10}" text-anchor="end" font-size="10">{y1:.3g}</text>',
        f'<text x="{left - 8}" y="{top + ph}" text-anchor="end" font-size="10">{y0:.3g}</text>',
    ]
    for i, (name, pts) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        out.append(
            f'<text x="{left + pw - 4}" y="{top + 14 * (i + 1)}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export(records: RecordSet, fmt: str, path) -> Path:
    if not records.records:
        raise ValueError("nothing to export: the record set is empty")
    path = Path(path)
    if fmt == "png":
        from .plotting import render_png

        render_png(records, path)
        return path
    writers = {"csv": to_csv, "json": to_json_text, "svg": to_svg}
    if fmt not in writers:
        raise ValueError(f"unknown export format {fmt!r}; expected one of {OUTPUT_FORMATS}")
    text = writers[fmt](records)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def run_and_export(spec: ExperimentSpec) -> tuple[RecordSet, list[Path]]:
    """Run ``spec`` and write every configured output; partial records are still written on failure."""
    try:
        records = run_experiment(spec)
    except ExperimentError as exc:
        if exc.records is not None and exc.records.records:
            for fmt, path in sorted(spec.outputs.items()):
                export(exc.records, fmt, path)
        raise
    written = [export(records, fmt, path) for fmt, path in sorted(spec.outputs.items())]
    return records, written
