"""Command-line entry point: ``subaction-lab <subcommand> [flags]``.

Results go to stdout as JSON (full double precision) unless ``--pretty`` is
given.  Exit status 0 on success, 2 on usage errors, 1 on solver failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .discounted import ConvergenceError, DiscountParams, greedy_realizer, solve_subaction
from .dynamics import CircleGrid, CircleMap, FunctionField
from .experiments import (
    OUTPUT_FORMATS,
    ExperimentError,
    ExperimentSpec,
    RecordSet,
    SpecError,
    export,
    run_and_export,
    schedule_lambda,
)
from .gibbs import (
    GibbsParams,
    entropy_gap,
    pressure_bounds,
    pressure_exact,
    ruelle_eigenfunction,
    solve_gibbs,
)
from .mane import circle_periodic_max, critical_entropy, mane_grid, symbolic_oracle
from .potentials import WordPotential, load_system, sample_to_grid


class UsageError(Exception):
    """Bad flag values; reported with exit status 2."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _pretty(obj, indent: int = 0) -> list[str]:
    pad = "  " * indent
    lines = []
    for key, val in obj.items():
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            lines.extend(_pretty(val, indent + 1))
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            lines.append(f"{pad}{key}:")
            for item in val:
                lines.append(f"{pad}  - " + ", ".join(f"{k}={_short(v)}" for k, v in item.items()))
        elif isinstance(val, list) and len(val) > 16:
            lines.append(f"{pad}{key}: [{len(val)} values, min {_short(min(val))}, max {_short(max(val))}]")
        else:
            lines.append(f"{pad}{key}: {_short(val)}")
    return lines


def _short(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, list):
        return "[" + ", ".join(str(_short(x)) for x in v) + "]"
    return v


def emit(obj, args) -> None:
    obj = _jsonable(obj)
    if getattr(args, "pretty", False):
        print("\n".join(_pretty(obj)))
    else:
        print(json.dumps(obj, sort_keys=True))


# ------------------------------------------------------------------------------ helpers


def _potential(args):
    name = args.system
    if name == "random" and args.seed is not None:
        name = f"random:{args.seed}"
    try:
        return load_system(name, args.d, args.k)
    except FileNotFoundError as exc:
        raise UsageError(f"--system: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"--system: {exc}") from None


def _space(A, args):
    if isinstance(A, WordPotential):
        return A.shift
    if args.grid_n < 2 or args.grid_n % args.d:
        raise UsageError(f"--grid-n must be a multiple of --d={args.d}, got {args.grid_n}")
    return CircleGrid(CircleMap(args.d), args.grid_n)


def _lambda(args) -> float:
    if args.lam is not None:
        lam = args.lam
    elif getattr(args, "gamma", None) is not None and getattr(args, "beta", None) is not None:
        if not 0.0 < args.gamma < 1.0:
            raise UsageError(f"--gamma must lie in (0, 1), got {args.gamma}")
        lam = schedule_lambda(args.beta, args.gamma)
    else:
        raise UsageError("--lambda is required (or --gamma together with --beta)")
    if not 0.0 < lam < 1.0:
        raise UsageError(f"--lambda must lie in (0, 1), got {lam}")
    return lam


def _field_json(f: FunctionField) -> dict:
    return f.to_dict()


def _write_out(args, payload) -> None:
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------- commands


def cmd_solve_subaction(args) -> int:
    A = _potential(args)
    lam = _lambda(args)
    space = _space(A, args)
    b, report = solve_subaction(A, DiscountParams(lam, args.tol), space)
    out = {"system": args.system, "field": _field_json(b), "report": report.to_json()}
    if report.notes:
        out["notes"] = report.notes
    if args.depth is not None or isinstance(A, WordPotential):
        y = 0 if isinstance(A, WordPotential) else args.y
        r = greedy_realizer(b, A, lam, y, depth=args.depth)
        out["realizer"] = {"start": y, "symbols": list(r.symbols), "preperiod": r.preperiod, "period": r.period}
    _write_out(args, out)
    emit(out, args)
    return 0


def cmd_solve_gibbs(args) -> int:
    A = _potential(args)
    if args.beta is None:
        raise UsageError("--beta is required")
    lam = _lambda(args)
    space = _space(A, args)
    u, report = solve_gibbs(A, GibbsParams(args.beta, lam, args.tol), space)
    lo, hi = pressure_bounds(u, lam, report.error_bound)
    out = {
        "system": args.system,
        "field": _field_json(u),
        "report": report.to_json(),
        "pressure_bounds": [lo, hi],
    }
    if isinstance(A, WordPotential):
        out["pressure_exact"] = pressure_exact(A, args.beta)
    _write_out(args, out)
    emit(out, args)
    return 0


def cmd_oracle(args) -> int:
    A = _potential(args)
    if isinstance(A, WordPotential):
        oracle = symbolic_oracle(A)
        out = oracle.to_json()
        out["critical_entropy"] = critical_entropy(oracle.W, oracle.m)
        if args.beta is not None:
            eig = ruelle_eigenfunction(A.shifted(float(np.max(A.table))), args.beta)
            out["beta"] = args.beta
            out["pressure"] = pressure_exact(A, args.beta)
            out["entropy_gap"] = entropy_gap(A, args.beta, oracle.m)
            out["log_eigenfunction"] = eig.log_eigenfunction
    else:
        period = args.depth if args.depth is not None else 12
        best, orbit = circle_periodic_max(A, args.d, period)
        out = {"m": best, "orbit": list(orbit), "max_period": period}
    out["system"] = args.system
    _write_out(args, out)
    emit(out, args)
    return 0


def cmd_mane(args) -> int:
    A = _potential(args)
    if isinstance(A, WordPotential):
        oracle = symbolic_oracle(A)
        out = {"system": args.system, "m": oracle.m, "mane": oracle.S.to_json(), "V": oracle.V.values}
    else:
        depth = args.depth if args.depth is not None else 16
        if not 1 <= depth <= 24:
            raise UsageError(f"--depth must lie in [1, 24] on the circle, got {depth}")
        m, _ = circle_periodic_max(A, args.d)
        grid = sample_to_grid(A, args.grid_n, args.d) if args.use_grid else A
        value = mane_grid(grid, m, args.y, args.x, depth, args.eps, args.d)
        out = {"system": args.system, "m": m, "y": args.y, "x": args.x, "depth": depth,
               "eps": args.eps, "mane_lower_bound": value}
    _write_out(args, out)
    emit(out, args)
    return 0


def cmd_run(args) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise UsageError(f"--spec: experiment spec not found: {path}")
    try:
        spec = ExperimentSpec.from_toml(path)
    except SpecError as exc:
        raise UsageError(f"--spec: {exc}") from None
    if args.out:
        spec.outputs[args.format or "json"] = args.out
    try:
        records, written = run_and_export(spec)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.records is not None:
            emit(exc.records.to_json(), args)
        return 1
    out = records.to_json()
    out["written"] = [str(p) for p in written]
    emit(out, args)
    return 0


def cmd_export(args) -> int:
    path = Path(args.records)
    if not path.is_file():
        raise UsageError(f"--records: file not found: {path}")
    if not args.out or not args.format:
        raise UsageError("export needs --out and --format")
    try:
        records = RecordSet.load(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"--records: cannot read {path}: {exc}") from None
    if not records.records:
        raise UsageError(f"--records: {path} holds no records")
    written = export(records, args.format, args.out)
    emit({"written": str(written), "records": len(records)}, args)
    return 0


# ------------------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", default="example",
                   help="example, constant:<c>, random:<seed>, cosine[:<amp>], "
                        "piecewise-linear[:<slope>] or a potential JSON file (default: example)")
    p.add_argument("--d", type=int, default=2, help="number of symbols / degree of the circle map (default: 2)")
    p.add_argument("--k", type=int, default=2, help="word length of symbolic potentials (default: 2)")
    p.add_argument("--seed", type=int, default=None, help="seed used with --system random")
    p.add_argument("--tol", type=float, default=1e-10, help="solver tolerance (default: 1e-10)")
    p.add_argument("--grid-n", type=int, default=4096, help="circle grid size (default: 4096)")
    p.add_argument("--depth", type=int, default=None,
                   help="realizer depth / search depth / maximal period, depending on the command")
    p.add_argument("--out", default=None, help="also write the JSON result to this path")
    p.add_argument("--pretty", action="store_true", help="human-readable output instead of JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subaction-lab",
        description="Discounted and zero-temperature approximations of calibrated subactions.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("solve-subaction", allow_abbrev=False,
                       help="fixed point of the discounted max operator")
    _common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="discount factor in (0, 1)")
    p.add_argument("--y", type=float, default=0.0, help="circle start point of the realizer (default: 0)")
    p.set_defaults(func=cmd_solve_subaction)

    p = sub.add_parser("solve-gibbs", allow_abbrev=False,
                       help="fixed point of the discounted log-sum-exp operator")
    _common(p)
    p.add_argument("--beta", type=float, default=None, help="inverse temperature (> 0)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="discount factor in (0, 1)")
    p.add_argument("--gamma", type=float, default=None,
                   help="schedule exponent in (0, 1): lambda = 1 - beta^(gamma - 1) when --lambda is absent")
    p.set_defaults(func=cmd_solve_gibbs)

    p = sub.add_parser("oracle", allow_abbrev=False,
                       help="exact m(A), Mane matrix, V and optionally the pressure at --beta")
    _common(p)
    p.add_argument("--beta", type=float, default=None, help="also report pressure and eigenfunction")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("mane", allow_abbrev=False, help="Mane potential (matrix, or a circle lower bound)")
    _common(p)
    p.add_argument("--y", type=float, default=0.0, help="circle source point (default: 0)")
    p.add_argument("--x", type=float, default=0.0, help="circle target point (default: 0)")
    p.add_argument("--eps", type=float, default=1e-3, help="ball radius around --y (default: 1e-3)")
    p.add_argument("--use-grid", action="store_true", help="evaluate A through its --grid-n sample")
    p.set_defaults(func=cmd_mane)

    p = sub.add_parser("run", allow_abbrev=False, help="run a TOML experiment spec")
    p.add_argument("--spec", required=True, help="path to the TOML spec")
    p.add_argument("--out", default=None, help="extra export path (format from --format, default json)")
    p.add_argument("--format", choices=OUTPUT_FORMATS, default=None, help="format for --out")
    p.add_argument("--pretty", action="store_true", help="human-readable output instead of JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export", allow_abbrev=False, help="convert a records JSON file")
    p.add_argument("--records", required=True, help="records JSON written by run")
    p.add_argument("--format", choices=OUTPUT_FORMATS, default=None, help="output format")
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--pretty", action="store_true", help="human-readable output instead of JSON")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(2, f"{parser.prog} {args.command}: error: {exc}\n")
    except (SpecError, ValueError) as exc:
        parser.exit(2, f"{parser.prog} {args.command}: error: {exc}\n")
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            emit({"report": exc.report.to_json(), "converged": False}, args)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
