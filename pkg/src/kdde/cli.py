"""Command-line entry point: ``kdde {rates,select,estimate,cluster,study}``."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys

import numpy as np

from .estimator import KdeModel, kde_grid
from .io import CsvParseError, read_csv, write_csv
from .meanshift import MeanShiftConfig, correct_insignificant
from .optimize import OptimizerConfig
from .rates import format_rate_table, rate_table
from .selectors import METHODS, SelectorConfig, select
from .studies import StudyConfig, run_study, write_result

EXIT_USAGE = 2
EXIT_ERROR = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps(dict(error=kind, message=message, **extra)) + "\n")


def _selector_from_args(args) -> SelectorConfig:
    return SelectorConfig(method=args.method, r=args.r, stages=args.stages, prescale=not args.no_prescale,
                          optimizer=OptimizerConfig())


def _add_selector_args(p, default_r=0, default_method="pi"):
    p.add_argument("--method", choices=METHODS, default=default_method)
    p.add_argument("--r", type=int, default=default_r, help="derivative order")
    p.add_argument("--stages", type=int, default=2, help="pilot stages for pi/scv")
    p.add_argument("--no-prescale", action="store_true", help="select on unscaled data")


def _bandwidth(args, X, r):
    if getattr(args, "H", None):
        H = np.atleast_2d(np.asarray(json.loads(args.H), dtype=float))
        return H
    return select(X, SelectorConfig(method=args.method, r=r, stages=args.stages,
                                    prescale=not args.no_prescale)).H


def cmd_rates(args) -> int:
    rows = rate_table()
    if args.format == "json":
        print(json.dumps([{**e, "value": str(e["value"])} for e in rows]))
    elif args.format == "csv":
        w = [f"{e['r']},{e['n']},{e['d']},{e['method']},{e['value']}" for e in rows]
        print("r,n,d,method,value")
        print("\n".join(w))
    else:
        print(format_rate_table(rows))
    return 0


def cmd_select(args) -> int:
    X, _ = read_csv(args.data)
    res = select(X, _selector_from_args(args))
    out = dict(method=res.method, r=res.r, H=res.H.tolist(),
               criterion_value=None if np.isnan(res.criterion_value) else res.criterion_value,
               pilots=[G.tolist() for G in res.pilots])
    print(json.dumps(out))
    return 0


def _grid(X, size: int, pad: float = 0.25):
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    axes = [np.linspace(a - pad * s, b + pad * s, size) for a, b, s in zip(lo, hi, span)]
    return np.array(list(itertools.product(*axes)))


def cmd_estimate(args) -> int:
    X, header = read_csv(args.data)
    d = X.shape[1]
    if args.points:
        P, _ = read_csv(args.points)
        if P.shape[1] != d:
            raise ValueError(f"points have {P.shape[1]} columns, data have {d}")
    else:
        if args.grid_size ** d > 10**6:
            raise ValueError("grid too large; pass --points or a smaller --grid-size")
        P = _grid(X, args.grid_size)
    H = _bandwidth(args, X, args.r)
    vals = kde_grid(KdeModel(X, H, args.r), P)
    names = header or [f"x{j + 1}" for j in range(d)]
    cols = list(names) + [f"D{args.r}_{k}" for k in range(vals.shape[1])]
    write_csv(sys.stdout, np.hstack([P, vals]), cols)
    return 0


def cmd_cluster(args) -> int:
    X, _ = read_csv(args.data)
    scfg = SelectorConfig(method=args.method, r=args.r, stages=args.stages, prescale=not args.no_prescale)
    H = _bandwidth(args, X, args.r)
    cfg = MeanShiftConfig(H, tol=args.tol, max_iter=args.max_iter, merge_radius=args.merge_radius,
                          alpha_pct=args.alpha)
    part = correct_insignificant(X, cfg, scfg)
    if args.labels and args.labels != "-":
        with open(args.labels, "w", encoding="utf-8") as fh:
            write_csv(fh, [[int(v)] for v in part.labels], ["label"])
    else:
        write_csv(sys.stdout, [[int(v)] for v in part.labels], ["label"])
    if args.modes:
        doc = dict(H=part.H.tolist(), modes=part.modes.tolist(),
                   log_density=part.mode_log_density.tolist(), corrections=part.corrections)
        with open(args.modes, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    return 0


def cmd_study(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    raw.setdefault("study", args.kind)
    if raw["study"] != args.kind:
        raise ValueError(f"config declares study {raw['study']!r} but {args.kind!r} was requested")
    cfg = StudyConfig.from_dict(raw)
    outdir = args.output or cfg.output
    if not outdir:
        raise ValueError("no output directory: pass --output or set 'output' in the config")
    paths = write_result(run_study(cfg), outdir)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kdde", description="Kernel density derivative estimation with unconstrained bandwidths.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("rates", help="print the relative convergence-rate table")
    s.add_argument("--format", choices=["table", "csv", "json"], default="table")
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("select", help="select a bandwidth matrix for CSV data")
    s.add_argument("data")
    _add_selector_args(s)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("estimate", help="evaluate the r-th derivative estimate on a grid")
    s.add_argument("data")
    _add_selector_args(s)
    s.add_argument("--H", help="bandwidth as a JSON matrix; overrides --method")
    s.add_argument("--points", help="CSV of evaluation points")
    s.add_argument("--grid-size", type=int, default=51)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("cluster", help="mean-shift clustering of CSV data")
    s.add_argument("data")
    _add_selector_args(s, default_r=1)
    s.add_argument("--H", help="bandwidth as a JSON matrix; overrides --method")
    s.add_argument("--alpha", type=float, default=5.0, help="insignificant-group threshold in percent")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=400)
    s.add_argument("--merge-radius", type=float, default=0.1)
    s.add_argument("--labels", default="-", help="labels CSV path (default stdout)")
    s.add_argument("--modes", help="modes JSON path")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("study", help="run a simulation study from a JSON config")
    s.add_argument("kind", choices=["ise", "cluster", "rates"])
    s.add_argument("config")
    s.add_argument("--output", help="output directory")
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        _emit_error("usage", str(exc), usage=parser.format_usage().strip())
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except CsvParseError as exc:
        _emit_error("parse", str(exc), row=exc.row, col=exc.col)
    except FileNotFoundError as exc:
        _emit_error("io", str(exc))
    except Exception as exc:
        _emit_error(type(exc).__name__, str(exc))
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
