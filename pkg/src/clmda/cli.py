"""Command-line interface: fit, scan, biplot, simulate, recode, validate.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure,
64 usage error.  The default worker count comes from ``--threads`` or the
``CLMDA_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings

from . import __version__
from .core import ModelConfig, atomic_write, load_ordinal, load_predictors, recode, save_ordinal, validate
from .exceptions import ClmdaError, InputError, IoError, NumericalError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64

THREADS_ENV = "CLMDA_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(args, default_all):
    if args.threads is not None:
        n = args.threads
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    else:
        n = (os.cpu_count() or 1) if default_all else 1
    if n < 1:
        raise UsageError("thread count must be at least 1")
    return n


def _write_meta(path, payload):
    atomic_write(f"{path}.meta.json", json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _config_from_args(args, dims):
    kw = dict(dims=dims, seed=args.seed)
    for flag, key in (
        ("starts", "n_starts"), ("tol_outer", "tol_outer"), ("tol_inner", "tol_inner"),
        ("max_outer", "max_outer"), ("max_inner", "max_inner"), ("hessian_bound", "hessian_bound"),
    ):
        value = getattr(args, flag)
        if value is not None:
            kw[key] = value
    return ModelConfig.for_model(args.model, **kw)


def _load_data(args, restricted):
    ds = load_ordinal(args.responses, sidecar=args.sidecar)
    X = None
    if restricted:
        if not args.predictors:
            raise UsageError(f"--model {args.model} requires --predictors")
        X = load_predictors(args.predictors)
    return ds, X


def cmd_fit(args):
    from .driver import fit

    config = _config_from_args(args, args.dims)
    ds, X = _load_data(args, config.restricted)
    n_jobs = _threads(args, default_all=config.n_starts > 1)
    res = fit(ds, config, X, n_jobs=n_jobs)
    res.save(args.out)
    print(res.summary())
    return EXIT_OK


def _parse_range(text):
    try:
        a, _, b = text.partition("..")
        lo, hi = int(a), int(b)
    except ValueError:
        raise UsageError(f"--dims-range must look like 1..3, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise UsageError(f"bad dimension range {text!r}")
    return list(range(lo, hi + 1))


def _table(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def _print_table(rows, columns):
    print("  ".join(f"{c:>10}" for c in columns) + "  flags")
    for row in rows:
        cells = [f"{row[c]:>10.2f}" if isinstance(row[c], float) else f"{row[c]!s:>10}" for c in columns]
        flags = " ".join(f for f, k in (("AIC-min", "aic_min"), ("BIC-min", "bic_min")) if row.get(k))
        print("  ".join(cells) + ("  " + flags if flags else ""))


def cmd_scan(args):
    from .driver import SCAN_COLUMNS, _flag_minima, dimension_scan, fit, predictor_drop_scan

    if bool(args.dims_range) == bool(args.drop_groups):
        raise UsageError("give exactly one of --dims-range or --drop-groups")
    n_jobs = _threads(args, default_all=True)
    if args.dims_range:
        dims = _parse_range(args.dims_range)
        config = _config_from_args(args, dims[0])
        ds, X = _load_data(args, config.restricted)
        rows = dimension_scan(ds, config, dims, X, n_jobs=n_jobs)
        columns = SCAN_COLUMNS
    else:
        if args.dims is None:
            raise UsageError("--drop-groups needs --dims")
        config = _config_from_args(args, args.dims)
        if not config.restricted:
            raise UsageError("--drop-groups needs a restricted model (clrrr or clrmdu)")
        ds, X = _load_data(args, True)
        try:
            with open(args.drop_groups, encoding="utf-8") as fh:
                groups = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read groups {args.drop_groups}: {exc}") from exc
        if not isinstance(groups, dict) or not groups:
            raise InputError("drop groups must be a nonempty JSON object {name: [columns]}")
        groups = {str(k): [v] if isinstance(v, str) else list(v) for k, v in groups.items()}
        full = fit(ds, config, X, n_jobs=n_jobs)
        baseline = {
            "model": "baseline", "dims": config.dims, "deviance": full.deviance,
            "npar": full.npar, "aic": full.aic, "bic": full.bic,
        }
        rows = _flag_minima([baseline] + predictor_drop_scan(ds, config, X, groups, n_jobs=n_jobs))
        columns = ("model",) + SCAN_COLUMNS
    _print_table(rows, columns)
    if args.out:
        atomic_write(args.out, _table(rows, columns))
        _write_meta(args.out, {"config": config.to_dict(), "version": __version__})
    return EXIT_OK


def _parse_dims(text):
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise InputError(f"--dims must look like 1,2, got {text!r}") from None
    if len(parts) != 2:
        raise InputError(f"--dims needs two values, got {text!r}")
    return parts


def cmd_biplot(args):
    from .biplot import render, scene
    from .driver import load_model

    res = load_model(args.model)
    dims = _parse_dims(args.dims)
    circles = None if args.circles is None else [c.strip() for c in args.circles.split(",") if c.strip()]
    if circles is not None and res.config.family != "proximity":
        raise InputError("--circles applies to proximity models only")
    s = scene(res, dims, circles=circles, regions=args.regions, grid_size=args.grid)
    s.config = res.config.to_dict()
    render(s, args.format, args.out)
    print(f"{args.format} biplot of dimensions {dims[0]},{dims[1]} written to {args.out}")
    return EXIT_OK


def cmd_simulate(args):
    from .simulate import (
        Population,
        StudyDesign,
        reference_population,
        load_json,
        run_study,
        summarize,
        write_study,
    )

    pop = reference_population() if args.population is None else Population.from_dict(load_json(args.population, "population"))
    raw = load_json(args.design, "design")
    if not isinstance(raw, dict):
        raise InputError("design must be a JSON object")
    if "replications" in raw and not (isinstance(raw["replications"], int) and raw["replications"] >= 1):
        raise UsageError("replications must be a positive integer")
    if args.timing:
        raw["record_time"] = True
    design = StudyDesign.from_dict(raw)
    rows = run_study(pop, design, n_jobs=_threads(args, default_all=True))
    write_study(rows, args.out)
    _write_meta(args.out, {"population": pop.to_dict(), "design": design.to_dict(), "version": __version__})
    print(f"{'family':>10} {'N':>6} {'R':>3} {'C':>3} {'median delta':>13} {'failed':>7}")
    for s in summarize(rows):
        print(f"{s['family']:>10} {s['N']:>6} {s['R']:>3} {s['C']:>3} {s['median_delta']:>13.4f} {s['n_failed']:>7}")
    return EXIT_OK


def cmd_recode(args):
    ds = load_ordinal(args.responses, sidecar=args.sidecar, strict=False)
    out = recode(ds)
    save_ordinal(out, args.out, sidecar=args.out_sidecar)
    print(f"recoded {out.n_vars} variables; categories {list(out.cats)}")
    return EXIT_OK


def cmd_validate(args):
    ds = load_ordinal(args.responses, sidecar=args.sidecar, strict=False)
    report = validate(ds)
    print(report.format())
    return EXIT_OK if not report.gaps else EXIT_INPUT


def _add_fit_flags(p, dims_required):
    p.add_argument("--responses", required=True, help="CSV of integer codes with a header row")
    p.add_argument("--sidecar", help='JSON file {"cats": [...]} with the number of categories per variable')
    p.add_argument("--predictors", help="predictor CSV (header, types line, data)")
    p.add_argument("--model", required=True, choices=["clpca", "clrrr", "clmdu", "clrmdu"], type=str.lower)
    p.add_argument("--dims", type=int, required=dims_required, help="number of dimensions S")
    p.add_argument("--starts", type=int, help="number of starts (default 1 dominance, 10 proximity)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-outer", type=float)
    p.add_argument("--tol-inner", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--max-inner", type=int)
    p.add_argument("--hessian-bound", type=float, help="curvature constant of the majorizer (default 0.25)")
    p.add_argument("--threads", type=int, help=f"worker processes (default from {THREADS_ENV})")


def build_parser():
    parser = _Parser(prog="clmda", description="Cumulative logistic multidimensional analysis of ordinal data.")
    parser.add_argument("--version", action="version", version=f"clmda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one model and write the model artifact")
    _add_fit_flags(p, dims_required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scan", help="dimensionality or predictor-selection table")
    _add_fit_flags(p, dims_required=False)
    p.add_argument("--dims-range", help="range of S, e.g. 1..3")
    p.add_argument("--drop-groups", help='JSON {"name": [columns]} of predictor groups to drop')
    p.add_argument("--out", help="CSV path for the table")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("biplot", help="biplot scene as SVG or JSON")
    p.add_argument("--model", required=True, help="model JSON written by fit")
    p.add_argument("--dims", default="1,2", help="pair of dimensions, e.g. 1,2")
    p.add_argument("--circles", help="comma-separated variables that get circles (proximity)")
    p.add_argument("--regions", help="variable whose predicted-category field is added")
    p.add_argument("--grid", type=int, default=60, help="grid points per side for --regions")
    p.add_argument("--format", required=True, choices=["svg", "json"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_biplot)

    p = sub.add_parser("simulate", help="parameter-recovery study")
    p.add_argument("--population", help="population JSON (default: the built-in population)")
    p.add_argument("--design", required=True, help="design JSON")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (output no longer reproducible)")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recode", help="collapse unobserved categories")
    p.add_argument("--responses", required=True)
    p.add_argument("--sidecar")
    p.add_argument("--out", required=True)
    p.add_argument("--out-sidecar", help="write the new category counts here")
    p.set_defaults(func=cmd_recode)

    p = sub.add_parser("validate", help="report frequencies, gaps and sparse categories")
    p.add_argument("--responses", required=True)
    p.add_argument("--sidecar")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InputError, IoError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        for line in getattr(exc, "diagnostics", []) or []:
            print(f"  {line}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ClmdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
