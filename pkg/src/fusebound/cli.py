"""Command-line front end.

Subcommands: ``bounds`` (estimation from two CSV files), ``simulate``
(Monte Carlo tables) and ``compare-pacini`` (outer-bound width ratio).
Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from dataclasses import replace

import numpy as np
import pandas as pd

from . import __version__
from .bounds import estimate_bounds
from .core_types import (POPULATION_MODES, OutcomeSample, ProblemSpec, RegressorSample,
                         SingularityError, ValidationError)
from .inference import cluster_bootstrap_se, confidence_interval
from .pipeline import estimate, make_grouping
from .simulate import (PANELS, DgpConfig, pacini_ratio_study, resolve_workers, run_monte_carlo)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _names(s):
    return [c.strip() for c in s.split(",") if c.strip()] if s else []


def _float_list(s):
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


def _int_list(s):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from exc


def parse_direction(text: str, p: int) -> np.ndarray:
    """``e<k>`` (1-based unit vector) or a comma-separated list of length ``p``."""
    text = text.strip()
    if text.lower().startswith("e") and text[1:].isdigit():
        k = int(text[1:])
        if not 1 <= k <= p:
            raise InputError(f"direction {text} out of range for {p} regressors")
        d = np.zeros(p)
        d[k - 1] = 1.0
        return d
    try:
        d = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise InputError(f"cannot parse direction {text!r}") from exc
    if d.size != p:
        raise InputError(f"direction has {d.size} entries, the regression has {p}")
    return d


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, sep=",", encoding="utf-8")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _numeric(df: pd.DataFrame, cols, path) -> np.ndarray:
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
    try:
        return df[list(cols)].to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{path}: non-numeric values in {', '.join(cols)}") from exc


def load_samples(args):
    """Build both samples and the problem from the CSV files and role flags."""
    y_col, xo, xc, wa = args.y, _names(args.xo), _names(args.xc), _names(args.wa)
    roles = [y_col] + xo + xc + wa + [c for c in (args.weight, args.cluster) if c]
    dup = {c for c in roles if roles.count(c) > 1}
    if dup:
        raise InputError(f"columns assigned to several roles: {', '.join(sorted(dup))}")
    if not xo:
        raise InputError("--xo needs at least one column")
    d1, d2 = _read_csv(args.outcome_csv), _read_csv(args.regressor_csv)
    common = xc + wa
    y = _numeric(d1, [y_col], args.outcome_csv)[:, 0]
    W1 = _numeric(d1, common, args.outcome_csv)
    Xo = _numeric(d2, xo, args.regressor_csv)
    W2 = _numeric(d2, common, args.regressor_csv)
    w1 = w2 = None
    if args.weight:
        if args.weight in d1.columns:
            w1 = _numeric(d1, [args.weight], args.outcome_csv)[:, 0]
        if args.weight in d2.columns:
            w2 = _numeric(d2, [args.weight], args.regressor_csv)[:, 0]
        if w1 is None and w2 is None:
            raise InputError(f"weight column {args.weight!r} found in neither file")
    c1 = c2 = None
    if args.cluster:
        c1 = d1[args.cluster].to_numpy() if args.cluster in d1.columns else None
        c2 = d2[args.cluster].to_numpy() if args.cluster in d2.columns else None
        if c1 is None and c2 is None:
            raise InputError(f"cluster column {args.cluster!r} found in neither file")
    cols = tuple(common)
    s1 = OutcomeSample(y, W1, w1, cols)
    s2 = RegressorSample(Xo, W2, w2, cols)
    p = len(xo) + len(xc) + (0 if args.no_intercept else 1)
    spec = ProblemSpec(parse_direction(args.d, p), common_regressor_columns=tuple(range(len(xc))),
                       intercept=not args.no_intercept, population_mode=args.mode, p=args.p)
    return s1, s2, spec, (c1, c2)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def cmd_bounds(args) -> dict:
    t0 = time.perf_counter()
    s1, s2, spec, clusters = load_samples(args)
    K = args.k if args.k == "auto" else int(args.k)
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grouping = None
        if s1.W.shape[1]:
            grouping = make_grouping(s1, s2, spec, K, args.seed)
        ci_method = None if args.ci_method in ("auto", "bootstrap") else args.ci_method
        res = estimate(s1, s2, spec, K=K, alpha=args.alpha, ci_method=ci_method, seed=args.seed,
                       grouping=grouping)
        ci = res.ci
        if args.ci_method == "bootstrap":
            est_fn = lambda a, b: estimate_bounds(a, b, spec, make_grouping(a, b, spec, K, args.seed))
            sl, su = cluster_bootstrap_se(est_fn, s1, s2, clusters[0], clusters[1],
                                          args.bootstrap_reps, args.seed)
            method = "stoye" if grouping is not None else "one_sided_z"
            ci = confidence_interval(res.bounds, res.infl_lower, res.infl_upper, args.alpha, method,
                                     sl, su)
            ci = replace(ci, method=f"cluster_bootstrap+{method}")
        elif args.cluster:
            warnings.warn("cluster column ignored by the i.i.d. variance; "
                          "use --ci-method bootstrap", UserWarning)
    notes.extend(str(w.message) for w in caught)
    for msg in notes:
        print(f"warning: {msg}", file=sys.stderr)
    b, g = res.bounds, res.grouping
    terms = {k: (v if isinstance(v, list) else _num(v)) for k, v in b.numerator_terms.items()}
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "bounds",
        "config": _config(args),
        "bounds": {"lower": _num(b.lower), "upper": _num(b.upper), "width": _num(b.width),
                   "method": b.method, "mean_sq_eta": _num(b.mean_sq_eta), **terms},
        "variance": {"V_lower": _num(res.infl_lower.variance),
                     "V_upper": _num(res.infl_upper.variance),
                     "se_lower": _num(res.infl_lower.se), "se_upper": _num(res.infl_upper.se),
                     "lambda_hat": _num(res.infl_upper.lambda_hat)},
        "ci": {"level": _num(ci.level), "lower": _num(ci.lower), "upper": _num(ci.upper),
               "method": ci.method, "critical_value": _num(ci.critical_value),
               "se_lower": _num(ci.se_lower), "se_upper": _num(ci.se_upper)},
        "diagnostics": {
            "n": s1.n, "m": s2.m, "direction": [float(x) for x in spec.direction],
            "K_requested": None if g is None else g.requested_K,
            "K_used": 1 if g is None else g.K,
            "grouping_method": None if g is None else g.method,
            "p_hat": None if g is None else [float(x) for x in g.p_hat],
            "notes": list(g.notes) if g is not None else [],
            "warnings": notes,
        },
        "timing": None if args.no_timing else {"wall_seconds": time.perf_counter() - t0},
    }
    return report


def _config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func",):
            continue
        out[k] = v
    out["workers"] = resolve_workers(getattr(args, "workers", None))
    return out


def cmd_simulate(args) -> dict:
    t0 = time.perf_counter()
    rows = []
    ks = args.k_sweep if args.k_sweep else [None if args.k == "auto" else int(args.k)]
    for panel in args.panels:
        for n in args.n:
            cfg = DgpConfig.panel(panel, n=n, m=n, seed=args.seed)
            for K in ks:
                rep = run_monte_carlo(cfg, args.reps, args.alpha, K, args.workers)
                row = {"panel": panel, **rep.row()}
                row["K"] = "auto" if K is None else K
                if args.no_timing:
                    row.pop("wall_time")
                rows.append(row)
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "command": "simulate",
            "config": _config(args), "rows": rows,
            "timing": None if args.no_timing else {"wall_seconds": time.perf_counter() - t0}}


def cmd_compare_pacini(args) -> dict:
    t0 = time.perf_counter()
    grid = args.rho if args.rho else [round(0.05 * i, 2) for i in range(20)]
    rows = pacini_ratio_study(grid, args.N, args.seed)
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
            "command": "compare-pacini", "config": _config(args), "rows": rows,
            "timing": None if args.no_timing else {"wall_seconds": time.perf_counter() - t0}}


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ";".join(str(x) for x in v)
        else:
            out[key] = v
    return out


def render(report: dict, fmt: str) -> str:
    """Serialise a report; CSV puts one table row per result row."""
    if fmt == "json":
        return json.dumps(report, indent=2, default=str) + "\n"
    if "rows" in report:
        rows = [_flatten(r) for r in report["rows"]]
    else:
        rows = [_flatten({k: report[k] for k in ("bounds", "variance", "ci", "diagnostics")})]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _common_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $FUSEBOUND_WORKERS or 1)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock fields so reports are byte-stable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fusebound", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="bounds and confidence interval from two CSV files")
    b.add_argument("outcome_csv", help="file holding the outcome and the common variables")
    b.add_argument("regressor_csv", help="file holding the outside regressors and common variables")
    b.add_argument("--y", required=True, help="outcome column")
    b.add_argument("--xo", required=True, help="outside regressors (comma-separated)")
    b.add_argument("--xc", default="", help="common regressors")
    b.add_argument("--wa", default="", help="auxiliary common variables (not regressors)")
    b.add_argument("--weight", default=None)
    b.add_argument("--cluster", default=None)
    b.add_argument("--d", default="e1", help="direction: e<k> or comma-separated coefficients")
    b.add_argument("--k", default="auto", help="number of cells of g(W), or 'auto'")
    b.add_argument("--mode", choices=POPULATION_MODES, default="common")
    b.add_argument("--p", type=float, default=None, help="share of the outcome population")
    b.add_argument("--no-intercept", action="store_true")
    b.add_argument("--ci-method", choices=("auto", "one_sided_z", "stoye", "bootstrap"),
                   default="auto")
    b.add_argument("--bootstrap-reps", type=int, default=200)
    _common_flags(b)
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("simulate", help="Monte Carlo study of coverage and length")
    s.add_argument("--panels", "--panel", type=_int_list, default=[1, 2, 3])
    s.add_argument("--n", type=_int_list, default=[800], help="sample sizes (n = m)")
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--k", default="auto")
    s.add_argument("--k-sweep", type=_int_list, default=None)
    _common_flags(s)
    s.set_defaults(func=cmd_simulate, format="csv")

    c = sub.add_parser("compare-pacini", help="ratio of outer to sharp interval widths")
    c.add_argument("--rho", type=_float_list, default=None)
    c.add_argument("--N", type=int, default=10 ** 5)
    _common_flags(c)
    c.set_defaults(func=cmd_compare_pacini, format="csv")
    return ap


def _validate_args(args):
    if not 0 < args.alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    if getattr(args, "k", "auto") != "auto":
        try:
            if int(args.k) < 1:
                raise ValueError
        except ValueError as exc:
            raise InputError("--k must be a positive integer or 'auto'") from exc
    if args.command == "simulate":
        if args.reps < 1 or any(n < 2 for n in args.n):
            raise InputError("--reps must be positive and --n at least 2")
        bad = [p for p in args.panels if p not in PANELS]
        if bad:
            raise InputError(f"unknown panel(s) {bad}")
    if args.command == "compare-pacini":
        if args.rho and any(not 0 <= r < 1 for r in args.rho):
            raise InputError("--rho values must lie in [0, 1)")
        if args.N < 10:
            raise InputError("--N too small")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate_args(args)
        report = args.func(args)
    except (SingularityError, np.linalg.LinAlgError, FloatingPointError) as exc:
        # LinAlgError subclasses ValueError, so it is caught first
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        numeric = exc.violations and all("singular" in v for v in exc.violations)
        print(f"{'numerical error' if numeric else 'error'}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_INPUT
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = render(report, args.format)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
