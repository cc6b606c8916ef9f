"""Command-line front end: ``degpd {fit,compare,diagnose,simulate,study,transform}``."""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import diagnostics as diag
from .distributions import FAMILY_NAMES, ModelSpec
from .errors import ConfigurationError, DataError, DegpdError, StudyError, UnavailableError, UsageError
from .gam import GamFit, GamFormula, fit_gam, term_tests
from .inference import FitResult, bootstrap_ci, fit_mle
from .simstudy import StudyConfig, read_config_dict, run_study

SCHEMA_VERSION = 1
PARAM_FLAGS = ("kappa", "delta", "kappa1", "kappa2", "p", "sigma", "xi", "pi", "lambda")


def _log(msg):
    print(msg, file=sys.stderr)


def _resolve_seed(seed):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
        _log(f"seed: {seed}")
    return seed


def _write_json(obj, path):
    text = json.dumps(obj, indent=2)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n")


# ---------------------------------------------------------------------------
# data


def read_frame(path):
    try:
        return pd.read_csv(path)
    except FileNotFoundError:
        raise UsageError(f"cannot read {path}: no such file") from None
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def prepare_frame(df, response, covariates=()):
    """Select the used columns, drop incomplete rows and check the response."""
    cols = [response, *covariates]
    for c in cols:
        if c not in df.columns:
            raise DataError(f"column {c!r} not found (available: {', '.join(map(str, df.columns))})")
    used = df[list(dict.fromkeys(cols))]
    complete = used.dropna()
    dropped = len(used) - len(complete)
    if dropped:
        _log(f"dropped {dropped} row(s) with missing values")
    if complete.empty:
        raise DataError("no complete rows left")
    y = pd.to_numeric(complete[response], errors="coerce").to_numpy(dtype=float)
    if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError(f"response column {response!r} must hold non-negative integers")
    out = {c: pd.to_numeric(complete[c], errors="coerce").to_numpy(dtype=float) for c in covariates}
    out[response] = y.astype(np.int64)
    return out, dropped


# ---------------------------------------------------------------------------
# fit


def _formula_covariates(spec, formulas):
    return GamFormula.parse(spec, formulas).covariates if formulas else []


def fit_report(spec, frame, response, formulas=(), xi_link="log"):
    y = frame[response]
    if formulas:
        fit = fit_gam(list(formulas), spec, frame, response=response, xi_link=xi_link)
        report = {"kind": "gam", "fit": fit.to_dict()}
        try:
            report["term_tests"] = term_tests(fit)
        except UnavailableError as exc:
            report["term_tests"] = {"unavailable": str(exc)}
        report["aic"] = fit.aic
        report["bic"] = fit.bic
        return fit, report
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_mle(spec, y, xi_link=xi_link)
    for w in caught:
        _log(f"warning: {w.message}")
    return fit, {"kind": "iid", "fit": fit.to_dict(), "aic": fit.aic, "bic": fit.bic}


def cmd_fit(args):
    spec = ModelSpec(args.family)
    df = read_frame(args.data)
    covs = _formula_covariates(spec, args.formula)
    frame, dropped = prepare_frame(df, args.response, covs)
    fit, report = fit_report(spec, frame, args.response, args.formula, args.xi_link)
    report.update(schema_version=SCHEMA_VERSION, family=spec.name, response=args.response, rows_dropped=dropped)
    if args.bootstrap:
        if args.formula:
            raise UsageError("--bootstrap is only available for fits without --formula")
        seed = _resolve_seed(args.seed)
        boot = bootstrap_ci(fit, B=args.bootstrap, level=args.level, seed=seed, jobs=args.jobs)
        report["bootstrap"] = {
            "B": boot.B,
            "level": boot.level,
            "seed": seed,
            "n_failed": boot.n_failed,
            "intervals": {k: list(v) for k, v in boot.intervals.items()},
            "warning": boot.warning,
        }
    _write_json(report, args.output)
    return 0 if report["fit"]["converged"] else 1


def load_fit(path):
    try:
        report = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read fit report {path}: {exc}") from None
    if report.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"{path}: unsupported schema_version {report.get('schema_version')!r}")
    if report["kind"] == "gam":
        return GamFit.from_dict(report["fit"]), report
    return FitResult.from_dict(report["fit"]), report


# ---------------------------------------------------------------------------
# compare


def parse_candidate(text):
    """``FAMILY`` or ``FAMILY:FORMULA[;FORMULA...]``."""
    family, _, rest = text.partition(":")
    family = family.strip()
    if family not in FAMILY_NAMES:
        raise UsageError(f"unknown family {family!r} in candidate {text!r}")
    formulas = [f.strip() for f in rest.split(";") if f.strip()]
    return family, formulas


def cmd_compare(args):
    if len(args.candidate) < 2:
        raise UsageError("compare needs at least two --candidate entries")
    cands = [parse_candidate(c) for c in args.candidate]
    df = read_frame(args.data)
    covs = set()
    for fam, formulas in cands:
        covs.update(_formula_covariates(ModelSpec(fam), formulas))
    frame, dropped = prepare_frame(df, args.response, sorted(covs))
    rows = []
    for text, (fam, formulas) in zip(args.candidate, cands):
        row = {"candidate": text, "family": fam}
        try:
            fit, rep = fit_report(ModelSpec(fam), frame, args.response, formulas, args.xi_link)
            row.update(
                status="ok" if rep["fit"]["converged"] else "not converged",
                loglik=rep["fit"]["loglik"],
                df=(rep["fit"]["edf"]["total"] if rep["kind"] == "gam" and rep["fit"]["edf"] else rep["fit"].get("n_params")),
                aic=rep["aic"],
                bic=rep["bic"],
            )
        except DegpdError as exc:
            row.update(status=f"failed: {exc}", loglik=None, df=None, aic=None, bic=None)
        rows.append(row)
    rows.sort(key=lambda r: (r["aic"] is None, r["aic"] or 0.0, r["bic"] or 0.0))
    for i, r in enumerate(rows, 1):
        r["rank"] = i if r["aic"] is not None else None
    table = pd.DataFrame(rows, columns=["rank", "candidate", "status", "loglik", "df", "aic", "bic"])
    print(table.to_string(index=False))
    if args.output:
        _write_json({"schema_version": SCHEMA_VERSION, "rows_dropped": dropped, "ranking": rows}, args.output)
    return 0


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(args):
    fit, report = load_fit(args.fit)
    response = args.response or report.get("response", "y")
    df = read_frame(args.data)
    is_gam = isinstance(fit, GamFit)
    covs = fit.formula.covariates if is_gam else []
    frame, _ = prepare_frame(df, response, covs)
    y = frame[response]
    seed = _resolve_seed(args.seed)
    cdf = diag.fitted_cdf(fit, frame if is_gam else None)
    res = diag.randomized_residuals(cdf, y, seed=seed).with_ks()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"index": np.arange(y.size), "response": y, "residual": res.residuals}).to_csv(
        out / "residuals.csv", index=False, float_format="%.17g"
    )
    theo, emp = diag.qq_data(res.residuals)
    pd.DataFrame({"index": np.arange(y.size), "theoretical": theo, "empirical": emp}).to_csv(
        out / "qq.csv", index=False, float_format="%.17g"
    )
    summary = {"schema_version": SCHEMA_VERSION, "family": fit.spec.name, "residuals": res.to_dict()}
    if args.chi_square:
        if is_gam:
            msg = "chi-square test needs an iid fit; covariate-dependent fits have no common cell probabilities"
            _log(f"warning: {msg}")
            summary["chi_square"] = {"unavailable": msg}
        else:
            try:
                model = fit.model
                summary["chi_square"] = diag.chi_square_gof(model.pmf, y, fit.n_params, args.min_expected)
            except (UnavailableError, UsageError) as exc:
                summary["chi_square"] = {"unavailable": str(exc)}
    (out / "diagnostics.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


# ---------------------------------------------------------------------------
# simulate / study


def cmd_simulate(args):
    spec = ModelSpec(args.family)
    given = {p: getattr(args, p) for p in PARAM_FLAGS if getattr(args, p) is not None}
    missing = [p for p in spec.param_names if p not in given]
    if missing:
        raise UsageError(f"{spec.name} needs --{' --'.join(missing)}")
    extra = [p for p in given if p not in spec.param_names]
    if extra:
        raise UsageError(f"{', '.join(extra)} not a parameter of {spec.name}")
    if args.n < 1:
        raise UsageError("-n must be >= 1")
    model = spec.build(given)
    seed = _resolve_seed(args.seed)
    y = model.sample(args.n, seed)
    frame = pd.DataFrame({args.column: y})
    if args.output in (None, "-"):
        frame.to_csv(sys.stdout, index=False)
    else:
        frame.to_csv(args.output, index=False)
    return 0


def cmd_study(args):
    d = read_config_dict(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    elif "seed" not in d:
        d["seed"] = _resolve_seed(None)
    if args.replicates is not None:
        d["n_replicates"] = args.replicates
    cfg = StudyConfig.from_dict(d)
    try:
        result = run_study(cfg, jobs=args.jobs)
    except StudyError as exc:
        if exc.partial is not None and args.out_dir:
            exc.partial.write(args.out_dir)
        raise
    if args.out_dir:
        csv_path, json_path = result.write(args.out_dir)
        _log(f"wrote {csv_path} and {json_path}")
    print(json.dumps(result.summary(), indent=2))
    return 0


# ---------------------------------------------------------------------------
# transform


def transform_frame(df, columns, mode, window, lagged=False):
    """Trailing-window sum or median of ``columns``; incomplete leading rows are dropped.

    With ``lagged`` the window covers the ``window`` rows before the current
    one, excluding it.
    """
    if window < 1:
        raise UsageError("--window must be >= 1")
    if mode not in ("sum", "median"):
        raise UsageError(f"unknown mode {mode!r}")
    need = window + (1 if lagged else 0)
    if need > len(df):
        raise UsageError(f"window {window} is longer than the data ({len(df)} rows)")
    out = df.copy()
    for c in columns:
        if c not in df.columns:
            raise DataError(f"column {c!r} not found")
        roll = df[c].rolling(window, min_periods=window)
        vals = roll.sum() if mode == "sum" else roll.median()
        out[c] = vals.shift(1) if lagged else vals
    return out.iloc[need - 1 :]


def cmd_transform(args):
    df = read_frame(args.data)
    cols = [c.strip() for group in args.columns for c in group.split(",") if c.strip()]
    out = transform_frame(df, cols, args.mode, args.window, args.lagged)
    if args.output in (None, "-"):
        out.to_csv(sys.stdout, index=False)
    else:
        out.to_csv(args.output, index=False)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="degpd", description="Discrete extended GPD count models.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a CSV response column")
    f.add_argument("data")
    f.add_argument("--family", required=True, choices=FAMILY_NAMES)
    f.add_argument("--response", default="y")
    f.add_argument("--formula", action="append", default=[], help="e.g. 'sigma ~ s(WS) + s(RH, k=8)'; repeatable")
    f.add_argument("--xi-link", default="log", choices=("log", "identity"))
    f.add_argument("--bootstrap", type=int, default=0, metavar="B")
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--seed", type=int)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="rank candidate models by AIC")
    c.add_argument("data")
    c.add_argument("--candidate", action="append", default=[], help="FAMILY or FAMILY:FORMULA[;FORMULA]")
    c.add_argument("--response", default="y")
    c.add_argument("--xi-link", default="log", choices=("log", "identity"))
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("diagnose", help="randomized residuals, KS and chi-square tests")
    d.add_argument("data")
    d.add_argument("--fit", required=True, help="JSON report written by 'fit'")
    d.add_argument("--response")
    d.add_argument("--out-dir", default="diagnostics")
    d.add_argument("--seed", type=int)
    d.add_argument("--chi-square", action="store_true")
    d.add_argument("--min-expected", type=float, default=5.0)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("simulate", help="draw a sample from a family")
    s.add_argument("--family", required=True, choices=FAMILY_NAMES)
    for name in PARAM_FLAGS:
        s.add_argument(f"--{name}", type=float)
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.add_argument("--column", default="y")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    st = sub.add_parser("study", help="Monte-Carlo RMSE study from a TOML or JSON config")
    st.add_argument("config")
    st.add_argument("--seed", type=int)
    st.add_argument("--replicates", type=int)
    st.add_argument("--jobs", type=int, default=1)
    st.add_argument("--out-dir")
    st.set_defaults(func=cmd_study)

    t = sub.add_parser("transform", help="trailing moving sum or median")
    t.add_argument("data")
    t.add_argument("--columns", action="append", required=True, help="comma-separated; repeatable")
    t.add_argument("--mode", choices=("sum", "median"), default="sum")
    t.add_argument("--window", type=int, default=3)
    t.add_argument("--lagged", action="store_true", help="use the previous WINDOW rows, excluding the current one")
    t.add_argument("-o", "--output")
    t.set_defaults(func=cmd_transform)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DataError, UsageError) as exc:
        _log(f"error: {exc}")
        return 2
    except DegpdError as exc:
        _log(f"error: {exc}")
        return exc.exit_code
    except ValueError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
