"""Monte-Carlo harness: simulate from a known model, refit, summarise by RMSE."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import ModelSpec
from .errors import ConfigurationError, FitError, NumericalError, StudyError, UsageError
from .inference import fit_mle, sub_seed

MAX_FAILURE_RATE = 0.5


def rmse(estimates, truth):
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise UsageError("rmse needs at least one estimate")
    return float(np.sqrt(np.mean((est - truth) ** 2)))


@dataclass
class StudyConfig:
    family: str
    truth: dict
    n: int = 1000
    n_replicates: int = 300
    seed: int = 0
    report: tuple = ()
    name: str = "study"
    max_iter: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        spec = ModelSpec(self.family)
        missing = [p for p in spec.param_names if p not in self.truth]
        if missing:
            raise ConfigurationError(f"truth is missing {', '.join(missing)} for {self.family}")
        extra = [p for p in self.truth if p not in spec.param_names]
        if extra:
            raise ConfigurationError(f"{', '.join(extra)} not a parameter of {self.family}")
        if self.n < 50:
            raise ConfigurationError(f"n must be >= 50, got {self.n}")
        if self.n_replicates < 2:
            raise ConfigurationError(f"n_replicates must be >= 2, got {self.n_replicates}")
        self.truth = {p: float(self.truth[p]) for p in spec.param_names}
        self.report = tuple(self.report) or spec.param_names
        bad = [p for p in self.report if p not in spec.param_names]
        if bad:
            raise ConfigurationError(f"cannot report unknown parameter(s) {', '.join(bad)}")
        # validates the truth (e.g. kappa2 >= kappa1) before any work is done
        spec.build(self.truth)

    @property
    def spec(self):
        return ModelSpec(self.family)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "family" not in d or "truth" not in d:
            raise ConfigurationError("study config needs 'family' and 'truth'")
        known = {"family", "truth", "n", "n_replicates", "seed", "report", "name", "max_iter", "tol"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown study config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self):
        return {
            "name": self.name,
            "family": self.family,
            "truth": dict(self.truth),
            "n": self.n,
            "n_replicates": self.n_replicates,
            "seed": self.seed,
            "report": list(self.report),
            "max_iter": self.max_iter,
            "tol": self.tol,
        }


@dataclass
class StudyResult:
    config: StudyConfig
    rmse: dict
    estimates: np.ndarray  # successful replicates x parameters, natural scale
    replicate_index: np.ndarray
    converged: np.ndarray  # per successful replicate
    n_failed: int
    failures: list = field(default_factory=list)  # (replicate, message)

    @property
    def relative_rmse(self):
        return {p: v / abs(self.config.truth[p]) for p, v in self.rmse.items() if self.config.truth[p] != 0}

    def summary(self):
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "rmse": self.rmse,
            "relative_rmse": self.relative_rmse,
            "mean_estimate": {p: float(self.estimates[:, j].mean()) for j, p in enumerate(self.config.spec.param_names)}
            if len(self.estimates)
            else {},
            "n_success": int(len(self.estimates)),
            "n_failed": self.n_failed,
            "n_not_converged": int(np.sum(~self.converged)),
        }

    def write(self, out_dir):
        """Write ``<name>_estimates.csv`` (one row per replicate) and ``<name>_summary.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = self.config.spec.param_names
        csv_path = out / f"{self.config.name}_estimates.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", *names, "converged"])
            for r, row, c in zip(self.replicate_index, self.estimates, self.converged):
                w.writerow([int(r), *(repr(float(v)) for v in row), int(c)])
        json_path = out / f"{self.config.name}_summary.json"
        json_path.write_text(json.dumps(self.summary(), indent=2))
        return csv_path, json_path


def _replicate(args):
    config, r = args
    spec = config.spec
    model = spec.build(config.truth)
    data = model.sample(config.n, sub_seed(config.seed, r))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_mle(spec, data, start=config.truth, max_iter=config.max_iter, tol=config.tol)
    except (FitError, NumericalError) as exc:
        return r, None, False, str(exc)
    est = np.array([fit.estimates[p] for p in spec.param_names])
    if not np.all(np.isfinite(est)):
        return r, None, False, "non-finite estimate"
    return r, est, fit.converged, fit.message


def run_study(config: StudyConfig, jobs=1):
    """Run every replicate, fit by maximum likelihood and tabulate RMSEs.

    Replicate ``r`` always uses ``sub_seed(seed, r)``, so results do not depend
    on ``jobs``. Fits that raise are counted as failures and left out of the
    RMSE; fits that stop short of the gradient tolerance are kept and flagged.
    """
    tasks = [(config, r) for r in range(config.n_replicates)]
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as ex:
            outs = list(ex.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        outs = [_replicate(t) for t in tasks]
    outs.sort(key=lambda o: o[0])
    good = [o for o in outs if o[1] is not None]
    failures = [(o[0], o[3]) for o in outs if o[1] is None]
    names = config.spec.param_names
    est = np.array([o[1] for o in good]) if good else np.empty((0, len(names)))
    result = StudyResult(
        config=config,
        rmse={p: rmse(est[:, names.index(p)], config.truth[p]) for p in config.report} if good else {},
        estimates=est,
        replicate_index=np.array([o[0] for o in good], dtype=int),
        converged=np.array([o[2] for o in good], dtype=bool),
        n_failed=len(failures),
        failures=failures,
    )
    if len(failures) > MAX_FAILURE_RATE * config.n_replicates:
        raise StudyError(f"{len(failures)}/{config.n_replicates} replicates failed", partial=result)
    return result


def read_config_dict(path):
    """Raw study-config mapping from a TOML or JSON file."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read study config {path}: {exc}") from None
    if path.suffix.lower() == ".json":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            d = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    d.setdefault("name", path.stem)
    return d


def load_config(path):
    return StudyConfig.from_dict(read_config_dict(path))
