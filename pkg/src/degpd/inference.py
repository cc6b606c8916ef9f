"""Maximum likelihood for constant-parameter (iid) count models."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .distributions import ModelSpec
from .errors import FitError, UsageError
from .links import ParamLinkMap
from .optim import bfgs_maximize, fd_gradient, fd_hessian

PMF_FLOOR = 1e-300
XI_STARTS = (0.05, 0.2, 0.5)
KAPPA_STARTS = (0.5, 1.0, 5.0)


def as_spec(spec) -> ModelSpec:
    return spec if isinstance(spec, ModelSpec) else ModelSpec(spec)


def sub_seed(seed, r):
    """Independent stream for replicate ``r`` of a run seeded with ``seed``."""
    return np.random.SeedSequence([int(seed), int(r)])


def _counts(data):
    data = np.asarray(data)
    if data.size == 0:
        raise UsageError("data must be nonempty")
    if np.any(data < 0) or np.any(data != np.floor(data)):
        raise UsageError("data must be non-negative integers")
    values, counts = np.unique(data.astype(np.int64), return_counts=True)
    return values, counts


def _loglik_counts(spec: ModelSpec, theta, values, counts):
    """Sum of log pmf over tabulated data; returns (loglik, suspect)."""
    pmf = spec.pmf(theta, values)
    if not np.all(np.isfinite(pmf)) or np.any(pmf <= 0):
        return -np.inf, True
    suspect = bool(np.any(pmf < PMF_FLOOR))
    return float(counts @ np.log(np.maximum(pmf, PMF_FLOOR))), suspect


def loglik(spec, params: Mapping, data) -> float:
    """Log-likelihood of iid ``data``; ``-inf`` when some observation has zero mass."""
    spec = as_spec(spec)
    values, counts = _counts(data)
    return _loglik_counts(spec, params, values, counts)[0]


def information_criteria(loglik, n_params, n_obs):
    if n_obs < 1:
        raise UsageError("n_obs must be >= 1")
    return {"aic": -2.0 * loglik + 2.0 * n_params, "bic": -2.0 * loglik + n_params * np.log(n_obs)}


@dataclass
class FitResult:
    spec: ModelSpec
    links: ParamLinkMap
    estimates: dict
    link_estimates: np.ndarray
    loglik: float
    covariance: np.ndarray | None
    n_obs: int
    converged: bool
    n_iter: int = 0
    grad_max: float = np.nan
    suspect: bool = False
    message: str = ""
    std_errors: dict | None = field(default=None)

    def __post_init__(self):
        if self.std_errors is None and self.covariance is not None:
            self.std_errors = std_errors(self)

    @property
    def n_params(self):
        return self.spec.n_params

    @property
    def aic(self):
        return information_criteria(self.loglik, self.n_params, self.n_obs)["aic"]

    @property
    def bic(self):
        return information_criteria(self.loglik, self.n_params, self.n_obs)["bic"]

    @property
    def model(self):
        return self.spec.build(self.estimates)

    def to_dict(self):
        return {
            "family": self.spec.name,
            "links": self.links.to_dict(),
            "estimates": {k: float(v) for k, v in self.estimates.items()},
            "link_estimates": [float(v) for v in self.link_estimates],
            "std_errors": None if self.std_errors is None else {k: float(v) for k, v in self.std_errors.items()},
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "loglik": self.loglik,
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "aic": self.aic,
            "bic": self.bic,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "grad_max": self.grad_max,
            "suspect": self.suspect,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d):
        spec = ModelSpec(d["family"])
        links = ParamLinkMap.from_dict(d["links"])
        eta = np.array(d["link_estimates"], dtype=float)
        cov = None if d.get("covariance") is None else np.array(d["covariance"], dtype=float)
        est = {n: float(v) for n, v in links.from_link(eta).items()}
        return cls(
            spec=spec,
            links=links,
            estimates={n: est[n] for n in spec.param_names},
            link_estimates=eta,
            loglik=float(d["loglik"]),
            covariance=cov,
            n_obs=int(d["n_obs"]),
            converged=bool(d["converged"]),
            n_iter=int(d.get("n_iter", 0)),
            grad_max=float(d.get("grad_max", np.nan)),
            suspect=bool(d.get("suspect", False)),
            message=d.get("message", ""),
            std_errors=d.get("std_errors"),
        )


def default_start(spec: ModelSpec, data, xi0=0.2, kappa0=1.0):
    data = np.asarray(data, dtype=float)
    mean = float(np.mean(data))
    zero_frac = float(np.mean(data == 0))
    start = {
        "sigma": mean + 1.0,
        "xi": xi0,
        "kappa": kappa0,
        "kappa1": kappa0,
        "kappa2": 2.0 * kappa0,
        "delta": 1.0,
        "p": 0.5,
        "pi": float(np.clip(0.5 * zero_frac, 0.01, 0.99)),
        "lambda": max(mean, 0.1),
    }
    return {n: start[n] for n in spec.param_names}


def _objective(spec, links, values, counts):
    def f(eta):
        theta = links.from_link(eta)
        return _loglik_counts(spec, theta, values, counts)[0]

    return f


def _single_fit(spec, links, values, counts, start, tol, max_iter):
    eta0 = links.to_link(start)
    f = _objective(spec, links, values, counts)
    return bfgs_maximize(f, eta0, tol=tol, max_iter=max_iter)


def _start_grid(spec, data):
    xis = XI_STARTS if "xi" in spec.param_names else (0.2,)
    kappa_like = any(n in spec.param_names for n in ("kappa", "kappa1"))
    kappas = KAPPA_STARTS if kappa_like else (1.0,)
    return [default_start(spec, data, xi0=x, kappa0=k) for x in xis for k in kappas]


def fit_mle(spec, data, start: Mapping | None = None, max_iter=500, tol=1e-6, xi_link="log", multistart=True):
    """Fit an iid model by BFGS on the link scale with finite-difference gradients.

    If the first start fails or stops without meeting the gradient tolerance,
    a grid of starts over xi and kappa is tried and the best converged
    optimum kept.
    """
    spec = as_spec(spec)
    data = np.asarray(data)
    values, counts = _counts(data)
    if spec.zero_inflated and values[0] != 0:
        warnings.warn("zero-inflated family fitted to data without zeros", stacklevel=2)
    links = ParamLinkMap(spec.param_names, xi_link=xi_link)
    first = dict(start) if start is not None else default_start(spec, data)
    results = [_single_fit(spec, links, values, counts, first, tol, max_iter)]
    if multistart and not results[0].converged:
        for s in _start_grid(spec, data):
            results.append(_single_fit(spec, links, values, counts, s, tol, max_iter))
    finite = [r for r in results if np.isfinite(r.fun)]
    if not finite:
        raise FitError(f"{spec.name}: no start produced a finite log-likelihood")
    best = max(finite, key=lambda r: (r.converged, r.fun))
    return _finish(spec, links, values, counts, best, n_obs=int(data.size))


def _finish(spec, links, values, counts, opt, n_obs):
    f = _objective(spec, links, values, counts)
    theta = links.from_link(opt.x)
    _, suspect = _loglik_counts(spec, theta, values, counts)
    cov = None
    try:
        neg_h = -fd_hessian(f, opt.x)
        if np.all(np.isfinite(neg_h)):
            np.linalg.cholesky(neg_h)
            cov = np.linalg.inv(neg_h)
            cov = 0.5 * (cov + cov.T)
    except np.linalg.LinAlgError:
        cov = None
    return FitResult(
        spec=spec,
        links=links,
        estimates={n: float(theta[n]) for n in spec.param_names},
        link_estimates=np.array(opt.x, dtype=float),
        loglik=float(opt.fun),
        covariance=cov,
        n_obs=n_obs,
        converged=bool(opt.converged),
        n_iter=opt.n_iter,
        grad_max=opt.grad_max,
        suspect=suspect,
        message=opt.message,
    )


def std_errors(fit: FitResult):
    """Delta-method natural-scale standard errors, or None without a covariance."""
    if fit.covariance is None:
        return None
    jac = fit.links.jacobian(fit.link_estimates)
    cov_nat = jac @ fit.covariance @ jac.T
    diag = np.diag(cov_nat)
    if np.any(diag < 0):
        return None
    return {n: float(np.sqrt(v)) for n, v in zip(fit.spec.param_names, diag)}


def gradient_at(fit: FitResult, data):
    values, counts = _counts(data)
    return fd_gradient(_objective(fit.spec, fit.links, values, counts), fit.link_estimates)


@dataclass
class BootstrapResult:
    level: float
    intervals: dict
    replicates: np.ndarray
    n_failed: int
    B: int
    warning: str | None = None


def _bootstrap_one(args):
    fit, r, seed, max_iter, tol = args
    model = fit.model
    data = model.sample(fit.n_obs, sub_seed(seed, r))
    try:
        refit = fit_mle(
            fit.spec,
            data,
            start=fit.estimates,
            max_iter=max_iter,
            tol=tol,
            xi_link=fit.links.links["xi"].name if "xi" in fit.links.links else "log",
            multistart=False,
        )
    except FitError:
        return None
    if not refit.converged:
        return None
    return np.array([refit.estimates[n] for n in fit.spec.param_names])


def bootstrap_ci(fit: FitResult, B=200, level=0.95, seed=0, jobs=1, max_iter=500, tol=1e-6):
    """Parametric bootstrap percentile intervals.

    Replicate ``r`` simulates from the fitted model with ``sub_seed(seed, r)``
    and refits from the original estimates; results are merged in replicate
    order, so the worker count does not change the output.
    """
    if not (0 < level < 1):
        raise UsageError("level must lie in (0, 1)")
    tasks = [(fit, r, seed, max_iter, tol) for r in range(B)]
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as ex:
            outs = list(ex.map(_bootstrap_one, tasks))
    else:
        outs = [_bootstrap_one(t) for t in tasks]
    good = [o for o in outs if o is not None]
    n_failed = B - len(good)
    reps = np.array(good) if good else np.empty((0, fit.n_params))
    alpha = (1.0 - level) / 2.0
    intervals = {}
    for j, n in enumerate(fit.spec.param_names):
        if len(good):
            lo, hi = np.quantile(reps[:, j], [alpha, 1.0 - alpha])
            intervals[n] = (float(lo), float(hi))
    warning = None
    if n_failed > 0.2 * B:
        warning = f"{n_failed}/{B} bootstrap refits failed"
        warnings.warn(warning, stacklevel=2)
    return BootstrapResult(level=level, intervals=intervals, replicates=reps, n_failed=n_failed, B=B, warning=warning)
