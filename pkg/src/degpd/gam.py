"""Penalised-spline additive models for the distribution parameters.

Each parameter theta_i gets a linear predictor eta_i = intercept + sum of
centred smooth terms, mapped through its link. The log-likelihood depends on
the coefficients only through the n x d matrix of predictors, so gradients
and Hessians are assembled from per-observation finite differences in eta
and the chain rule through the (linear) design blocks.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from .distributions import ModelSpec
from .errors import ConfigurationError, DataError, FitError, UnavailableError, UsageError
from .inference import PMF_FLOOR, as_spec, fit_mle, information_criteria
from .links import ParamLinkMap
from .optim import bfgs_maximize, gradient_converged
from .splines import SmoothBasis, TermBasis, fit_basis

LAMBDA_GRID = tuple(np.logspace(-4, 3, 7))
ETA_GRAD_STEP = 1e-6
ETA_HESS_STEP = 1e-4

_FORMULA_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*~\s*(.+?)\s*$")
_SMOOTH_RE = re.compile(r"^s\(\s*([A-Za-z_][A-Za-z0-9_.]*)\s*(?:,\s*k\s*=\s*(\d+)\s*)?\)$")


# ---------------------------------------------------------------------------
# formulas


@dataclass(frozen=True)
class GamFormula:
    """Smooth terms per distribution parameter; unlisted parameters are intercept-only."""

    spec: ModelSpec
    smooths: tuple  # tuple of (param, tuple[TermBasis, ...]) in parameter order

    @classmethod
    def parse(cls, spec, lines=()):
        spec = as_spec(spec)
        terms = {n: [] for n in spec.param_names}
        seen = set()
        for line in lines:
            m = _FORMULA_RE.match(line)
            if not m:
                raise ConfigurationError(f"cannot parse formula {line!r}; expected 'param ~ 1' or 'param ~ s(x) + ...'")
            param, rhs = m.group(1), m.group(2)
            if param not in terms:
                raise ConfigurationError(f"{param!r} is not a parameter of {spec.name} ({', '.join(spec.param_names)})")
            if param in seen:
                raise ConfigurationError(f"parameter {param!r} appears in more than one formula")
            seen.add(param)
            for piece in (p.strip() for p in rhs.split("+")):
                if piece == "1":
                    continue
                sm = _SMOOTH_RE.match(piece.replace(" ", ""))
                if not sm:
                    raise ConfigurationError(f"cannot parse term {piece!r} in {line!r}")
                k = int(sm.group(2)) if sm.group(2) else 10
                if any(t.covariate == sm.group(1) for t in terms[param]):
                    raise ConfigurationError(f"duplicate smooth s({sm.group(1)}) for {param}")
                terms[param].append(TermBasis(sm.group(1), k))
        return cls(spec, tuple((n, tuple(terms[n])) for n in spec.param_names))

    @property
    def covariates(self):
        return sorted({t.covariate for _, ts in self.smooths for t in ts})

    def lines(self):
        out = []
        for param, ts in self.smooths:
            rhs = " + ".join(f"s({t.covariate}, k={t.k})" for t in ts) if ts else "1"
            out.append(f"{param} ~ {rhs}")
        return out


# ---------------------------------------------------------------------------
# model matrices


@dataclass
class TermIndex:
    param: str
    label: str
    slice: slice
    basis: SmoothBasis | None = None


@dataclass
class ModelMatrices:
    """Per-parameter design blocks plus the coefficient layout.

    Coefficients are ordered parameter by parameter; within a parameter the
    intercept comes first, then each smooth in formula order.
    """

    spec: ModelSpec
    designs: list  # one (n x p_i) array per parameter
    offsets: list  # start index of each parameter's block
    terms: list  # TermIndex for every intercept and smooth
    n_obs: int

    @property
    def n_coef(self):
        return self.offsets[-1] + self.designs[-1].shape[1]

    @property
    def smooth_terms(self):
        return [t for t in self.terms if t.basis is not None]

    def penalty(self, lambdas):
        """Assembled block-diagonal penalty sum_j lambda_j S_j."""
        s = np.zeros((self.n_coef, self.n_coef))
        for t in self.smooth_terms:
            s[t.slice, t.slice] += lambdas[term_key(t)] * t.basis.penalty
        return s

    def eta(self, beta):
        return np.array([x @ beta[o : o + x.shape[1]] for x, o in zip(self.designs, self.offsets)])


def term_key(t: TermIndex):
    return f"{t.param}:{t.label}"


def _column(data, name):
    try:
        col = data[name]
    except (KeyError, IndexError):
        raise ConfigurationError(f"covariate column {name!r} not found in data") from None
    col = np.asarray(col, dtype=float)
    if not np.all(np.isfinite(col)):
        raise DataError(f"covariate {name!r} contains non-finite values")
    return col


def assemble(formula: GamFormula, data, bases: Mapping | None = None, n_obs=None) -> ModelMatrices:
    """Build design blocks for ``data``.

    With ``bases`` (keyed by ``param:s(x)``) the stored knots and constraints
    are reused, as needed for prediction on new data.
    """
    designs, offsets, terms = [], [], []
    n = None
    offset = 0
    for param, smooths in formula.smooths:
        cols = []
        if n is None:
            n = len(_column(data, smooths[0].covariate)) if smooths else None
        for t in smooths:
            x = _column(data, t.covariate)
            key = f"{param}:{t.label}"
            basis = bases[key] if bases is not None else fit_basis(t, x)
            block, _ = basis.design(x)
            cols.append((t.label, block, basis))
        designs.append(cols)
    if n is None:
        n = n_obs if n_obs is not None else _infer_length(data)
    out_designs = []
    for (param, _), cols in zip(formula.smooths, designs):
        blocks = [np.ones((n, 1))] + [b for _, b, _ in cols]
        offsets.append(offset)
        terms.append(TermIndex(param, "(Intercept)", slice(offset, offset + 1)))
        pos = offset + 1
        for label, block, basis in cols:
            if block.shape[0] != n:
                raise DataError("covariate columns differ in length")
            terms.append(TermIndex(param, label, slice(pos, pos + block.shape[1]), basis))
            pos += block.shape[1]
        out_designs.append(np.hstack(blocks))
        offset = pos
    return ModelMatrices(formula.spec, out_designs, offsets, terms, n)


def _infer_length(data):
    if hasattr(data, "__len__") and hasattr(data, "columns"):
        return len(data)
    for v in data.values():
        return len(v)
    raise DataError("cannot infer number of observations")


# ---------------------------------------------------------------------------
# likelihood pieces


def _obs_loglik(spec, links, eta, y):
    theta = links.from_link(eta)
    with np.errstate(invalid="ignore"):
        pmf = spec.pmf(theta, y)
    bad = ~np.isfinite(pmf) | (pmf <= 0)
    out = np.log(np.maximum(np.where(bad, 1.0, pmf), PMF_FLOOR))
    return np.where(bad, -np.inf, out)


def _eta_gradient(spec, links, eta, y, step=ETA_GRAD_STEP):
    """d loglik_j / d eta_ij for every observation j, by central differences."""
    g = np.empty_like(eta)
    for i in range(eta.shape[0]):
        h = step * (1.0 + np.abs(eta[i]))
        up = eta.copy()
        dn = eta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (_obs_loglik(spec, links, up, y) - _obs_loglik(spec, links, dn, y)) / (up[i] - dn[i])
    return g


def _eta_hessian(spec, links, eta, y, step=ETA_HESS_STEP):
    d = eta.shape[0]
    w = np.empty((d, d, eta.shape[1]))
    for l in range(d):
        h = step * (1.0 + np.abs(eta[l]))
        up = eta.copy()
        dn = eta.copy()
        up[l] += h
        dn[l] -= h
        w[:, l, :] = (_eta_gradient(spec, links, up, y) - _eta_gradient(spec, links, dn, y)) / (up[l] - dn[l])
    return 0.5 * (w + w.transpose(1, 0, 2))


def unpenalized_loglik(beta, matrices: ModelMatrices, links, y):
    val = _obs_loglik(matrices.spec, links, matrices.eta(beta), y).sum()
    return float(val) if np.isfinite(val) else -np.inf


def penalized_loglik(beta, lambdas, matrices: ModelMatrices, family_spec, y, links=None):
    """loglik(beta) - 0.5 * sum_j lambda_j beta_j' S_j beta_j."""
    spec = as_spec(family_spec)
    if links is None:
        links = ParamLinkMap(spec.param_names)
    beta = np.asarray(beta, dtype=float)
    if beta.size != matrices.n_coef:
        raise UsageError(f"beta has {beta.size} entries, model needs {matrices.n_coef}")
    ll = unpenalized_loglik(beta, matrices, links, np.asarray(y))
    return ll - 0.5 * beta @ matrices.penalty(lambdas) @ beta


def loglik_gradient(beta, matrices: ModelMatrices, links, y):
    eta = matrices.eta(beta)
    g_eta = _eta_gradient(matrices.spec, links, eta, y)
    return np.concatenate([x.T @ g for x, g in zip(matrices.designs, g_eta)])


def neg_loglik_hessian(beta, matrices: ModelMatrices, links, y):
    """Observed information (negative Hessian of the unpenalised loglik) in beta."""
    eta = matrices.eta(beta)
    w = _eta_hessian(matrices.spec, links, eta, y)
    p = matrices.n_coef
    h = np.zeros((p, p))
    for i, (xi, oi) in enumerate(zip(matrices.designs, matrices.offsets)):
        for l, (xl, ol) in enumerate(zip(matrices.designs, matrices.offsets)):
            h[oi : oi + xi.shape[1], ol : ol + xl.shape[1]] = -(xi.T @ (w[i, l][:, None] * xl))
    return 0.5 * (h + h.T)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class GamFit:
    spec: ModelSpec
    formula: GamFormula
    links: ParamLinkMap
    matrices: ModelMatrices
    beta: np.ndarray
    lambdas: dict
    loglik: float
    penalized_loglik: float
    hessian: np.ndarray | None  # observed information at beta
    covariance: np.ndarray | None
    converged: bool
    n_obs: int
    grad_max: float = np.nan
    selection: list = field(default_factory=list)  # (lambdas, aic_edf) for every evaluated grid point

    @property
    def terms(self):
        return self.matrices.terms

    @property
    def edf(self):
        return effective_dof(self)

    @property
    def aic(self):
        return -2.0 * self.loglik + 2.0 * self.edf["total"]

    @property
    def bic(self):
        return -2.0 * self.loglik + self.edf["total"] * np.log(self.n_obs)

    def coefficients(self):
        return {term_key(t): self.beta[t.slice].copy() for t in self.terms}

    def to_dict(self):
        try:
            edf = effective_dof(self)
        except UnavailableError:
            edf = None
        return {
            "family": self.spec.name,
            "formula": self.formula.lines(),
            "links": self.links.to_dict(),
            "beta": self.beta.tolist(),
            "lambdas": dict(self.lambdas),
            "bases": {term_key(t): t.basis.to_dict() for t in self.matrices.smooth_terms},
            "loglik": self.loglik,
            "penalized_loglik": self.penalized_loglik,
            "edf": edf,
            "hessian": None if self.hessian is None else self.hessian.tolist(),
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "converged": self.converged,
            "n_obs": self.n_obs,
            "grad_max": self.grad_max,
        }

    @classmethod
    def from_dict(cls, d):
        """Rebuild a fit for prediction and reporting (the training design is not stored)."""
        spec = as_spec(d["family"])
        formula = GamFormula.parse(spec, d["formula"])
        bases = {k: SmoothBasis.from_dict(v) for k, v in d["bases"].items()}
        probe = {b.term.covariate: b.knots[:1] for b in bases.values()}
        matrices = assemble(formula, probe, bases=bases, n_obs=1)
        arr = lambda v: None if v is None else np.array(v, dtype=float)  # noqa: E731
        return cls(
            spec=spec,
            formula=formula,
            links=ParamLinkMap.from_dict(d["links"]),
            matrices=matrices,
            beta=np.array(d["beta"], dtype=float),
            lambdas={k: float(v) for k, v in d["lambdas"].items()},
            loglik=float(d["loglik"]),
            penalized_loglik=float(d["penalized_loglik"]),
            hessian=arr(d.get("hessian")),
            covariance=arr(d.get("covariance")),
            converged=bool(d["converged"]),
            n_obs=int(d["n_obs"]),
            grad_max=float(d.get("grad_max", np.nan)),
        )


def effective_dof(fit: GamFit):
    """Total and per-term edf from trace[(H + S)^-1 H]."""
    if fit.hessian is None:
        raise UnavailableError("observed information unavailable for this fit")
    return _edf(fit.hessian, fit.matrices.penalty(fit.lambdas), fit.matrices)


def _edf(h, s, matrices):
    try:
        f = np.linalg.solve(h + s, h)
    except np.linalg.LinAlgError:
        raise UnavailableError("penalised Hessian is singular") from None
    diag = np.diag(f)
    out = {term_key(t): float(diag[t.slice].sum()) for t in matrices.terms}
    out["total"] = float(diag.sum())
    return out


def _inner_fit(matrices, links, y, lambdas, beta0, tol, max_iter):
    s = matrices.penalty(lambdas)

    def f(b):
        ll = unpenalized_loglik(b, matrices, links, y)
        return ll - 0.5 * b @ s @ b if np.isfinite(ll) else -np.inf

    def grad(b):
        return loglik_gradient(b, matrices, links, y) - s @ b

    inv0 = None
    try:
        h0 = neg_loglik_hessian(beta0, matrices, links, y) + s
        np.linalg.cholesky(h0)
        inv0 = np.linalg.inv(h0)
    except np.linalg.LinAlgError:
        inv0 = None
    opt = bfgs_maximize(f, beta0, grad=grad, tol=tol, max_iter=max_iter, inv_hess0=inv0)
    beta, fun, g = opt.x, opt.fun, opt.grad
    # a few Newton steps tighten the optimum used for edf and covariances
    for _ in range(5):
        if not np.isfinite(fun):
            break
        try:
            h = neg_loglik_hessian(beta, matrices, links, y) + s
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        improved = False
        for _ in range(20):
            cand = beta + alpha * step
            fc = f(cand)
            if np.isfinite(fc) and fc >= fun:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        beta, fun = cand, fc
        g = grad(beta)
        if np.max(np.abs(g)) <= 1e-3 * tol * (1 + abs(fun)):
            break
    converged = bool(np.isfinite(fun) and gradient_converged(g, fun, tol))
    return beta, fun, g, converged


def _parse_lambda_strategy(strategy, matrices):
    keys = [term_key(t) for t in matrices.smooth_terms]
    if strategy is None or strategy == "grid":
        return keys, None
    if isinstance(strategy, (int, float)):
        return keys, {k: float(strategy) for k in keys}
    if isinstance(strategy, Mapping):
        missing = [k for k in keys if k not in strategy]
        if missing:
            raise ConfigurationError(f"no lambda given for {', '.join(missing)}")
        return keys, {k: float(strategy[k]) for k in keys}
    raise ConfigurationError(f"unknown lambda strategy {strategy!r}")


def fit_gam(
    formula: GamFormula,
    family_spec,
    data,
    lambda_strategy="grid",
    response="y",
    grid=LAMBDA_GRID,
    xi_link="log",
    tol=1e-6,
    max_iter=1000,
    start=None,
    max_sweeps=3,
):
    """Penalised maximum likelihood with AIC-driven smoothing selection.

    ``lambda_strategy`` is ``"grid"`` (coordinate-wise search over ``grid``
    for each smooth, minimising -2 loglik + 2 edf), a single number applied
    to every smooth, or a mapping ``{"sigma:s(x)": lam, ...}``. ``response``
    names the count column of ``data`` or is the count array itself.
    """
    spec = as_spec(family_spec)
    if isinstance(formula, (list, tuple)):
        formula = GamFormula.parse(spec, formula)
    y = np.asarray(response if not isinstance(response, str) else data[response])
    if y.size == 0:
        raise UsageError("data must be nonempty")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError("response must contain non-negative integers")
    y = y.astype(np.int64)
    matrices = assemble(formula, data)
    links = ParamLinkMap(spec.param_names, xi_link=xi_link)
    if start is None:
        iid = fit_mle(spec, y, xi_link=xi_link, tol=tol)
        start = np.zeros(matrices.n_coef)
        for i, off in enumerate(matrices.offsets):
            start[off] = iid.link_estimates[i]
    beta0 = np.asarray(start, dtype=float)

    keys, fixed = _parse_lambda_strategy(lambda_strategy, matrices)
    cache = {}

    def evaluate(lams, b0):
        key = tuple(lams[k] for k in keys)
        if key not in cache:
            beta, fun, g, conv = _inner_fit(matrices, links, y, lams, b0, tol, max_iter)
            ll = unpenalized_loglik(beta, matrices, links, y)
            try:
                h = neg_loglik_hessian(beta, matrices, links, y)
                edf = _edf(h, matrices.penalty(lams), matrices)["total"]
            except UnavailableError:
                h, edf = None, np.nan
            aic = -2.0 * ll + 2.0 * edf if conv and np.isfinite(edf) else np.inf
            cache[key] = dict(lams=dict(lams), beta=beta, fun=fun, g=g, conv=conv, ll=ll, h=h, aic=aic)
        return cache[key]

    if fixed is not None or not keys:
        best = evaluate(fixed or {}, beta0)
    else:
        current = {k: float(grid[len(grid) // 2]) for k in keys}
        best = evaluate(current, beta0)
        for _ in range(max_sweeps):
            changed = False
            for k in keys:
                for lam in grid:
                    trial = dict(current)
                    trial[k] = float(lam)
                    res = evaluate(trial, best["beta"])
                    if _better(res, best, keys):
                        best, current, changed = res, trial, True
            if not changed:
                break
    if not best["conv"] and not any(r["conv"] for r in cache.values()):
        raise FitError("penalised fit did not converge at any smoothing parameter value")
    s = matrices.penalty(best["lams"])
    cov = None
    if best["h"] is not None:
        try:
            cov = np.linalg.inv(best["h"] + s)
            cov = 0.5 * (cov + cov.T)
        except np.linalg.LinAlgError:
            cov = None
    selection = [(r["lams"], r["aic"]) for r in cache.values()]
    return GamFit(
        spec=spec,
        formula=formula,
        links=links,
        matrices=matrices,
        beta=best["beta"],
        lambdas=best["lams"],
        loglik=best["ll"],
        penalized_loglik=best["fun"],
        hessian=best["h"],
        covariance=cov,
        converged=best["conv"],
        n_obs=int(y.size),
        grad_max=float(np.max(np.abs(best["g"]))) if best["g"].size else 0.0,
        selection=selection,
    )


def _better(a, b, keys):
    if a["aic"] < b["aic"] - 1e-9:
        return True
    if abs(a["aic"] - b["aic"]) <= 1e-9:
        # ties go to the smoother model
        return np.prod([a["lams"][k] for k in keys]) > np.prod([b["lams"][k] for k in keys])
    return False


# ---------------------------------------------------------------------------
# inference on fitted terms


def term_tests(fit: GamFit):
    """Wald tests: z for intercepts, chi-square with edf degrees of freedom for smooths."""
    if fit.covariance is None:
        raise UnavailableError("covariance unavailable; cannot compute term tests")
    edf = effective_dof(fit)
    out = []
    for t in fit.terms:
        b = fit.beta[t.slice]
        v = fit.covariance[t.slice, t.slice]
        if t.basis is None:
            se = float(np.sqrt(v[0, 0]))
            z = float(b[0] / se)
            out.append(
                dict(param=t.param, term=t.label, estimate=float(b[0]), std_error=se, z=z, p_value=float(2 * stats.norm.sf(abs(z))))
            )
        else:
            stat = float(b @ np.linalg.pinv(v) @ b)
            df = edf[term_key(t)]
            out.append(
                dict(
                    param=t.param,
                    term=t.label,
                    edf=df,
                    max_df=t.basis.n_coef,
                    chi_sq=stat,
                    p_value=float(stats.chi2.sf(stat, df)),
                )
            )
    return out


def wald_z(estimate, std_error):
    z = estimate / std_error
    return z, 2 * stats.norm.sf(abs(z))


def predict_parameters(fit: GamFit, newdata):
    """Parameter values per row of ``newdata``.

    Returns ``(theta, extrapolated)`` where ``extrapolated`` flags rows with a
    covariate outside the training knot range (linear extension was used).
    """
    bases = {term_key(t): t.basis for t in fit.matrices.smooth_terms}
    matrices = assemble(fit.formula, newdata, bases=bases)
    flags = np.zeros(matrices.n_obs, dtype=bool)
    for t in fit.matrices.smooth_terms:
        _, outside = t.basis.design(_column(newdata, t.basis.term.covariate))
        flags |= outside
    eta = matrices.eta(fit.beta)
    theta = {k: np.asarray(v) for k, v in fit.links.from_link(eta).items()}
    return theta, flags


def gam_information_criteria(fit: GamFit):
    return information_criteria(fit.loglik, effective_dof(fit)["total"], fit.n_obs)
