"""Randomized quantile residuals, KS and chi-square goodness of fit, Q-Q data."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special, stats

from .errors import UnavailableError, UsageError

ETA_CLAMP = 1e-10
KS_MIN_POINTS = 8
KS_SERIES_TERMS = 100
# the jitter stream is spawned off the seed so that reusing a simulation seed
# does not replay the uniforms that generated the data
JITTER_STREAM = 7919


def probit(p):
    return special.ndtri(p)


@dataclass
class ResidualReport:
    residuals: np.ndarray
    seed: int | None
    clamp_count: int
    ks_statistic: float | None = None
    ks_pvalue: float | None = None

    def with_ks(self):
        ks = ks_test(self.residuals)
        return replace(self, ks_statistic=ks["statistic"], ks_pvalue=ks["pvalue"])

    def to_dict(self):
        return {
            "n": int(self.residuals.size),
            "seed": self.seed,
            "clamp_count": self.clamp_count,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
        }


def _cdf_callable(fitted_cdf):
    return fitted_cdf.cdf if hasattr(fitted_cdf, "cdf") else fitted_cdf


def randomized_residuals(fitted_cdf, data, seed=None, uniforms=None) -> ResidualReport:
    """Probit of a uniform draw between F(k-1) and F(k) for every observation.

    ``fitted_cdf`` maps an integer array aligned with ``data`` to CDF values
    (a model object with a ``cdf`` method also works). ``uniforms`` overrides
    the seeded jitter.
    """
    k = np.asarray(data)
    if k.size and (np.any(k < 0) or np.any(k != np.floor(k))):
        raise UsageError("data must be non-negative integers")
    k = k.astype(np.int64)
    cdf = _cdf_callable(fitted_cdf)
    upper = np.asarray(cdf(k), dtype=float)
    lower = np.where(k > 0, np.asarray(cdf(k - 1), dtype=float), 0.0)
    if uniforms is None:
        ss = np.random.SeedSequence(None if seed is None else [int(seed), JITTER_STREAM])
        u = np.random.default_rng(ss).uniform(size=k.shape)
    else:
        u = np.broadcast_to(np.asarray(uniforms, dtype=float), k.shape)
    eta = (1.0 - u) * lower + u * upper
    clamped = (eta < ETA_CLAMP) | (eta > 1.0 - ETA_CLAMP)
    eta = np.clip(eta, ETA_CLAMP, 1.0 - ETA_CLAMP)
    return ResidualReport(probit(eta), seed, int(clamped.sum()))


def kolmogorov_sf(lam):
    """P(sqrt(n) D > lam) under the asymptotic Kolmogorov distribution."""
    lam = float(lam)
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # theta-function form converges fast for small lam
        j = np.arange(1, KS_SERIES_TERMS + 1)
        cdf = np.sqrt(2 * np.pi) / lam * np.sum(np.exp(-((2 * j - 1) ** 2) * np.pi**2 / (8 * lam**2)))
        return float(np.clip(1.0 - cdf, 0.0, 1.0))
    j = np.arange(1, KS_SERIES_TERMS + 1)
    sf = 2.0 * np.sum((-1.0) ** (j - 1) * np.exp(-2.0 * j**2 * lam**2))
    return float(np.clip(sf, 0.0, 1.0))


def ks_test(residuals):
    """One-sample KS test of residuals against the standard normal."""
    r = np.sort(np.asarray(residuals, dtype=float))
    n = r.size
    if n < KS_MIN_POINTS:
        raise UsageError(f"KS test needs at least {KS_MIN_POINTS} residuals, got {n}")
    phi = special.ndtr(r)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - phi), np.max(phi - (i - 1) / n), 0.0))
    return {"statistic": d, "pvalue": kolmogorov_sf(np.sqrt(n) * d), "n": n}


def merge_cells(probs, min_expected, n):
    """Group consecutive cells, sweeping from the right, so each expected count reaches ``min_expected``.

    Returns a list of (first, last) index pairs over ``probs``.
    """
    groups = []
    acc, hi = 0.0, len(probs) - 1
    for j in range(len(probs) - 1, -1, -1):
        acc += probs[j]
        if acc * n >= min_expected:
            groups.append((j, hi))
            acc, hi = 0.0, j - 1
    if hi >= 0:
        if groups:
            _, last = groups.pop()
            groups.append((0, last))
        else:
            groups.append((0, hi))
    return groups[::-1]


def chi_square_gof(fitted_pmf, data, n_params=0, min_expected=5.0):
    """Pearson goodness of fit on cells 0..max(data), the last cell open-ended.

    df = cells - 1 - n_params, floored at 1.
    """
    k = np.asarray(data)
    if k.size < 30:
        raise UsageError(f"chi-square test needs n >= 30, got {k.size}")
    if np.any(k < 0) or np.any(k != np.floor(k)):
        raise UsageError("data must be non-negative integers")
    k = k.astype(np.int64)
    n = k.size
    top = int(k.max())
    pmf = _pmf_callable(fitted_pmf)
    probs = np.asarray(pmf(np.arange(top)), dtype=float) if top > 0 else np.empty(0)
    probs = np.append(probs, max(1.0 - probs.sum(), 0.0))
    observed = np.bincount(np.minimum(k, top), minlength=top + 1).astype(float)
    groups = merge_cells(probs, min_expected, n)
    if len(groups) < 3:
        raise UnavailableError(f"only {len(groups)} cells remain after merging; chi-square test is degenerate")
    obs = np.array([observed[a : b + 1].sum() for a, b in groups])
    expected = n * np.array([probs[a : b + 1].sum() for a, b in groups])
    stat = float(np.sum((obs - expected) ** 2 / expected))
    df = max(len(groups) - 1 - int(n_params), 1)
    return {"statistic": stat, "df": df, "pvalue": float(stats.chi2.sf(stat, df)), "cells": len(groups)}


def _pmf_callable(fitted_pmf):
    return fitted_pmf.pmf if hasattr(fitted_pmf, "pmf") else fitted_pmf


def qq_data(residuals):
    """Sorted residuals paired with standard-normal plotting positions."""
    r = np.sort(np.asarray(residuals, dtype=float))
    if r.size == 0:
        raise UsageError("residuals must be nonempty")
    n = r.size
    theoretical = probit((np.arange(1, n + 1) - 0.5) / n)
    return theoretical, r


def fitted_cdf(fit, covariates=None):
    """Per-observation CDF callable for an iid FitResult or a GamFit."""
    from .gam import GamFit, predict_parameters

    if isinstance(fit, GamFit):
        if covariates is None:
            raise UsageError("covariate data required for a covariate-dependent fit")
        theta, _ = predict_parameters(fit, covariates)
        return lambda k: fit.spec.cdf(theta, k)
    theta = dict(fit.estimates)
    return lambda k: fit.spec.cdf(theta, k)
