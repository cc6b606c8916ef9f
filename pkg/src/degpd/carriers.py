"""GPD building blocks and the four carrier families G(u; psi).

Two evaluation routes live here. The public ``cdf``/``inverse`` methods work
directly on u in [0, 1]. The ``*_from_log_sf`` kernels work on the log
survival ``log(1 - u)`` of the GPD and are what the discrete distributions use:
they keep precision when both ends of a count cell sit deep in the upper tail.
Kernels accept array-valued carrier parameters so covariate models can
evaluate one parameter set per observation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DomainError, NumericalError

XI_ZERO_TOL = 1e-8
ROOT_XTOL = 1e-14
ROOT_MAX_ITER = 400


def _check_finite_positive(name, value):
    if not np.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class GpdParams:
    sigma: float
    xi: float

    def __post_init__(self):
        _check_finite_positive("sigma", self.sigma)
        if not np.isfinite(self.xi) or self.xi < 0:
            raise DomainError(f"xi must be finite and >= 0 (negative shape is not supported), got {self.xi!r}")


# ---------------------------------------------------------------------------
# GPD


def gpd_log_sf(x, sigma, xi):
    """log P(X > x) for the GPD; broadcasts over all arguments."""
    x, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, sigma, xi)))
    z = x / sigma
    small = np.abs(xi) < XI_ZERO_TOL
    safe_xi = np.where(small, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, -z, -np.log1p(safe_xi * z) / safe_xi)
    return out[()] if out.ndim == 0 else out


def gpd_log_sf_step(k, sigma, xi):
    """log S(k+1) - log S(k), computed without differencing two large logs."""
    k, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (k, sigma, xi)))
    small = np.abs(xi) < XI_ZERO_TOL
    safe_xi = np.where(small, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, -1.0 / sigma, -np.log1p(safe_xi / (sigma + safe_xi * k)) / safe_xi)
    return out[()] if out.ndim == 0 else out


def gpd_cdf(params: GpdParams, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("gpd_cdf requires x >= 0")
    out = -np.expm1(gpd_log_sf(x, params.sigma, params.xi))
    return float(out) if np.ndim(out) == 0 else out


def gpd_quantile(prob, sigma, xi):
    """Unchecked vectorised GPD inverse CDF."""
    prob, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (prob, sigma, xi)))
    small = np.abs(xi) < XI_ZERO_TOL
    safe_xi = np.where(small, 1.0, xi)
    with np.errstate(over="ignore", divide="ignore"):
        ls = np.log1p(-prob)
        out = np.where(small, -sigma * ls, sigma / safe_xi * np.expm1(-safe_xi * ls))
    return out[()] if out.ndim == 0 else out


def gpd_inverse(params: GpdParams, prob):
    prob = np.asarray(prob, dtype=float)
    if np.any(~((prob >= 0) & (prob < 1))):
        raise DomainError("gpd_inverse requires 0 <= prob < 1")
    out = gpd_quantile(prob, params.sigma, params.xi)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# helpers


def log1mexp(x):
    """log(1 - exp(x)) for x <= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > -np.log(2.0), np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def _power_gap(log_hi, gap, kappa, log_lo=None):
    """hi**kappa - lo**kappa where lo = hi - gap >= 0, without cancellation.

    When lo is well below hi the plain difference is accurate and avoids
    taking log1p of a rounded ratio close to -1; pass ``log_lo`` to use it.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rel = np.minimum(gap * np.exp(-log_hi), 1.0)
        close = -np.exp(kappa * log_hi) * np.expm1(kappa * np.log1p(-rel))
        if log_lo is None:
            return close
        far = np.exp(kappa * log_hi) - np.exp(kappa * log_lo)
        return np.where(rel > 0.5, far, close)


BETA_SERIES_SWITCH = 1e-2
BETA_SERIES_TERMS = 10


def _beta_cdf_from_ls(ls, delta):
    """1 - D_delta(s**delta) with s = exp(ls).

    Written as [expm1((1+delta) ls) - (1+delta) expm1(ls)] / delta; when
    (1+delta)|ls| is small the two terms cancel to O(ls^2), so the power
    series sum_n ls^n [(1+delta)^n - (1+delta)] / (delta n!) is used instead.
    """
    ls, delta = np.broadcast_arrays(np.asarray(ls, dtype=float), np.asarray(delta, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = (expm1_safe((delta + 1.0) * ls) - (1.0 + delta) * np.expm1(ls)) / delta
        small = (delta + 1.0) * np.abs(ls) < BETA_SERIES_SWITCH
        series = np.zeros_like(direct)
        if np.any(small):
            a = 1.0 + delta
            term = np.ones_like(ls)  # ls^n / n!
            power = a.copy()  # (1+delta)^n
            for n in range(1, BETA_SERIES_TERMS + 1):
                term = term * ls / n
                power = power if n == 1 else power * a
                series = series + term * (power - a) / delta
    out = np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


def _beta_tail_log(ls, delta):
    """log of 1 - D_delta(s**delta) with s = exp(ls); the family (ii) CDF."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(np.maximum(_beta_cdf_from_ls(ls, delta), 0.0))


def expm1_safe(x):
    with np.errstate(over="ignore"):
        return np.expm1(x)


def _beta_gap(ls_lo, dls, delta):
    """D(s_lo**delta) - D(s_hi**delta): family (ii) mass between two survival levels."""
    s_lo = np.exp(ls_lo)
    with np.errstate(over="ignore", invalid="ignore"):
        a = (1.0 + delta) / delta * -np.expm1(dls)
        b = np.exp(delta * ls_lo) * -np.expm1((delta + 1.0) * dls) / delta
    return np.maximum(s_lo * (a - b), 0.0)


# ---------------------------------------------------------------------------
# carrier families


class CarrierFamily:
    """Base class for G(u; psi). Subclasses are frozen dataclasses."""

    kind: ClassVar[str]
    param_names: ClassVar[tuple[str, ...]]

    @property
    def psi(self):
        return tuple(getattr(self, n) for n in self.param_names)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(~((u >= 0) & (u <= 1))):
            raise DomainError("carrier cdf requires 0 <= u <= 1")
        out = self._cdf(u)
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(~((v >= 0) & (v <= 1))):
            raise DomainError("carrier inverse requires 0 <= v <= 1")
        out = self._inverse(v)
        return float(out) if np.ndim(out) == 0 else out

    def _inverse(self, v):
        return _monotone_root(self._cdf, v)

    def log_cdf_from_log_sf(self, ls):
        return carrier_log_cdf(self.kind, self.psi, ls)

    def mass_from_log_sf(self, ls_lo, dls):
        return carrier_interval_mass(self.kind, self.psi, ls_lo, dls)


@dataclass(frozen=True)
class PowerI(CarrierFamily):
    kappa: float

    kind: ClassVar[str] = "power"
    param_names: ClassVar[tuple[str, ...]] = ("kappa",)

    def __post_init__(self):
        _check_finite_positive("kappa", self.kappa)

    def _cdf(self, u):
        return u**self.kappa

    def _inverse(self, v):
        return v ** (1.0 / self.kappa)


@dataclass(frozen=True)
class BetaII(CarrierFamily):
    delta: float

    kind: ClassVar[str] = "beta"
    param_names: ClassVar[tuple[str, ...]] = ("delta",)

    def __post_init__(self):
        _check_finite_positive("delta", self.delta)

    def _cdf(self, u):
        return _beta_carrier(u, self.delta)


@dataclass(frozen=True)
class BetaPowerIII(CarrierFamily):
    delta: float
    kappa: float

    kind: ClassVar[str] = "betapower"
    param_names: ClassVar[tuple[str, ...]] = ("delta", "kappa")

    def __post_init__(self):
        _check_finite_positive("delta", self.delta)
        _check_finite_positive("kappa", self.kappa)

    def _cdf(self, u):
        return _beta_carrier(u, self.delta) ** (self.kappa / 2.0)

    def _inverse(self, v):
        return _monotone_root(lambda u: _beta_carrier(u, self.delta), v ** (2.0 / self.kappa))


@dataclass(frozen=True)
class MixtureIV(CarrierFamily):
    p: float
    kappa1: float
    kappa2: float

    kind: ClassVar[str] = "mixture"
    param_names: ClassVar[tuple[str, ...]] = ("p", "kappa1", "kappa2")

    def __post_init__(self):
        if not (0 < self.p <= 1):
            raise DomainError(f"p must lie in (0, 1], got {self.p!r}")
        _check_finite_positive("kappa1", self.kappa1)
        _check_finite_positive("kappa2", self.kappa2)
        if self.kappa2 < self.kappa1:
            raise DomainError(f"mixture carrier requires kappa2 >= kappa1 (got kappa1={self.kappa1}, kappa2={self.kappa2})")

    def _cdf(self, u):
        return self.p * u**self.kappa1 + (1.0 - self.p) * u**self.kappa2


CARRIERS = {cls.kind: cls for cls in (PowerI, BetaII, BetaPowerIII, MixtureIV)}


def beta_component_cdf(delta, w):
    """CDF of a Beta(1/delta, 2) variable at w."""
    _check_finite_positive("delta", delta)
    w = np.asarray(w, dtype=float)
    if np.any(~((w >= 0) & (w <= 1))):
        raise DomainError("beta_component_cdf requires 0 <= w <= 1")
    out = (1.0 + delta) / delta * w ** (1.0 / delta) * (1.0 - w / (1.0 + delta))
    return float(out) if np.ndim(out) == 0 else out


def _beta_carrier(u, delta):
    with np.errstate(divide="ignore"):
        ls = np.log1p(-np.asarray(u, dtype=float))
    return np.clip(_beta_cdf_from_ls(ls, delta), 0.0, 1.0)


def carrier_cdf(family: CarrierFamily, u):
    return family.cdf(u)


def carrier_inverse(family: CarrierFamily, v):
    return family.inverse(v)


def _monotone_root(func, v, xtol=ROOT_XTOL, max_iter=ROOT_MAX_ITER):
    """Solve func(u) = v on [0, 1] for nondecreasing func, elementwise.

    Alternates bisection and false-position steps so the bracket at least
    halves every second iteration while the secant step supplies fast local
    convergence.
    """
    v = np.asarray(v, dtype=float)
    shape = v.shape
    v = v.ravel()
    lo = np.zeros_like(v)
    hi = np.ones_like(v)
    f_lo = func(lo) - v
    f_hi = func(hi) - v
    out = np.full_like(v, np.nan)
    out[v <= 0] = 0.0
    out[v >= 1] = 1.0
    active = np.isnan(out)
    for it in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        a, b, fa, fb = lo[idx], hi[idx], f_lo[idx], f_hi[idx]
        if it % 2:
            denom = fb - fa
            with np.errstate(divide="ignore", invalid="ignore"):
                mid = b - fb * (b - a) / denom
            bad = ~np.isfinite(mid) | (mid <= a) | (mid >= b)
            mid = np.where(bad, 0.5 * (a + b), mid)
        else:
            mid = 0.5 * (a + b)
        fm = func(mid) - v[idx]
        go_up = fm < 0
        lo[idx] = np.where(go_up, mid, a)
        f_lo[idx] = np.where(go_up, fm, fa)
        hi[idx] = np.where(go_up, b, mid)
        f_hi[idx] = np.where(go_up, fb, fm)
        done = (fm == 0) | (hi[idx] - lo[idx] <= xtol * hi[idx])
        pick = np.where(np.abs(f_lo[idx]) <= np.abs(f_hi[idx]), lo[idx], hi[idx])
        out[idx[done]] = np.where(fm[done] == 0, mid[done], pick[done])
        active[idx[done]] = False
    if active.any():
        raise NumericalError("carrier inverse did not converge within the iteration cap")
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# vectorised kernels on the GPD log-survival scale


def carrier_log_cdf(kind, psi, ls):
    """log G(1 - exp(ls)) for carrier ``kind`` with parameter tuple ``psi``."""
    ls = np.asarray(ls, dtype=float)
    if kind == "power":
        (kappa,) = psi
        return kappa * log1mexp(ls)
    if kind == "beta":
        (delta,) = psi
        return _beta_tail_log(ls, delta)
    if kind == "betapower":
        delta, kappa = psi
        return 0.5 * kappa * _beta_tail_log(ls, delta)
    if kind == "mixture":
        p, k1, k2 = psi
        lf = log1mexp(ls)
        with np.errstate(divide="ignore"):
            return np.logaddexp(np.log(p) + k1 * lf, np.log1p(-p) + k2 * lf)
    raise DomainError(f"unknown carrier kind {kind!r}")


def carrier_interval_mass(kind, psi, ls_lo, dls):
    """G(F_hi) - G(F_lo) given log S_lo = ls_lo and log S_hi = ls_lo + dls (dls <= 0)."""
    ls_lo = np.asarray(ls_lo, dtype=float)
    dls = np.asarray(dls, dtype=float)
    ls_hi = ls_lo + dls
    if kind in ("power", "mixture"):
        gap = np.exp(ls_lo) * -np.expm1(dls)  # F_hi - F_lo
        lf_hi = log1mexp(ls_hi)
        lf_lo = log1mexp(ls_lo)
        if kind == "power":
            (kappa,) = psi
            out = _power_gap(lf_hi, gap, kappa, lf_lo)
        else:
            p, k1, k2 = psi
            out = p * _power_gap(lf_hi, gap, k1, lf_lo) + (1.0 - p) * _power_gap(lf_hi, gap, k2, lf_lo)
    elif kind == "beta":
        (delta,) = psi
        out = _beta_gap(ls_lo, dls, delta)
    elif kind == "betapower":
        delta, kappa = psi
        gap = _beta_gap(ls_lo, dls, delta)
        out = _power_gap(_beta_tail_log(ls_hi, delta), gap, 0.5 * kappa, _beta_tail_log(ls_lo, delta))
    else:
        raise DomainError(f"unknown carrier kind {kind!r}")
    return np.maximum(np.nan_to_num(out, nan=0.0, posinf=0.0), 0.0)
