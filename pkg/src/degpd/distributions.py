"""Discrete distributions obtained by discretising G(F(x)).

``DegpdModel`` and ``ZiDegpdModel`` are the user-facing frozen models.
``ModelSpec`` is the vectorised view used by the fitters: it names a family
(``degpd1`` ... ``zidegpd4``, ``dgpd``, ``poisson``, ``zip``), lists its
parameters in a fixed order, and evaluates log-PMFs and CDFs where every
parameter may be an array (one value per observation).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import special, stats

from .carriers import (
    CARRIERS,
    BetaII,
    BetaPowerIII,
    CarrierFamily,
    GpdParams,
    MixtureIV,
    PowerI,
    carrier_interval_mass,
    carrier_log_cdf,
    gpd_log_sf,
    gpd_log_sf_step,
    gpd_quantile,
)
from .errors import DomainError, NumericalError, UsageError


def _as_int_array(k, name="k"):
    arr = np.asarray(k)
    if arr.dtype.kind == "f":
        if np.any(arr != np.floor(arr)):
            raise DomainError(f"{name} must be integer valued")
    return arr.astype(np.int64)


def _scalar(out):
    return out.item() if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# vectorised kernels


def degpd_mass(kind, psi, sigma, xi, k):
    """P(Y = k) for k >= 0 with broadcastable parameter arrays."""
    k = np.asarray(k, dtype=float)
    return carrier_interval_mass(kind, psi, gpd_log_sf(k, sigma, xi), gpd_log_sf_step(k, sigma, xi))


def degpd_cdf_kernel(kind, psi, sigma, xi, k):
    k = np.asarray(k, dtype=float)
    kk = np.maximum(k, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp(carrier_log_cdf(kind, psi, gpd_log_sf(kk + 1.0, sigma, xi)))
    return np.where(k < 0, 0.0, val)


def _quantile_with_bracket(p, cdf, raw):
    """Smallest integer q >= 0 with cdf(q) >= p, starting from the closed-form guess ``raw``."""
    if not np.all(np.isfinite(raw)):
        raise NumericalError("quantile overflow: probability too close to 1 for this model")
    q = np.maximum(np.ceil(raw) - 1.0, 0.0)
    for _ in range(3):
        low = cdf(q) < p
        q = np.where(low, q + 1.0, q)
    for _ in range(3):
        high = (q > 0) & (cdf(q - 1.0) >= p)
        q = np.where(high, q - 1.0, q)
    return q.astype(np.int64)


def _check_open_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("quantile requires 0 < p < 1")
    return p


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class DegpdModel:
    carrier: CarrierFamily
    gpd: GpdParams

    def _args(self):
        return self.carrier.kind, self.carrier.psi, self.gpd.sigma, self.gpd.xi

    def pmf(self, k):
        k = _as_int_array(k)
        if np.any(k < 0):
            raise DomainError("pmf requires k >= 0")
        return _scalar(degpd_mass(*self._args(), k))

    def cdf(self, k):
        return _scalar(degpd_cdf_kernel(*self._args(), _as_int_array(k)))

    def quantile(self, p):
        p = _check_open_prob(p)
        u = self.carrier.inverse(p)
        raw = gpd_quantile(u, self.gpd.sigma, self.gpd.xi)
        out = _quantile_with_bracket(p, lambda q: degpd_cdf_kernel(*self._args(), q), np.asarray(raw))
        return _scalar(out)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        return self._draw(rng, n)

    def _draw(self, rng, n):
        u = self.carrier.inverse(rng.random(n))
        x = gpd_quantile(np.minimum(u, np.nextafter(1.0, 0.0)), self.gpd.sigma, self.gpd.xi)
        return np.floor(np.asarray(x)).astype(np.int64)


@dataclass(frozen=True)
class ZiDegpdModel:
    pi: float
    base: DegpdModel

    def __post_init__(self):
        if not (0 <= self.pi <= 1) or not np.isfinite(self.pi):
            raise DomainError(f"pi must lie in [0, 1], got {self.pi!r}")

    def pmf(self, m):
        m = _as_int_array(m, "m")
        if np.any(m < 0):
            raise DomainError("pmf requires m >= 0")
        base = degpd_mass(*self.base._args(), m)
        return _scalar(np.where(m == 0, self.pi, 0.0) + (1.0 - self.pi) * base)

    def cdf(self, m):
        m = _as_int_array(m, "m")
        base = degpd_cdf_kernel(*self.base._args(), m)
        return _scalar(np.where(m < 0, 0.0, self.pi + (1.0 - self.pi) * base))

    def quantile(self, p):
        p = _check_open_prob(p)
        cdf0 = self.cdf(0)
        if self.pi >= 1:
            return _scalar(np.zeros(np.shape(p), dtype=np.int64))
        p_star = np.clip((p - self.pi) / (1.0 - self.pi), 0.0, np.nextafter(1.0, 0.0))
        u = self.base.carrier.inverse(p_star)
        raw = np.asarray(gpd_quantile(u, self.base.gpd.sigma, self.base.gpd.xi))
        q = _quantile_with_bracket(p, lambda q: np.asarray(self.cdf(q.astype(np.int64))), raw)
        return _scalar(np.where(p <= cdf0, 0, q))

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        inflated = rng.random(n) < self.pi
        draws = self.base._draw(rng, n)
        return np.where(inflated, 0, draws)


@dataclass(frozen=True)
class Dgpd:
    gpd: GpdParams

    @property
    def as_degpd(self):
        return DegpdModel(PowerI(1.0), self.gpd)

    def pmf(self, k):
        return self.as_degpd.pmf(k)

    def cdf(self, k):
        return self.as_degpd.cdf(k)

    def quantile(self, p):
        return self.as_degpd.quantile(p)

    def sample(self, n, seed):
        return self.as_degpd.sample(n, seed)


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")

    def pmf(self, k):
        k = _as_int_array(k)
        if np.any(k < 0):
            raise DomainError("pmf requires k >= 0")
        return _scalar(stats.poisson.pmf(k, self.lam))

    def cdf(self, k):
        return _scalar(stats.poisson.cdf(_as_int_array(k), self.lam))

    def quantile(self, p):
        return _scalar(stats.poisson.ppf(_check_open_prob(p), self.lam).astype(np.int64))

    def sample(self, n, seed):
        return np.random.default_rng(seed).poisson(self.lam, n).astype(np.int64)


@dataclass(frozen=True)
class ZiPoisson:
    pi: float
    lam: float

    def __post_init__(self):
        if not (0 <= self.pi <= 1):
            raise DomainError(f"pi must lie in [0, 1], got {self.pi!r}")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")

    def pmf(self, k):
        k = _as_int_array(k)
        if np.any(k < 0):
            raise DomainError("pmf requires k >= 0")
        return _scalar(np.where(k == 0, self.pi, 0.0) + (1 - self.pi) * stats.poisson.pmf(k, self.lam))

    def cdf(self, k):
        k = _as_int_array(k)
        return _scalar(np.where(k < 0, 0.0, self.pi + (1 - self.pi) * stats.poisson.cdf(k, self.lam)))

    def quantile(self, p):
        p = _check_open_prob(p)
        p_star = np.clip((p - self.pi) / (1 - self.pi), 0.0, 1.0)
        q = np.where(p <= self.cdf(0), 0, stats.poisson.ppf(p_star, self.lam))
        return _scalar(q.astype(np.int64))

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        inflated = rng.random(n) < self.pi
        return np.where(inflated, 0, rng.poisson(self.lam, n)).astype(np.int64)


BaselineModel = Dgpd | Poisson | ZiPoisson


def degpd_pmf(model: DegpdModel, k):
    return model.pmf(k)


def degpd_cdf(model: DegpdModel, k):
    return model.cdf(k)


def degpd_quantile(model: DegpdModel, p):
    return model.quantile(p)


def zidegpd_pmf(model: ZiDegpdModel, m):
    return model.pmf(m)


def zidegpd_cdf(model: ZiDegpdModel, m):
    return model.cdf(m)


def zidegpd_quantile(model: ZiDegpdModel, p):
    return model.quantile(p)


def baseline_pmf(model, k):
    return model.pmf(k)


def sample(model, n, seed):
    if n < 1:
        raise UsageError("sample size must be >= 1")
    return model.sample(int(n), seed)


# ---------------------------------------------------------------------------
# family specifications used by the fitters

_CARRIER_PARAMS = {
    1: ("power", ("kappa",)),
    2: ("beta", ("delta",)),
    3: ("betapower", ("kappa", "delta")),
    4: ("mixture", ("p", "kappa1", "kappa2")),
}

FAMILY_NAMES = tuple(
    [f"degpd{i}" for i in range(1, 5)] + [f"zidegpd{i}" for i in range(1, 5)] + ["dgpd", "poisson", "zip"]
)


@dataclass(frozen=True)
class ModelSpec:
    """Named family with a fixed parameter order.

    Parameter order: carrier parameters, then sigma, xi; zero-inflated
    families put ``pi`` first.
    """

    name: str

    def __post_init__(self):
        if self.name not in FAMILY_NAMES:
            raise UsageError(f"unknown family {self.name!r}; choose from {', '.join(FAMILY_NAMES)}")

    @property
    def zero_inflated(self):
        return self.name.startswith("zi") or self.name == "zip"

    @property
    def carrier_kind(self):
        if self.name == "dgpd":
            return "power"
        if self.name in ("poisson", "zip"):
            return None
        return _CARRIER_PARAMS[int(self.name[-1])][0]

    @property
    def carrier_params(self):
        if self.name.startswith(("degpd", "zidegpd")):
            return _CARRIER_PARAMS[int(self.name[-1])][1]
        return ()

    @property
    def param_names(self):
        if self.name == "poisson":
            return ("lambda",)
        if self.name == "zip":
            return ("pi", "lambda")
        names = self.carrier_params + ("sigma", "xi")
        return (("pi",) + names) if self.zero_inflated else names

    @property
    def n_params(self):
        return len(self.param_names)

    def _psi(self, theta):
        kind = self.carrier_kind
        if self.name == "dgpd":
            return (1.0,)
        if kind == "betapower":
            return (theta["delta"], theta["kappa"])
        return tuple(theta[n] for n in self.carrier_params)

    def _valid(self, theta):
        ok = np.ones((), dtype=bool)
        for name in self.param_names:
            v = np.asarray(theta[name], dtype=float)
            ok = ok & np.isfinite(v)
            if name in ("pi",):
                ok = ok & (v >= 0) & (v <= 1)
            elif name == "p":
                ok = ok & (v > 0) & (v <= 1)
            elif name == "xi":
                ok = ok & (v >= 0)
            else:
                ok = ok & (v > 0)
        if self.carrier_kind == "mixture":
            ok = ok & (np.asarray(theta["kappa2"]) >= np.asarray(theta["kappa1"]))
        return ok

    def pmf(self, theta: Mapping, k):
        """Probability mass at integer ``k`` (vectorised; invalid parameters give nan)."""
        k = np.asarray(k, dtype=float)
        if self.name in ("poisson", "zip"):
            lam = np.asarray(theta["lambda"], dtype=float)
            with np.errstate(invalid="ignore", divide="ignore"):
                base = np.exp(k * np.log(lam) - lam - special.gammaln(k + 1.0))
        else:
            base = degpd_mass(self.carrier_kind, self._psi(theta), theta["sigma"], theta["xi"], k)
        if self.zero_inflated:
            pi = np.asarray(theta["pi"], dtype=float)
            out = np.where(k == 0, pi, 0.0) + (1.0 - pi) * base
        else:
            out = base
        return np.where(self._valid(theta), out, np.nan)

    def cdf(self, theta: Mapping, k):
        k = np.asarray(k, dtype=float)
        if self.name in ("poisson", "zip"):
            base = np.where(k < 0, 0.0, special.pdtr(np.maximum(k, 0.0), theta["lambda"]))
        else:
            base = degpd_cdf_kernel(self.carrier_kind, self._psi(theta), theta["sigma"], theta["xi"], k)
        if self.zero_inflated:
            pi = np.asarray(theta["pi"], dtype=float)
            out = np.where(k < 0, 0.0, pi + (1.0 - pi) * base)
        else:
            out = base
        return np.where(self._valid(theta), out, np.nan)

    def logpmf(self, theta: Mapping, k):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.pmf(theta, k))

    def build(self, theta: Mapping):
        """Frozen model object for scalar parameters."""
        t = {n: float(theta[n]) for n in self.param_names}
        if self.name == "poisson":
            return Poisson(t["lambda"])
        if self.name == "zip":
            return ZiPoisson(t["pi"], t["lambda"])
        gpd = GpdParams(t["sigma"], t["xi"])
        if self.name == "dgpd":
            return Dgpd(gpd)
        carrier = make_carrier(self.carrier_kind, t)
        base = DegpdModel(carrier, gpd)
        return ZiDegpdModel(t["pi"], base) if self.zero_inflated else base


def make_carrier(kind, theta: Mapping) -> CarrierFamily:
    cls = CARRIERS[kind]
    return cls(*(float(theta[n]) for n in cls.param_names))


__all__ = [
    "BaselineModel",
    "BetaII",
    "BetaPowerIII",
    "DegpdModel",
    "Dgpd",
    "FAMILY_NAMES",
    "MixtureIV",
    "ModelSpec",
    "Poisson",
    "PowerI",
    "ZiDegpdModel",
    "ZiPoisson",
    "baseline_pmf",
    "degpd_cdf",
    "degpd_pmf",
    "degpd_quantile",
    "make_carrier",
    "sample",
    "zidegpd_cdf",
    "zidegpd_pmf",
    "zidegpd_quantile",
]
