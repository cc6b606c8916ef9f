"""Link functions mapping unconstrained predictors onto constrained parameters."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import special

from .errors import ConfigurationError


@dataclass(frozen=True)
class Link:
    name: str

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.name == "log":
            with np.errstate(over="ignore"):
                return np.exp(eta)
        if self.name == "logit":
            return special.expit(eta)
        return eta

    def forward(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.name == "log":
                return np.log(theta)
            if self.name == "logit":
                return special.logit(theta)
        return theta

    def derivative(self, eta):
        """d theta / d eta."""
        eta = np.asarray(eta, dtype=float)
        if self.name == "log":
            return np.exp(eta)
        if self.name == "logit":
            p = special.expit(eta)
            return p * (1.0 - p)
        return np.ones_like(eta)


LOG = Link("log")
LOGIT = Link("logit")
IDENTITY = Link("identity")
_BY_NAME = {"log": LOG, "logit": LOGIT, "identity": IDENTITY}


def default_link(param, xi_link="log"):
    if param in ("pi", "p"):
        return LOGIT
    if param == "xi":
        if xi_link not in ("log", "identity"):
            raise ConfigurationError(f"xi link must be 'log' or 'identity', got {xi_link!r}")
        return _BY_NAME[xi_link]
    return LOG


class ParamLinkMap:
    """Per-parameter links for one family, in the family's parameter order.

    ``kappa2`` is carried as log(kappa2 - kappa1) so the ordering
    kappa2 >= kappa1 holds for every point of the link scale.
    """

    def __init__(self, param_names, xi_link="log", overrides: Mapping[str, str] | None = None):
        self.param_names = tuple(param_names)
        self.links = {n: default_link(n, xi_link) for n in self.param_names}
        for n, lk in (overrides or {}).items():
            self.links[n] = _BY_NAME[lk]
        self.ordered_gap = "kappa2" in self.param_names and "kappa1" in self.param_names

    def describe(self):
        out = {n: self.links[n].name for n in self.param_names}
        if self.ordered_gap:
            out["kappa2"] = "kappa1+exp"
        return out

    def to_dict(self):
        return {"params": list(self.param_names), "links": {n: self.links[n].name for n in self.param_names}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["params"], overrides=d["links"])

    def to_link(self, theta: Mapping):
        eta = []
        for n in self.param_names:
            if n == "kappa2" and self.ordered_gap:
                gap = np.asarray(theta["kappa2"], dtype=float) - np.asarray(theta["kappa1"], dtype=float)
                with np.errstate(divide="ignore"):
                    eta.append(np.log(gap))
            else:
                eta.append(self.links[n].forward(theta[n]))
        return np.array(eta, dtype=float)

    def from_link(self, eta):
        """Natural-scale parameter dict; ``eta`` has the parameter axis first."""
        eta = np.asarray(eta, dtype=float)
        theta = {}
        for i, n in enumerate(self.param_names):
            if n == "kappa2" and self.ordered_gap:
                continue
            theta[n] = self.links[n].inverse(eta[i])
        if self.ordered_gap:
            i = self.param_names.index("kappa2")
            with np.errstate(over="ignore"):
                theta["kappa2"] = theta["kappa1"] + np.exp(eta[i])
        return theta

    def jacobian(self, eta):
        """Matrix d theta_i / d eta_j at a single link-scale point."""
        eta = np.asarray(eta, dtype=float)
        d = len(self.param_names)
        jac = np.zeros((d, d))
        for i, n in enumerate(self.param_names):
            if n == "kappa2" and self.ordered_gap:
                j1 = self.param_names.index("kappa1")
                jac[i, i] = np.exp(eta[i])
                jac[i, j1] = self.links["kappa1"].derivative(eta[j1])
            else:
                jac[i, i] = self.links[n].derivative(eta[i])
        return jac
