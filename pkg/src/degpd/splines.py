"""Cubic B-spline bases with second-difference (P-spline) penalties."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigurationError, DataError

DEGREE = 3


@dataclass(frozen=True)
class TermBasis:
    """Configuration of one smooth term ``s(covariate, k=K)``."""

    covariate: str
    k: int = 10
    centered: bool = True
    penalty_order: int = 2

    @property
    def label(self):
        return f"s({self.covariate})"

    def __post_init__(self):
        if self.k < DEGREE + 1:
            raise ConfigurationError(f"{self.label}: need k >= {DEGREE + 1} basis functions, got {self.k}")


def difference_penalty(k, order=2):
    """D^T D with D the (k - order) x k difference operator."""
    d = np.diff(np.eye(k), n=order, axis=0)
    return d.T @ d


def quantile_knots(x, k):
    """Clamped cubic knot vector with interior knots at quantiles of the distinct x values."""
    ux = np.unique(x)
    if ux.size < k:
        raise ConfigurationError(f"need at least {k} distinct covariate values for a {k}-function basis, got {ux.size}")
    n_interior = k - DEGREE - 1
    interior = np.quantile(ux, np.linspace(0.0, 1.0, n_interior + 2)[1:-1])
    lo, hi = ux[0], ux[-1]
    return np.r_[[lo] * (DEGREE + 1), interior, [hi] * (DEGREE + 1)]


def bspline_design(x, knots):
    """n x K B-spline design; outside the knot span each column is extended linearly."""
    x = np.asarray(x, dtype=float)
    k = knots.size - DEGREE - 1
    spl = BSpline(knots, np.eye(k), DEGREE, extrapolate=True)
    lo, hi = knots[0], knots[-1]
    xc = np.clip(x, lo, hi)
    design = spl(xc)
    outside = (x < lo) | (x > hi)
    if outside.any():
        slope = spl.derivative()(xc[outside])
        design[outside] += slope * (x[outside] - xc[outside])[:, None]
    return design, outside


@dataclass
class SmoothBasis:
    """A TermBasis fitted to training covariate values.

    ``constraint`` is a K x (K-1) matrix whose columns span the coefficient
    vectors giving zero mean over the training data; with centering off it is
    the identity.
    """

    term: TermBasis
    knots: np.ndarray
    constraint: np.ndarray
    penalty_scale: float = 1.0
    raw_penalty: np.ndarray = field(init=False)

    def __post_init__(self):
        self.raw_penalty = difference_penalty(self.term.k, self.term.penalty_order)

    @property
    def n_coef(self):
        return self.constraint.shape[1]

    @property
    def penalty(self):
        return self.penalty_scale * (self.constraint.T @ self.raw_penalty @ self.constraint)

    def raw_design(self, x):
        return bspline_design(x, self.knots)

    def design(self, x):
        raw, outside = self.raw_design(x)
        return raw @ self.constraint, outside

    def to_dict(self):
        return {
            "covariate": self.term.covariate,
            "k": self.term.k,
            "centered": self.term.centered,
            "penalty_order": self.term.penalty_order,
            "knots": self.knots.tolist(),
            "constraint": self.constraint.tolist(),
            "penalty_scale": self.penalty_scale,
        }

    @classmethod
    def from_dict(cls, d):
        term = TermBasis(d["covariate"], int(d["k"]), bool(d["centered"]), int(d.get("penalty_order", 2)))
        return cls(term, np.array(d["knots"], dtype=float), np.array(d["constraint"], dtype=float), float(d["penalty_scale"]))


def fit_basis(term: TermBasis, x) -> SmoothBasis:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError(f"{term.label}: covariate contains non-finite values")
    knots = quantile_knots(x, term.k)
    raw, _ = bspline_design(x, knots)
    if term.centered:
        col_means = raw.mean(axis=0)[:, None]
        q, _ = np.linalg.qr(col_means, mode="complete")
        constraint = q[:, 1:]
    else:
        constraint = np.eye(term.k)
    basis = SmoothBasis(term, knots, constraint)
    # put the penalty on the same footing as the cross-product of the design
    xz = raw @ constraint
    s = basis.penalty
    basis.penalty_scale = float(np.linalg.norm(xz.T @ xz, 1) / np.linalg.norm(s, 1))
    return basis


@dataclass
class BasisBlock:
    design: np.ndarray
    penalty: np.ndarray
    basis: SmoothBasis


def build_basis(term: TermBasis, x) -> BasisBlock:
    """Design block (n x K, or K-1 when centred) and its penalty matrix."""
    basis = fit_basis(term, x)
    design, _ = basis.design(x)
    return BasisBlock(design, basis.penalty, basis)
