"""Discrete extended generalized Pareto models for count data with heavy upper tails."""
from .carriers import BetaII, BetaPowerIII, GpdParams, MixtureIV, PowerI, carrier_cdf, carrier_inverse, gpd_cdf, gpd_inverse
from .distributions import DegpdModel, Dgpd, ModelSpec, Poisson, ZiDegpdModel, ZiPoisson, sample
from .errors import (
    ConfigurationError,
    DataError,
    DegpdError,
    DomainError,
    FitError,
    NumericalError,
    StudyError,
    UnavailableError,
    UsageError,
)
from .inference import FitResult, bootstrap_ci, fit_mle, information_criteria, loglik

__version__ = "0.1.0"
