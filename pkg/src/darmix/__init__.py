"""Double autoregressive models fitted by normal-mixture quasi-maximum likelihood."""

from darmix.dar import DarParams, Series, simulate_series
from darmix.estimate import FitConfig, FitResult, fit_gaussian_qmle, fit_mle, fit_nmqmle
from darmix.innovations import InnovationSpec
from darmix.select import select_k

__version__ = "0.1.0"

__all__ = [
    "DarParams",
    "Series",
    "simulate_series",
    "InnovationSpec",
    "FitConfig",
    "FitResult",
    "fit_nmqmle",
    "fit_gaussian_qmle",
    "fit_mle",
    "select_k",
]
