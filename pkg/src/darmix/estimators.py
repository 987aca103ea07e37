"""
scikit-learn style wrappers around the functional fitting API.

Each estimator takes a univariate series (a 1-d array, or an ``(n, 1)``
column); the first ``p`` values serve as presample. ``transform`` returns
standardized residuals and ``score`` the average per-observation log
likelihood contribution, so estimators plug into tools that rely on
``get_params``/``set_params`` such as ``GridSearchCV`` with a custom splitter.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from darmix.dar import Series, conditional_moments, residuals
from darmix.estimate import (
    FitConfig,
    FitResult,
    fit_gaussian_qmle,
    fit_mle,
    fit_nmqmle,
    observation_loglik,
)
from darmix.innovations import InnovationSpec, log_pdf, parse_innovation
from darmix.select import select_k

__all__ = ["NormalMixtureQMLE", "GaussianQMLE", "KnownDensityMLE", "MixtureOrderSelector"]


def _as_series(X, p: int) -> Series:
    arr = check_array(X, ensure_2d=False, dtype=float, ensure_all_finite=True)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single column, got shape {arr.shape}")
        arr = arr[:, 0]
    return Series(arr).for_order(p)


class _DarEstimator(TransformerMixin, BaseEstimator):
    def _config(self) -> FitConfig:
        return FitConfig(
            n_starts=self.n_starts,
            max_iter=self.max_iter,
            seed=self.seed,
            compute_covariance=self.compute_covariance,
        )

    def _store(self, result: FitResult):
        self.result_ = result
        self.params_ = result.dar
        self.loglik_ = result.loglik
        self.n_obs_ = result.n_obs
        self.std_errors_ = result.std_errors
        return self

    def transform(self, X):
        """Standardized residuals under the fitted coefficients."""
        check_is_fitted(self, "result_")
        return residuals(self.params_, _as_series(X, self.p))

    def _contributions(self, series: Series) -> np.ndarray:
        return observation_loglik(self.result_.theta, series)

    def score(self, X, y=None) -> float:
        """Average log likelihood contribution per observation on ``X``."""
        check_is_fitted(self, "result_")
        return float(np.mean(self._contributions(_as_series(X, self.p))))


class NormalMixtureQMLE(_DarEstimator):
    """DAR(p) fitted by normal-mixture quasi-maximum likelihood.

    Parameters
    ----------
    k : int
        Number of mixture components.
    p : int
        Autoregressive order.
    n_starts, max_iter, seed : int
        Optimizer settings, see :class:`darmix.estimate.FitConfig`.
    compute_covariance : bool
        Also compute the sandwich covariance.

    Attributes
    ----------
    params_ : DarParams
    mixture_ : MixtureParams
    loglik_ : float
    result_ : FitResult
    """

    def __init__(self, k=2, p=1, n_starts=8, max_iter=2000, seed=0, compute_covariance=False):
        self.k = k
        self.p = p
        self.n_starts = n_starts
        self.max_iter = max_iter
        self.seed = seed
        self.compute_covariance = compute_covariance

    def fit(self, X, y=None):
        result = fit_nmqmle(_as_series(X, self.p), self.k, self._config(), p=self.p)
        self.mixture_ = result.mixture()
        return self._store(result)


class GaussianQMLE(_DarEstimator):
    """DAR(p) fitted by Gaussian quasi-maximum likelihood."""

    def __init__(self, p=1, n_starts=8, max_iter=2000, seed=0, compute_covariance=False):
        self.p = p
        self.n_starts = n_starts
        self.max_iter = max_iter
        self.seed = seed
        self.compute_covariance = compute_covariance

    def fit(self, X, y=None):
        return self._store(fit_gaussian_qmle(_as_series(X, self.p), self._config(), p=self.p))


class KnownDensityMLE(_DarEstimator):
    """DAR(p) maximum likelihood with a given innovation law.

    ``innovation`` is an :class:`InnovationSpec` or its compact text form
    such as ``"t:2.5"``.
    """

    def __init__(self, innovation="normal", p=1, n_starts=8, max_iter=2000, seed=0,
                 compute_covariance=False):
        self.innovation = innovation
        self.p = p
        self.n_starts = n_starts
        self.max_iter = max_iter
        self.seed = seed
        self.compute_covariance = compute_covariance

    def _spec(self) -> InnovationSpec:
        if isinstance(self.innovation, InnovationSpec):
            return self.innovation
        return parse_innovation(self.innovation)

    def fit(self, X, y=None):
        spec = self._spec()
        self.spec_ = spec
        return self._store(fit_mle(_as_series(X, self.p), spec, self._config(), p=self.p))

    def _contributions(self, series: Series) -> np.ndarray:
        m, h = conditional_moments(self.params_, series)
        return -0.5 * np.log(h) + log_pdf(self.spec_, (series.values - m) / np.sqrt(h))


class MixtureOrderSelector(_DarEstimator):
    """Pick the mixture order by an information criterion, then keep that fit.

    Parameters
    ----------
    criterion : {"aic", "bic", "icl", "ddse", "djump"}
    k_min, k_max : int
        Candidate orders.
    """

    def __init__(self, criterion="icl", k_min=1, k_max=10, p=1, n_starts=8, max_iter=2000,
                 seed=0):
        self.criterion = criterion
        self.k_min = k_min
        self.k_max = k_max
        self.p = p
        self.n_starts = n_starts
        self.max_iter = max_iter
        self.seed = seed

    compute_covariance = False

    def fit(self, X, y=None):
        table = select_k(
            _as_series(X, self.p),
            (self.k_min, self.k_max),
            self._config(),
            p=self.p,
            slope_methods=self.criterion in ("ddse", "djump"),
        )
        k = table.chosen[self.criterion]
        if k is None:
            raise ValueError(f"criterion {self.criterion!r} could not select an order")
        self.table_ = table
        self.k_ = k
        self.mixture_ = table.fits[k].mixture()
        return self._store(table.fits[k])
