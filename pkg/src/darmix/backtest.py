"""
Value-at-Risk forecasts from fitted DAR models and their likelihood-ratio backtests.

The one-step VaR at level ``p`` is ``m_t + sqrt(h_t) * e_(ceil(p n))``,
where ``e_(j)`` is the ``j``-th smallest standardized residual of the
estimation window. Forecasts are scored with the proportion-of-failures
test, the first-order Markov independence test and their sum.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from darmix.dar import DarParams, Series, cond_moments, residuals
from darmix.estimate import FitConfig, FitResult, fit_gaussian_qmle, fit_nmqmle
from darmix.exceptions import AllStartsFailed, InvalidParameter, WindowTooShort

__all__ = [
    "VarConfig",
    "BacktestReport",
    "CRITICAL_VALUES",
    "var_forecast",
    "lr_pof",
    "lr_cci",
    "rolling_backtest",
    "rolling_backtest_levels",
]

# chi-square(2) critical values keyed by test size
CRITICAL_VALUES = {0.01: 9.21, 0.025: 7.38, 0.05: 5.99}
ESTIMATORS = ("nmqmle", "gaussian_qmle", "fixed")


def _xlogy(x, y):
    return 0.0 if x == 0 else x * math.log(y)


def lr_pof(n: int, n_star: int, p_level: float) -> float:
    """Proportion-of-failures likelihood ratio.

    Examples
    --------
    >>> round(lr_pof(1000, 20, 0.01), 3)
    7.827
    """
    if not 0 <= n_star <= n or n < 1:
        raise InvalidParameter(f"need 0 <= n_star <= n, got n={n}, n_star={n_star}")
    if not 0 < p_level < 1:
        raise InvalidParameter("p_level must lie in (0, 1)")
    p_hat = n_star / n
    alt = _xlogy(n - n_star, 1 - p_hat) + _xlogy(n_star, p_hat)
    null = (n - n_star) * math.log(1 - p_level) + n_star * math.log(p_level)
    return max(0.0, 2.0 * (alt - null))


def lr_cci(hits) -> float:
    """Independence likelihood ratio for a first-order Markov hit sequence."""
    h = np.asarray(hits, dtype=int)
    if h.size < 2:
        raise InvalidParameter("need at least two hits")
    prev, cur = h[:-1], h[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    alt = 0.0
    if n00 + n01:
        pi01 = n01 / (n00 + n01)
        alt += _xlogy(n00, 1 - pi01) + _xlogy(n01, pi01)
    if n10 + n11:
        pi11 = n11 / (n10 + n11)
        alt += _xlogy(n10, 1 - pi11) + _xlogy(n11, pi11)
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    null = _xlogy(n00 + n10, 1 - pi) + _xlogy(n01 + n11, pi)
    return max(0.0, 2.0 * (alt - null))


def _order_index(p_level: float, n: int) -> int:
    # ceil(p n) with a guard against representation error such as 0.05 * 100
    j = math.ceil(p_level * n - 1e-9)
    if j < 1:
        raise WindowTooShort(f"ceil({p_level} * {n}) < 1: window too short for this level")
    return j


def _dar_of(fit) -> DarParams:
    return fit.dar if isinstance(fit, FitResult) else fit


def var_forecast(fit, series: Series, t: int, p_level: float, window_start: int = 1) -> float:
    """VaR forecast for observation ``t`` (1-based) of ``series``.

    Parameters
    ----------
    fit : FitResult or DarParams
        Coefficients used for ``m_t``, ``h_t`` and the residuals.
    series : Series
    t : int
        Target observation; residuals come from ``window_start .. t - 1``.
    p_level : float
    """
    dar = _dar_of(fit)
    s = series.for_order(dar.p) if series.presample.size < dar.p else series
    if not window_start <= t - 1:
        raise WindowTooShort("no in-sample residuals before t")
    window = Series(s.values[window_start - 1 : t - 1], _presample_at(s, window_start, dar.p))
    eta = residuals(dar, window)
    j = _order_index(p_level, eta.size)
    q_eta = np.partition(eta, j - 1)[j - 1]
    m, h = cond_moments(dar, s, t)
    return float(m + math.sqrt(h) * q_eta)


def _presample_at(series: Series, start: int, p: int) -> np.ndarray:
    full = series.full()
    pos = series.presample.size + start - 1
    if pos < p:
        raise WindowTooShort(f"observation {start} lacks {p} preceding values")
    return full[pos - p : pos]


@dataclass(frozen=True)
class VarConfig:
    """Rolling VaR settings; all indices are 1-based observation numbers.

    The estimation window always starts at ``estimation_start`` and expands
    up to ``t - 1`` for a forecast of observation ``t``.
    """

    p_level: float = 0.05
    estimation_start: int = 1
    test_start: int = 1001
    test_end: int | None = None
    refit_every: int = 1
    estimator: str = "nmqmle"
    k: int = 2
    p: int = 1
    fixed_params: DarParams | None = None
    fit_config: FitConfig = field(default_factory=lambda: FitConfig(n_starts=4))
    warm_start: bool = True

    def __post_init__(self):
        if not 0 < self.p_level < 1:
            raise InvalidParameter("p_level must lie in (0, 1)")
        if self.refit_every < 1:
            raise InvalidParameter("refit_every must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise InvalidParameter(f"estimator must be one of {ESTIMATORS}")
        if self.estimator == "fixed" and self.fixed_params is None:
            raise InvalidParameter("fixed estimator needs fixed_params")
        if self.test_start <= self.estimation_start:
            raise WindowTooShort("estimation window is empty before the first forecast")


@dataclass
class BacktestReport:
    p_level: float
    t_index: np.ndarray
    y: np.ndarray
    forecasts: np.ndarray
    hits: np.ndarray
    n_star: int
    p_hat: float
    lr_pof: float
    lr_cci: float
    lr_cc: float
    reject_at: dict[float, bool]
    n_refits: int = 0
    n_failed_refits: int = 0

    @property
    def n(self) -> int:
        return int(self.hits.size)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "y", "var", "hit"])
        for t, y, q, hit in zip(self.t_index, self.y, self.forecasts, self.hits):
            writer.writerow([int(t), f"{y:.17g}", f"{q:.17g}", int(hit)])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            f"p_level,{self.p_level:g}",
            f"n,{self.n}",
            f"n_star,{self.n_star}",
            f"p_hat,{self.p_hat:.6g}",
            f"lr_pof,{self.lr_pof:.6g}",
            f"lr_cci,{self.lr_cci:.6g}",
            f"lr_cc,{self.lr_cc:.6g}",
        ]
        for level, rej in self.reject_at.items():
            lines.append(f"reject_{level:g},{int(rej)}")
        lines.append(f"n_refits,{self.n_refits}")
        lines.append(f"n_failed_refits,{self.n_failed_refits}")
        return "\n".join(lines) + "\n"


def _report(p_level, t_index, y, q, n_refits, n_failed) -> BacktestReport:
    hits = (y <= q).astype(int)
    n_star = int(hits.sum())
    pof = lr_pof(hits.size, n_star, p_level)
    cci = lr_cci(hits)
    cc = pof + cci
    return BacktestReport(
        p_level=p_level,
        t_index=t_index,
        y=y,
        forecasts=q,
        hits=hits,
        n_star=n_star,
        p_hat=n_star / hits.size,
        lr_pof=pof,
        lr_cci=cci,
        lr_cc=cc,
        reject_at={lvl: cc > crit for lvl, crit in CRITICAL_VALUES.items()},
        n_refits=n_refits,
        n_failed_refits=n_failed,
    )


def _fit_window(window: Series, cfg: VarConfig, previous):
    if cfg.estimator == "fixed":
        return cfg.fixed_params
    fc = cfg.fit_config
    if cfg.warm_start and isinstance(previous, FitResult):
        fc = replace(fc, init=previous.theta)
    if cfg.estimator == "gaussian_qmle":
        return fit_gaussian_qmle(window, fc, p=cfg.p)
    return fit_nmqmle(window, cfg.k, fc, p=cfg.p)


def rolling_backtest_levels(series: Series, cfg: VarConfig, levels) -> dict[float, BacktestReport]:
    """Expanding-window backtest evaluated at several VaR levels with shared refits."""
    levels = [float(v) for v in levels]
    p = cfg.p if cfg.estimator != "fixed" else cfg.fixed_params.p
    s = series if series.presample.size >= p else series.for_order(p)
    test_end = s.n if cfg.test_end is None else cfg.test_end
    if not cfg.test_start <= test_end <= s.n:
        raise InvalidParameter(f"test window [{cfg.test_start}, {test_end}] outside 1..{s.n}")
    full = s.full()
    off = s.presample.size
    fit = None
    n_refits = n_failed = 0
    eta_sorted = None
    fc_levels = {lvl: [] for lvl in levels}
    ts = np.arange(cfg.test_start, test_end + 1)
    for i, t in enumerate(ts):
        window = Series(
            s.values[cfg.estimation_start - 1 : t - 1], _presample_at(s, cfg.estimation_start, p)
        )
        if fit is None or i % cfg.refit_every == 0:
            try:
                new = _fit_window(window, cfg, fit)
                n_refits += 1
                fit = new
            except AllStartsFailed:
                n_failed += 1
                if fit is None:
                    raise
        dar = _dar_of(fit)
        # residuals of the current window under the current coefficients
        eta_sorted = np.sort(residuals(dar, window))
        lags = full[off + t - 1 - p : off + t - 1][::-1]
        m = float(lags @ dar.phi)
        h = float(dar.omega + (lags * lags) @ dar.alpha)
        for lvl in levels:
            j = _order_index(lvl, eta_sorted.size)
            fc_levels[lvl].append(m + math.sqrt(h) * eta_sorted[j - 1])
    y = s.values[ts - 1]
    return {
        lvl: _report(lvl, ts, y, np.asarray(fc_levels[lvl]), n_refits, n_failed)
        for lvl in levels
    }


def rolling_backtest(series: Series, cfg: VarConfig) -> BacktestReport:
    """Expanding-window VaR backtest at ``cfg.p_level``."""
    return rolling_backtest_levels(series, cfg, [cfg.p_level])[cfg.p_level]
