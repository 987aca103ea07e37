"""
Choice of the mixture order ``K``.

Penalized criteria (AIC, BIC, ICL) are computed from each fitted order; the
two slope-heuristic variants calibrate the penalty constant from the shape
of the ``-log L`` versus dimension curve instead of fixing it a priori.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from darmix.estimate import FitConfig, FitResult, fit_nmqmle
from darmix.exceptions import AllStartsFailed, InsufficientRows, InvalidParameter, NotConverged

__all__ = [
    "KRow",
    "KSelectionTable",
    "model_dimension",
    "information_criteria",
    "select_k",
    "slope_heuristic",
    "ddse_slope",
    "djump_path",
    "CRITERIA",
]

CRITERIA = ("aic", "bic", "icl")


def model_dimension(p: int, k: int) -> int:
    """Number of free parameters ``2p + 1 + 3(K - 1)``."""
    return 2 * p + 1 + 3 * (k - 1)


def information_criteria(fit: FitResult, n: int | None = None, p: int | None = None):
    """AIC, BIC and ICL of a fitted mixture order.

    Parameters
    ----------
    fit : FitResult
        A converged normal-mixture fit.
    n : int, optional
        Sample size in the ``log n`` penalty. Defaults to the number of
        likelihood terms in the fit.
    p : int, optional
        Autoregressive order. Defaults to the fit's own order.

    Returns
    -------
    aic, bic, icl : float
    """
    if not fit.converged:
        raise NotConverged(f"fit with K={fit.k} did not converge")
    n = fit.n_obs if n is None else n
    p = fit.p if p is None else p
    dim = model_dimension(p, fit.k)
    dev = -2.0 * fit.loglik
    bic = dev + dim * np.log(n)
    return dev + 2.0 * dim, bic, bic + 2.0 * fit.classification_entropy


@dataclass(frozen=True)
class KRow:
    k: int
    loglik: float
    dim: int
    aic: float
    bic: float
    icl: float
    converged: bool


@dataclass
class KSelectionTable:
    """One row per candidate order plus the order picked by each criterion."""

    rows: list[KRow]
    chosen: dict[str, int | None] = field(default_factory=dict)
    n_obs: int = 0
    fits: dict[int, FitResult] = field(default_factory=dict, repr=False)

    def converged_rows(self) -> list[KRow]:
        return [r for r in self.rows if r.converged]

    def row(self, k: int) -> KRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "loglik", "dim", "aic", "bic", "icl", "converged"])
        for r in self.rows:
            writer.writerow(
                [r.k, f"{r.loglik:.17g}", r.dim, f"{r.aic:.17g}", f"{r.bic:.17g}",
                 f"{r.icl:.17g}", int(r.converged)]
            )
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"n_obs,{self.n_obs}"]
        for key, val in self.chosen.items():
            lines.append(f"{key},{'' if val is None else val}")
        return "\n".join(lines) + "\n"


def _argmin_k(ks, values) -> int:
    # ties go to the smaller order
    values = np.asarray(values, dtype=float)
    best = np.flatnonzero(values <= values.min() + 1e-9 * max(1.0, abs(values.min())))
    return int(min(ks[i] for i in best))


def select_k(
    series,
    k_range: tuple[int, int] = (1, 15),
    config: FitConfig | None = None,
    p: int = 1,
    slope_methods: bool = True,
    stability: float = 0.15,
) -> KSelectionTable:
    """Fit every order in ``k_range`` and tabulate the criteria.

    Orders whose fit fails are kept in the table with ``converged=False``
    and excluded from every argmin.
    """
    k_min, k_max = k_range
    if not 1 <= k_min <= k_max:
        raise InvalidParameter(f"need 1 <= k_min <= k_max, got {k_range}")
    config = config or FitConfig()
    rows, fits = [], {}
    n_obs = 0
    previous = None
    for k in range(k_min, k_max + 1):
        # the previous order, split in two, seeds one extra start
        cfg = config if previous is None else replace(config, init=previous.theta)
        try:
            fit = fit_nmqmle(series, k, cfg, p=p)
        except AllStartsFailed:
            nan = float("nan")
            rows.append(KRow(k, nan, model_dimension(p, k), nan, nan, nan, False))
            continue
        n_obs = fit.n_obs
        fits[k] = previous = fit
        aic, bic, icl = information_criteria(fit)
        rows.append(KRow(k, fit.loglik, model_dimension(p, k), aic, bic, icl, True))
    table = KSelectionTable(rows, n_obs=n_obs, fits=fits)
    ok = table.converged_rows()
    ks = [r.k for r in ok]
    for name in CRITERIA:
        table.chosen[name] = _argmin_k(ks, [getattr(r, name) for r in ok]) if ok else None
    if slope_methods:
        for method in ("ddse", "djump"):
            try:
                table.chosen[method] = slope_heuristic(table, method, stability=stability)
            except InsufficientRows:
                table.chosen[method] = None
    return table


def _curve(table: KSelectionTable, min_rows: int):
    ok = sorted(table.converged_rows(), key=lambda r: (r.dim, r.k))
    if len(ok) < min_rows:
        raise InsufficientRows(f"slope heuristics need {min_rows} converged rows, got {len(ok)}")
    ks = np.array([r.k for r in ok])
    dims = np.array([r.dim for r in ok], dtype=float)
    contrast = -np.array([r.loglik for r in ok])
    return ks, dims, contrast


def ddse_slope(dims, contrast, stability: float = 0.15, min_points: int = 3) -> float:
    """Asymptotic slope of the contrast against dimension.

    Least-squares slopes are computed on every suffix (largest dimensions)
    of at least ``min_points`` rows. Starting from the shortest suffix, the
    window is extended while successive slope estimates change by less
    than ``stability`` in relative terms. Returns ``-slope`` clipped at 0.
    """
    dims = np.asarray(dims, dtype=float)
    contrast = np.asarray(contrast, dtype=float)
    m = dims.size
    slopes = {}
    for start in range(m - min_points, -1, -1):
        slopes[start] = np.polyfit(dims[start:], contrast[start:], 1)[0]
    chosen = m - min_points
    for start in range(m - min_points - 1, -1, -1):
        prev = slopes[start + 1]
        if abs(slopes[start] - prev) > stability * max(abs(prev), 1e-12):
            break
        chosen = start
    return max(0.0, -float(slopes[chosen]))


def djump_path(dims, contrast):
    """Exact path of ``argmin_D [contrast + c D]`` as ``c`` decreases from infinity.

    Returns
    -------
    list of (c, from_index, to_index)
        Each breakpoint together with the selected row before and after it.
    """
    dims = np.asarray(dims, dtype=float)
    contrast = np.asarray(contrast, dtype=float)
    # start from the smallest dimension, lowest contrast among ties
    cur = int(np.lexsort((contrast, dims))[0])
    path = []
    while True:
        bigger = np.flatnonzero(dims > dims[cur])
        if bigger.size == 0:
            break
        cuts = (contrast[cur] - contrast[bigger]) / (dims[bigger] - dims[cur])
        c_star = cuts.max()
        if not c_star > 0:
            break
        tied = bigger[cuts >= c_star - 1e-12 * max(1.0, abs(c_star))]
        nxt = int(tied[np.argmax(dims[tied])])
        path.append((float(c_star), cur, nxt))
        cur = nxt
    return path


def slope_heuristic(
    table: KSelectionTable, method: str = "djump", stability: float = 0.15, min_rows: int = 5
) -> int:
    """Order chosen by data-driven penalty calibration.

    Parameters
    ----------
    table : KSelectionTable
    method : {"ddse", "djump"}
        ``ddse`` fits the slope of the contrast over its stable large-dimension
        window and penalizes with twice that slope. ``djump`` finds the
        penalty constant at which the selected dimension jumps most and
        penalizes with twice that constant.
    """
    method = method.lower()
    ks, dims, contrast = _curve(table, min_rows)
    if method == "ddse":
        slope = ddse_slope(dims, contrast, stability)
    elif method == "djump":
        path = djump_path(dims, contrast)
        if not path:
            return int(ks[np.lexsort((ks, dims))[0]])
        jumps = [dims[b] - dims[a] for _, a, b in path]
        slope = path[int(np.argmax(jumps))][0]
    else:
        raise InvalidParameter(f"unknown slope heuristic {method!r}")
    return _argmin_k(list(ks), contrast + 2.0 * slope * dims)
