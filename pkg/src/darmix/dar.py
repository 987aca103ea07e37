"""
DAR(p) process: y_t = sum_j phi_j y_{t-j} + eta_t sqrt(omega + sum_j alpha_j y_{t-j}^2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from darmix.exceptions import (
    DataTooShort,
    IndexOutOfRange,
    InvalidParameter,
    MalformedCsv,
    NonFiniteState,
)

__all__ = [
    "DarParams",
    "Series",
    "stationarity_margin",
    "expected_kron_matrix",
    "simulate",
    "simulate_series",
    "cond_moments",
    "conditional_moments",
    "lag_matrix",
    "residuals",
    "write_series",
    "read_series",
]

EXPLOSION_LIMIT = 1e150


def _frozen(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float)).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DarParams:
    """Drift coefficients ``phi``, intercept ``omega`` and ARCH coefficients ``alpha``."""

    phi: np.ndarray
    omega: float
    alpha: np.ndarray

    def __post_init__(self):
        phi = _frozen(self.phi)
        alpha = _frozen(self.alpha)
        if phi.shape != alpha.shape or phi.ndim != 1 or phi.size < 1:
            raise InvalidParameter("phi and alpha must be 1-d of equal length p >= 1")
        if not self.omega > 0:
            raise InvalidParameter(f"omega must be positive, got {self.omega}")
        if np.any(alpha <= 0):
            raise InvalidParameter("every alpha_j must be positive")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    @classmethod
    def from_vector(cls, vec, p: int | None = None) -> "DarParams":
        """Build from ``(phi_1..phi_p, omega, alpha_1..alpha_p)``."""
        vec = np.asarray(vec, dtype=float)
        if p is None:
            if vec.size % 2 != 1:
                raise InvalidParameter("vector length must be 2p + 1")
            p = vec.size // 2
        return cls(vec[:p], vec[p], vec[p + 1 : 2 * p + 1])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.phi, [self.omega], self.alpha])

    def names(self) -> list[str]:
        p = self.p
        if p == 1:
            return ["phi", "omega", "alpha"]
        return (
            [f"phi{j}" for j in range(1, p + 1)]
            + ["omega"]
            + [f"alpha{j}" for j in range(1, p + 1)]
        )


@dataclass(frozen=True)
class Series:
    """Observations ``y_1..y_n`` plus presample ``y_{1-p}..y_0`` (oldest first)."""

    values: np.ndarray
    presample: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        pre = np.asarray(self.presample, dtype=float).reshape(-1)
        object.__setattr__(self, "presample", _frozen(pre) if pre.size else _frozen(np.empty(0)))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def for_order(self, p: int) -> "Series":
        """Series with exactly ``p`` presample values.

        If fewer than ``p`` presample values are attached, the first
        observations are moved into the presample.
        """
        if self.presample.size >= p:
            return Series(self.values, self.presample[self.presample.size - p :])
        need = p - self.presample.size
        if self.values.size < need + 1:
            raise DataTooShort(f"need at least {p + 1} observations for order {p}")
        return Series(self.values[need:], np.concatenate([self.presample, self.values[:need]]))

    def full(self) -> np.ndarray:
        return np.concatenate([self.presample, self.values])

    def head(self, n: int) -> "Series":
        return Series(self.values[:n], self.presample)


def expected_kron_matrix(params: DarParams) -> np.ndarray:
    """Exact ``E[A_t kron A_t]`` for the companion matrix with random first row."""
    p = params.p
    mean = np.zeros((p, p))
    mean[0] = params.phi
    if p > 1:
        mean[1:, :-1] = np.eye(p - 1)
    out = np.kron(mean, mean)
    # only the first-row entries are random; Var(phi_j + sqrt(alpha_j) xi_j) = alpha_j
    for j in range(p):
        out[0, j * p + j] += params.alpha[j]
    return out


def stationarity_margin(params: DarParams) -> float:
    """Spectral radius of ``E[A_t kron A_t]``; below 1 means a stationary solution exists."""
    if params.p == 1:
        return float(params.phi[0] ** 2 + params.alpha[0])
    return float(np.max(np.abs(np.linalg.eigvals(expected_kron_matrix(params)))))


def simulate(params: DarParams, innovations, presample=None, burn_in: int = 500) -> Series:
    """Run the DAR recursion over ``innovations`` and drop the first ``burn_in`` values.

    The returned series carries the ``p`` values preceding its first
    observation as presample.
    """
    eta = np.asarray(innovations, dtype=float)
    p = params.p
    if presample is None:
        presample = np.zeros(p)
    pre = np.asarray(presample, dtype=float).reshape(-1)
    if pre.size != p:
        raise InvalidParameter(f"presample must have length p = {p}")
    if eta.size <= burn_in:
        raise InvalidParameter("need more innovations than burn-in steps")
    phi = [float(v) for v in params.phi]
    alpha = [float(v) for v in params.alpha]
    omega = params.omega
    total = eta.size
    path = [float(v) for v in pre] + [0.0] * total
    eta_list = eta.tolist()
    for i in range(total):
        t = i + p
        m = 0.0
        h = omega
        for j in range(p):
            lag = path[t - 1 - j]
            m += phi[j] * lag
            h += alpha[j] * lag * lag
        y = m + eta_list[i] * math.sqrt(h)
        if not abs(y) <= EXPLOSION_LIMIT:
            raise NonFiniteState(f"|y_t| exceeded {EXPLOSION_LIMIT:g} at step {i + 1}")
        path[t] = y
    path = np.asarray(path)
    start = p + burn_in
    return Series(path[start:], path[start - p : start])


def simulate_series(params: DarParams, spec, n: int, seed, burn_in: int = 500) -> Series:
    """Convenience wrapper: draw innovations for ``spec`` and simulate ``n`` values."""
    from darmix.innovations import sample_innovations

    eta = sample_innovations(spec, n + burn_in, seed)
    return simulate(params, eta, np.zeros(params.p), burn_in)


def lag_matrix(series: Series, p: int) -> np.ndarray:
    """``(n, p)`` matrix whose column ``j`` holds ``y_{t-j-1}`` for each observation."""
    if series.presample.size < p:
        raise DataTooShort(f"series needs {p} presample values")
    full = series.full()
    offset = series.presample.size
    n = series.n
    cols = [full[offset - j : offset - j + n] for j in range(1, p + 1)]
    return np.column_stack(cols)


def conditional_moments(params: DarParams, series: Series) -> tuple[np.ndarray, np.ndarray]:
    """Vectors ``m_t`` and ``h_t`` for every observation."""
    lags = lag_matrix(series, params.p)
    return lags @ params.phi, params.omega + (lags * lags) @ params.alpha


def cond_moments(params: DarParams, series: Series, t: int) -> tuple[float, float]:
    """``(m_t, h_t)`` for a single 1-based observation index."""
    if not 1 <= t <= series.n:
        raise IndexOutOfRange(f"t must be in [1, {series.n}], got {t}")
    full = series.full()
    idx = series.presample.size + t - 1
    p = params.p
    if idx - p < 0:
        raise DataTooShort(f"series needs {p} presample values")
    lags = full[idx - p : idx][::-1]
    return float(lags @ params.phi), float(params.omega + (lags * lags) @ params.alpha)


def residuals(params: DarParams, series: Series) -> np.ndarray:
    """Standardized residuals ``(y_t - m_t) / sqrt(h_t)``."""
    m, h = conditional_moments(params, series)
    return (series.values - m) / np.sqrt(h)


def write_series(series: Series, path) -> None:
    p = series.presample.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for i, v in enumerate(series.presample):
            writer.writerow([i - p + 1, f"{v:.17g}"])
        for i, v in enumerate(series.values):
            writer.writerow([i + 1, f"{v:.17g}"])


def read_series(path) -> Series:
    """Read a ``t,value`` CSV; rows with ``t <= 0`` form the presample."""
    pre, vals = [], []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["t", "value"]:
            raise MalformedCsv(f"{path}: expected header 't,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, v = int(row[0]), float(row[1])
            except (ValueError, IndexError) as exc:
                raise MalformedCsv(f"{path}:{lineno}: {exc}") from exc
            (pre if t <= 0 else vals).append((t, v))
    pre.sort()
    vals.sort()
    return Series([v for _, v in vals], [v for _, v in pre])
