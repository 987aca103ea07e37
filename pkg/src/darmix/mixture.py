"""
Zero-mean, unit-variance finite normal mixtures.

A ``K``-component mixture is described by ``3(K - 1)`` free coordinates
(the first ``K - 1`` weights, means and scales). The last component is
pinned by the three moment constraints

    sum(p) = 1,   sum(p * mu) = 0,   sum(p * (mu**2 + sigma**2)) = 1,

so every completed mixture has mean 0 and variance 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from darmix.exceptions import InfeasiblePoint, InvalidParameter

__all__ = [
    "MixtureFree",
    "MixtureParams",
    "complete_params",
    "completion_jacobian",
    "free_from_params",
    "standardize_mixture",
    "equally_spaced_mixture",
    "component_log_densities",
    "log_density",
    "responsibilities",
    "sample",
    "write_mixture",
    "read_mixture",
    "format_mixture",
    "parse_mixture",
]

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
# radicand of sigma_K**2 must exceed this, otherwise the point is rejected
VARIANCE_FLOOR = 1e-10
# lower bound on every component scale during optimization
SCALE_FLOOR = 1e-4


def _as_float_array(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=float)).copy()


@dataclass(frozen=True)
class MixtureFree:
    """Free coordinates ``(p_1..p_{K-1}, mu_1..mu_{K-1}, sigma_1..sigma_{K-1})``."""

    k: int
    weights_free: np.ndarray = field(default_factory=lambda: np.empty(0))
    means_free: np.ndarray = field(default_factory=lambda: np.empty(0))
    scales_free: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameter(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        for name in ("weights_free", "means_free", "scales_free"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape[0] != self.k - 1:
                raise InvalidParameter(
                    f"{name} must have length k - 1 = {self.k - 1}, got {arr.shape[0]}"
                )
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_vector(cls, k: int, vec) -> "MixtureFree":
        vec = np.asarray(vec, dtype=float)
        m = k - 1
        return cls(k, vec[:m], vec[m : 2 * m], vec[2 * m : 3 * m])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.weights_free, self.means_free, self.scales_free])


@dataclass(frozen=True)
class MixtureParams:
    """Full component weights, means and scales of a standardized mixture."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        arrays = [_as_float_array(getattr(self, n)) for n in ("weights", "means", "scales")]
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise InvalidParameter("weights, means and scales must have equal length")
        for name, arr in zip(("weights", "means", "scales"), arrays):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def constraint_residuals(self) -> np.ndarray:
        """Violations of the three moment constraints (all zero when feasible)."""
        p, mu, s = self.weights, self.means, self.scales
        return np.array(
            [p.sum() - 1.0, (p * mu).sum(), (p * (mu**2 + s**2)).sum() - 1.0]
        )

    def is_feasible(self, tol: float = 1e-10) -> bool:
        return (
            bool(np.all(self.weights > 0))
            and bool(np.all(self.scales > 0))
            and bool(np.all(np.abs(self.constraint_residuals()) <= tol))
        )

    def permuted(self, order) -> "MixtureParams":
        order = np.asarray(order)
        return MixtureParams(self.weights[order], self.means[order], self.scales[order])

    def sorted_by_mean(self) -> "MixtureParams":
        return self.permuted(np.argsort(self.means, kind="stable"))


def complete_params(free: MixtureFree) -> MixtureParams:
    """Derive the ``K``-th component from the moment constraints.

    Raises
    ------
    InfeasiblePoint
        When the implied last weight is not positive or the implied last
        variance does not exceed ``VARIANCE_FLOOR``.
    """
    p = free.weights_free
    mu = free.means_free
    s = free.scales_free
    if np.any(p <= 0) or np.any(p >= 1):
        raise InfeasiblePoint("free weights must lie in (0, 1)")
    if np.any(s <= 0):
        raise InfeasiblePoint("free scales must be positive")
    p_last = 1.0 - p.sum()
    if not p_last > 0:
        raise InfeasiblePoint(f"implied last weight {p_last} is not positive")
    mu_last = -(p * mu).sum() / p_last
    radicand = (1.0 - (p * (mu**2 + s**2)).sum() - p_last * mu_last**2) / p_last
    if not radicand > VARIANCE_FLOOR:
        raise InfeasiblePoint(f"implied last variance {radicand} is not positive")
    return MixtureParams(
        np.append(p, p_last), np.append(mu, mu_last), np.append(s, np.sqrt(radicand))
    )


def completion_jacobian(params: MixtureParams) -> np.ndarray:
    """Jacobian of the full ``(p, mu, sigma)`` vector w.r.t. the free coordinates.

    Rows follow ``(p_1..p_K, mu_1..mu_K, sigma_1..sigma_K)``; columns follow
    ``(p_1..p_{K-1}, mu_1..mu_{K-1}, sigma_1..sigma_{K-1})``.
    """
    k = params.k
    m = k - 1
    jac = np.zeros((3 * k, 3 * m))
    if m == 0:
        return jac
    p, mu, s = params.weights, params.means, params.scales
    pk, muk, sk = p[-1], mu[-1], s[-1]
    pf, muf, sf = p[:m], mu[:m], s[:m]
    idx = np.arange(m)
    # identity block for the free components
    jac[idx, idx] = 1.0
    jac[k + idx, m + idx] = 1.0
    jac[2 * k + idx, 2 * m + idx] = 1.0
    # d p_K
    jac[k - 1, :m] = -1.0
    # d mu_K
    jac[2 * k - 1, :m] = (muk - muf) / pk
    jac[2 * k - 1, m : 2 * m] = -pf / pk
    # d sigma_K
    jac[3 * k - 1, :m] = (sk**2 - muk**2 + 2 * muf * muk - (muf**2 + sf**2)) / (
        2 * pk * sk
    )
    jac[3 * k - 1, m : 2 * m] = pf * (muk - muf) / (pk * sk)
    jac[3 * k - 1, 2 * m :] = -pf * sf / (pk * sk)
    return jac


def free_from_params(params: MixtureParams) -> MixtureFree:
    k = params.k
    return MixtureFree(
        k, params.weights[: k - 1], params.means[: k - 1], params.scales[: k - 1]
    )


def standardize_mixture(weights, means, scales, scale_floor: float = 0.0) -> MixtureParams:
    """Re-center and re-scale an arbitrary mixture to mean 0, variance 1.

    Components are reordered so that the one carrying the largest share of
    the variance comes last; that keeps the derived last scale well away
    from the feasibility boundary.
    """
    p = _as_float_array(weights)
    p = p / p.sum()
    mu = _as_float_array(means)
    s = _as_float_array(scales)
    center = (p * mu).sum()
    sd = np.sqrt((p * ((mu - center) ** 2 + s**2)).sum())
    mu = (mu - center) / sd
    s = np.maximum(s / sd, scale_floor)
    # flooring scales perturbs the variance slightly; renormalize once more
    sd2 = np.sqrt((p * (mu**2 + s**2)).sum())
    mu, s = mu / sd2, s / sd2
    order = np.argsort(p * s**2, kind="stable")
    return MixtureParams(p[order], mu[order], s[order])


def equally_spaced_mixture(k_true: int, variance: float = 0.5) -> MixtureParams:
    """Equal weights, means evenly spaced on ``[-k_true, k_true]``, then standardized."""
    if k_true < 1:
        raise InvalidParameter("k_true must be >= 1")
    if k_true == 1:
        return MixtureParams([1.0], [0.0], [1.0])
    means = np.linspace(-k_true, k_true, k_true)
    p = np.full(k_true, 1.0 / k_true)
    sd = np.sqrt((p * (means**2 + variance)).sum())
    return MixtureParams(p, means / sd, np.full(k_true, np.sqrt(variance)) / sd)


def component_log_densities(params: MixtureParams, x) -> np.ndarray:
    """``log p_k + log f(x; mu_k, sigma_k)`` as an ``(n, K)`` array."""
    x = np.asarray(x, dtype=float)[..., None]
    z = (x - params.means) / params.scales
    return np.log(params.weights) - np.log(params.scales) - LOG_SQRT_2PI - 0.5 * z * z


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    amax = a.max(axis=-1, keepdims=True)
    return (amax + np.log(np.exp(a - amax).sum(axis=-1, keepdims=True)))[..., 0]


def log_density(params: MixtureParams, x):
    """Log of the mixture density at ``x`` (scalar or array)."""
    out = _logsumexp_rows(component_log_densities(params, x))
    return float(out) if np.ndim(x) == 0 else out


def responsibilities(params: MixtureParams, residuals) -> np.ndarray:
    """Posterior component probabilities, one row per residual."""
    comp = component_log_densities(params, np.atleast_1d(residuals))
    comp -= _logsumexp_rows(comp)[:, None]
    return np.exp(comp)


def sample(params: MixtureParams, n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    labels = rng.choice(params.k, size=n, p=params.weights)
    return params.means[labels] + params.scales[labels] * rng.standard_normal(n)


def format_mixture(params: MixtureParams) -> str:
    def row(key, values):
        return ",".join([key] + [f"{v:.17g}" for v in values])

    lines = [
        f"k,{params.k}",
        row("weights", params.weights),
        row("means", params.means),
        row("scales", params.scales),
    ]
    return "\n".join(lines) + "\n"


def parse_mixture(text: str) -> MixtureParams:
    record = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *values = [tok.strip() for tok in line.split(",")]
        record[key] = values
    try:
        k = int(record["k"][0])
        weights, means, scales = (
            [float(v) for v in record[key]] for key in ("weights", "means", "scales")
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise InvalidParameter(f"malformed mixture record: {exc}") from exc
    params = MixtureParams(weights, means, scales)
    if params.k != k:
        raise InvalidParameter(f"record declares k={k} but lists {params.k} components")
    return params


def write_mixture(params: MixtureParams, path) -> None:
    Path(path).write_text(format_mixture(params))


def read_mixture(path) -> MixtureParams:
    return parse_mixture(Path(path).read_text())
