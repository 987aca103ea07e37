"""
Standardized innovation laws.

Every law is described by a raw variable with a closed-form density and a
pair ``(shift, scale)`` such that ``eta = (raw - shift) / scale`` has mean 0
and variance 1. Densities returned by :func:`log_pdf` are those of ``eta``.

The skewed t is the two-piece Student t whose right half is stretched by
``1 + lam`` and left half by ``1 - lam`` around a unit-scale ``t_q`` kernel.
Its standardizing constants follow from the half-component moments
``E|T_q|`` and ``q / (q - 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln, log_ndtr

from darmix import mixture as mx
from darmix.exceptions import InvalidParameter

__all__ = [
    "InnovationSpec",
    "standardization_constants",
    "sample_innovations",
    "log_pdf",
    "dlog_pdf",
    "parse_innovation",
    "skewed_t_textbook_constants",
    "LAWS",
]

LAWS = ("standard_normal", "student_t", "skew_normal", "skewed_t", "normal_mixture")
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class InnovationSpec:
    """Tagged innovation law.

    Use the named constructors rather than filling fields directly.
    """

    law: str
    df: float | None = None
    theta: float | None = None
    q: float | None = None
    lam: float | None = None
    mixture: mx.MixtureParams | None = None
    label: str | None = None

    def __post_init__(self):
        if self.law not in LAWS:
            raise InvalidParameter(f"unknown innovation law {self.law!r}")
        if self.law == "student_t" and not (self.df is not None and self.df > 2):
            raise InvalidParameter(f"student t needs df > 2, got {self.df}")
        if self.law == "skewed_t":
            if not (self.q is not None and self.q > 2):
                raise InvalidParameter(f"skewed t needs q > 2, got {self.q}")
            if not (self.lam is not None and -1 < self.lam < 1):
                raise InvalidParameter(f"skewed t needs lambda in (-1, 1), got {self.lam}")
        if self.law == "skew_normal" and self.theta is None:
            raise InvalidParameter("skew normal needs theta")
        if self.law == "normal_mixture":
            if self.mixture is None or not self.mixture.is_feasible(1e-8):
                raise InvalidParameter("normal mixture needs feasible standardized params")

    @classmethod
    def normal(cls):
        return cls("standard_normal")

    @classmethod
    def student_t(cls, df):
        return cls("student_t", df=float(df))

    @classmethod
    def skew_normal(cls, theta):
        return cls("skew_normal", theta=float(theta))

    @classmethod
    def skewed_t(cls, q, lam):
        return cls("skewed_t", q=float(q), lam=float(lam))

    @classmethod
    def normal_mixture(cls, params, label=None):
        return cls("normal_mixture", mixture=params, label=label)

    @property
    def standardization(self) -> tuple[float, float]:
        return standardization_constants(self)

    def __str__(self):
        if self.law == "standard_normal":
            return "normal"
        if self.law == "student_t":
            return f"t:{self.df:g}"
        if self.law == "skew_normal":
            return f"skewnormal:{self.theta:g}"
        if self.law == "skewed_t":
            return f"skewt:{self.q:g},{self.lam:g}"
        return f"mixture:{self.label or self.mixture.k}"


def _abs_t_mean(q: float) -> float:
    # E|T_q| for a unit-scale Student t
    return float(
        np.exp(0.5 * np.log(q) + gammaln((q - 1) / 2) - 0.5 * np.log(np.pi) - gammaln(q / 2))
    )


def standardization_constants(spec: InnovationSpec) -> tuple[float, float]:
    """Mean and standard deviation of the raw variable behind ``spec``."""
    law = spec.law
    if law in ("standard_normal", "normal_mixture"):
        return 0.0, 1.0
    if law == "student_t":
        return 0.0, float(np.sqrt(spec.df / (spec.df - 2)))
    if law == "skew_normal":
        delta = spec.theta / np.sqrt(1 + spec.theta**2)
        return (
            float(delta * np.sqrt(2 / np.pi)),
            float(np.sqrt(1 - 2 * delta**2 / np.pi)),
        )
    q, lam = spec.q, spec.lam
    mean = 2 * lam * _abs_t_mean(q)
    second = q / (q - 2) * (1 + 3 * lam**2)
    return float(mean), float(np.sqrt(second - mean**2))


def skewed_t_textbook_constants(q: float, lam: float) -> tuple[float, float]:
    """Location offset ``m`` and scale factor ``nu`` of the textbook parametrization.

    In that parametrization the standardized density reads

        Gamma((1+q)/2) / (nu (pi q / 2)^(1/2) Gamma(q/2))
            * (1 + |x + m|^2 / ((q/2) nu^2 (1 + lam sign(x + m))^2))^(-(1+q)/2)
    """
    shift, scale = standardization_constants(InnovationSpec.skewed_t(q, lam))
    return shift / scale, np.sqrt(2.0) / scale


def _raw_log_pdf(spec: InnovationSpec, x: np.ndarray) -> np.ndarray:
    law = spec.law
    if law == "standard_normal":
        return -LOG_SQRT_2PI - 0.5 * x * x
    if law == "student_t":
        nu = spec.df
        const = gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * np.log(nu * np.pi)
        return const - (nu + 1) / 2 * np.log1p(x * x / nu)
    if law == "skew_normal":
        return np.log(2.0) - LOG_SQRT_2PI - 0.5 * x * x + log_ndtr(spec.theta * x)
    if law == "skewed_t":
        q = spec.q
        a = np.where(x >= 0, 1 + spec.lam, 1 - spec.lam)
        const = gammaln((q + 1) / 2) - gammaln(q / 2) - 0.5 * np.log(q * np.pi)
        return const - (q + 1) / 2 * np.log1p((x / a) ** 2 / q)
    return mx.log_density(spec.mixture, x)


def _raw_dlog_pdf(spec: InnovationSpec, x: np.ndarray) -> np.ndarray:
    law = spec.law
    if law == "standard_normal":
        return -x
    if law == "student_t":
        nu = spec.df
        return -(nu + 1) * x / (nu + x * x)
    if law == "skew_normal":
        th = spec.theta
        u = th * x
        mills = np.exp(-LOG_SQRT_2PI - 0.5 * u * u - log_ndtr(u))
        return -x + th * mills
    if law == "skewed_t":
        q = spec.q
        a = np.where(x >= 0, 1 + spec.lam, 1 - spec.lam)
        return -(q + 1) * x / (q * a * a + x * x)
    params = spec.mixture
    resp = mx.responsibilities(params, x)
    return (resp * (-(x[:, None] - params.means) / params.scales**2)).sum(axis=1)


def log_pdf(spec: InnovationSpec, x):
    """Log density of the standardized innovation."""
    shift, scale = standardization_constants(spec)
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = _raw_log_pdf(spec, shift + scale * arr) + np.log(scale)
    return float(out[0]) if np.ndim(x) == 0 else out


def dlog_pdf(spec: InnovationSpec, x):
    """Derivative of :func:`log_pdf` with respect to ``x``."""
    shift, scale = standardization_constants(spec)
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = scale * _raw_dlog_pdf(spec, shift + scale * arr)
    return float(out[0]) if np.ndim(x) == 0 else out


def _raw_sample(spec: InnovationSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    law = spec.law
    if law == "standard_normal":
        return rng.standard_normal(n)
    if law == "student_t":
        z = rng.standard_normal(n)
        return z / np.sqrt(rng.chisquare(spec.df, n) / spec.df)
    if law == "skew_normal":
        u1 = rng.standard_normal(n)
        u2 = rng.standard_normal(n)
        th = spec.theta
        return (th * np.abs(u1) + u2) / np.sqrt(1 + th * th)
    if law == "skewed_t":
        q, lam = spec.q, spec.lam
        z = rng.standard_normal(n)
        t = np.abs(z / np.sqrt(rng.chisquare(q, n) / q))
        right = rng.random(n) < (1 + lam) / 2
        return np.where(right, (1 + lam) * t, -(1 - lam) * t)
    return mx.sample(spec.mixture, n, rng)


def sample_innovations(spec: InnovationSpec, n: int, seed) -> np.ndarray:
    """Draw ``n`` standardized innovations; identical output for identical seeds."""
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    rng = np.random.default_rng(seed)
    shift, scale = standardization_constants(spec)
    return (_raw_sample(spec, n, rng) - shift) / scale


def parse_innovation(text: str) -> InnovationSpec:
    """Parse ``normal``, ``t:2.5``, ``skewnormal:5``, ``skewt:2.5,-0.9`` or ``mixture:<file>``."""
    text = text.strip()
    name, _, arg = text.partition(":")
    name = name.lower().replace("_", "").replace("-", "")
    try:
        if name in ("normal", "standardnormal", "gaussian"):
            return InnovationSpec.normal()
        if name in ("t", "studentt"):
            return InnovationSpec.student_t(float(arg))
        if name in ("skewnormal", "sn"):
            return InnovationSpec.skew_normal(float(arg))
        if name in ("skewt", "skewedt"):
            q, lam = (float(v) for v in arg.split(","))
            return InnovationSpec.skewed_t(q, lam)
        if name == "mixture":
            if arg.lower().startswith("equal"):
                # equal-weight design with means spread over [-K, K], e.g. mixture:equal3
                k_true = int(arg[5:])
                return InnovationSpec.normal_mixture(
                    mx.equally_spaced_mixture(k_true), label=arg
                )
            return InnovationSpec.normal_mixture(mx.read_mixture(Path(arg)), label=arg)
    except (ValueError, TypeError) as exc:
        raise InvalidParameter(f"cannot parse innovation {text!r}: {exc}") from exc
    raise InvalidParameter(f"unknown innovation {text!r}")
