"""
Normal-mixture quasi-maximum likelihood for DAR(p) models.

The parameter vector is ``theta = (phi, omega, alpha, p_1..p_{K-1},
mu_1..mu_{K-1}, sigma_1..sigma_{K-1})``; the last mixture component is
always derived from the moment constraints (see :mod:`darmix.mixture`).
Each observation contributes

    W_t = -0.5 log h_t + log sum_k p_k f((y_t - m_t) / sqrt(h_t); mu_k, sigma_k).

Fitting maps ``theta`` to an unconstrained space (logs for positive
quantities, stick-breaking logits for the weights), runs BFGS with the
analytic gradient from several starts and keeps the best converged one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from darmix import mixture as mx
from darmix._bfgs import minimize_bfgs
from darmix.dar import DarParams, Series, lag_matrix, residuals, stationarity_margin
from darmix.exceptions import (
    AllStartsFailed,
    DataTooShort,
    InfeasiblePoint,
    InvalidParameter,
    SingularHessian,
)
from darmix.innovations import InnovationSpec, dlog_pdf, log_pdf

__all__ = [
    "FullTheta",
    "FitConfig",
    "FitResult",
    "neg_quasi_loglik",
    "score",
    "score_contributions",
    "observation_loglik",
    "hessian_theta1",
    "numeric_hessian",
    "fit_nmqmle",
    "fit_gaussian_qmle",
    "fit_mle",
    "sandwich_covariance",
    "parameter_names",
]

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FullTheta:
    """DAR coefficients together with the free mixture coordinates."""

    dar: DarParams
    mix: mx.MixtureFree

    @property
    def k(self) -> int:
        return self.mix.k

    @property
    def p(self) -> int:
        return self.dar.p

    @property
    def dim(self) -> int:
        return 2 * self.p + 1 + 3 * (self.k - 1)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.dar.to_vector(), self.mix.to_vector()])

    @classmethod
    def from_vector(cls, vec, p: int, k: int) -> "FullTheta":
        vec = np.asarray(vec, dtype=float)
        return cls(
            DarParams.from_vector(vec[: 2 * p + 1], p),
            mx.MixtureFree.from_vector(k, vec[2 * p + 1 :]),
        )

    def mixture(self) -> mx.MixtureParams:
        return mx.complete_params(self.mix)


def parameter_names(p: int, k: int) -> list[str]:
    names = DarParams(np.zeros(p), 1.0, np.ones(p)).names()
    for prefix in ("p", "mu", "sigma"):
        names += [f"{prefix}{i}" for i in range(1, k)]
    return names


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    Bounds describe the compact box for the DAR coefficients; points outside
    it (or with any mixture scale below ``scale_floor``) are treated as
    infeasible.
    """

    n_starts: int = 8
    gtol: float = 1e-6
    xtol: float = 1e-9
    max_iter: int = 2000
    seed: int = 0
    phi_bound: float = 10.0
    omega_bounds: tuple[float, float] = (1e-6, 1e6)
    alpha_bounds: tuple[float, float] = (1e-8, 1e6)
    scale_floor: float = mx.SCALE_FLOOR
    em_iter: int = 50
    jitter: float = 0.1
    compute_covariance: bool = False
    init: FullTheta | None = None

    def __post_init__(self):
        if self.n_starts < 1:
            raise InvalidParameter("n_starts must be >= 1")
        if self.max_iter < 1:
            raise InvalidParameter("max_iter must be >= 1")


@dataclass(frozen=True)
class FitResult:
    theta: FullTheta
    neg_loglik: float
    loglik: float
    k: int
    converged: bool
    n_restarts_used: int
    n_obs: int
    method: str = "nmqmle"
    grad_norm: float = float("nan")
    n_iter: int = 0
    covariance: np.ndarray | None = None
    std_errors: np.ndarray | None = None
    responsibilities_summary: np.ndarray | None = None
    classification_entropy: float = 0.0
    innovation: InnovationSpec | None = None
    start_losses: tuple = field(default=())

    @property
    def dar(self) -> DarParams:
        return self.theta.dar

    @property
    def p(self) -> int:
        return self.theta.p

    @property
    def dim(self) -> int:
        if self.method == "nmqmle":
            return self.theta.dim
        return 2 * self.p + 1

    def param_names(self) -> list[str]:
        return parameter_names(self.p, self.k if self.method == "nmqmle" else 1)

    def params_vector(self) -> np.ndarray:
        vec = self.theta.to_vector()
        return vec[: self.dim]

    def mixture(self) -> mx.MixtureParams:
        return self.theta.mixture()

    def to_text(self) -> str:
        """Keyed summary followed by a ``name,estimate,std_error`` CSV block."""
        lines = [
            f"method,{self.method}",
            f"k,{self.k}",
            f"p,{self.p}",
            f"n_obs,{self.n_obs}",
            f"loglik,{self.loglik:.17g}",
            f"neg_loglik,{self.neg_loglik:.17g}",
            f"converged,{int(self.converged)}",
            f"n_restarts_used,{self.n_restarts_used}",
            f"grad_norm,{self.grad_norm:.6g}",
        ]
        if self.innovation is not None:
            lines.append(f"innovation,{self.innovation}")
        if self.responsibilities_summary is not None:
            lines.append(
                "posterior_mass," + ",".join(f"{v:.6g}" for v in self.responsibilities_summary)
            )
        lines.append("")
        lines.append("name,estimate,std_error")
        se = self.std_errors
        for i, (name, val) in enumerate(zip(self.param_names(), self.params_vector())):
            err = "" if se is None else f"{se[i]:.17g}"
            lines.append(f"{name},{val:.17g},{err}")
        if self.method == "nmqmle" and self.k > 1:
            mix = self.mixture()
            lines.append("")
            lines.append(mx.format_mixture(mix).rstrip("\n"))
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# Objective and derivatives
# ----------------------------------------------------------------------------


def _prepare(series: Series, p: int):
    s = series.for_order(p)
    lags = lag_matrix(s, p)
    return s.values, lags, lags * lags


def _mixture_terms(vec, p, k, y, lags, lags2, want_grad, want_hess=False):
    """Per-observation ``W_t`` and, optionally, its gradient rows."""
    phi = vec[:p]
    omega = vec[p]
    alpha = vec[p + 1 : 2 * p + 1]
    mix = mx.complete_params(mx.MixtureFree.from_vector(k, vec[2 * p + 1 :]))
    m = lags @ phi
    h = omega + lags2 @ alpha
    if np.any(h <= 0):
        raise InfeasiblePoint("conditional variance must be positive")
    sq = np.sqrt(h)
    z = (y - m) / sq
    w, mu, sig = mix.weights, mix.means, mix.scales
    dev = z[:, None] - mu
    comp = np.log(w) - np.log(sig) - LOG_SQRT_2PI - 0.5 * (dev / sig) ** 2
    cmax = comp.max(axis=1, keepdims=True)
    ex = np.exp(comp - cmax)
    tot = ex.sum(axis=1, keepdims=True)
    lse = (cmax + np.log(tot))[:, 0]
    contrib = -0.5 * np.log(h) + lse
    if not want_grad:
        return contrib, None, None
    r = ex / tot
    a = dev / sig**2
    dlz = -(r * a).sum(axis=1)
    dW_dm = -dlz / sq
    dW_dh = -0.5 / h - dlz * z / (2 * h)
    grads = [dW_dm[:, None] * lags, dW_dh[:, None], dW_dh[:, None] * lags2]
    if k > 1:
        full = np.concatenate([r / w, r * a, r * (-1.0 / sig + dev**2 / sig**3)], axis=1)
        grads.append(full @ mx.completion_jacobian(mix))
    rows = np.concatenate(grads, axis=1)
    extra = None
    if want_hess:
        d2lz = (r * (a * a - 1.0 / sig**2)).sum(axis=1) - dlz**2
        extra = (z, h, dlz, d2lz)
    return contrib, rows, extra


def observation_loglik(theta: FullTheta, series: Series) -> np.ndarray:
    """``W_t(theta)`` for every observation after the presample."""
    y, lags, lags2 = _prepare(series, theta.p)
    contrib, _, _ = _mixture_terms(theta.to_vector(), theta.p, theta.k, y, lags, lags2, False)
    return contrib


def neg_quasi_loglik(theta: FullTheta, series: Series) -> float:
    """``-sum_t W_t(theta)`` (not divided by the number of observations)."""
    return float(-observation_loglik(theta, series).sum())


def score_contributions(theta: FullTheta, series: Series) -> np.ndarray:
    """Rows ``dW_t / dtheta`` with respect to the free coordinates."""
    y, lags, lags2 = _prepare(series, theta.p)
    _, rows, _ = _mixture_terms(theta.to_vector(), theta.p, theta.k, y, lags, lags2, True)
    return rows


def score(theta: FullTheta, series: Series) -> np.ndarray:
    """Gradient of ``sum_t W_t`` with respect to the free coordinates."""
    return score_contributions(theta, series).sum(axis=0)


def hessian_theta1(theta: FullTheta, series: Series) -> np.ndarray:
    """Analytic second derivatives of ``sum_t W_t`` in the ``(phi, omega, alpha)`` block."""
    p = theta.p
    y, lags, lags2 = _prepare(series, p)
    _, _, (z, h, dlz, d2lz) = _mixture_terms(
        theta.to_vector(), p, theta.k, y, lags, lags2, True, want_hess=True
    )
    # derivatives of z = (y - m) / sqrt(h) w.r.t. (m, h)
    z_m = -1.0 / np.sqrt(h)
    z_h = -z / (2 * h)
    z_mh = 0.5 / h**1.5
    z_hh = 0.75 * z / h**2
    w_mm = d2lz * z_m**2
    w_mh = d2lz * z_m * z_h + dlz * z_mh
    w_hh = 0.5 / h**2 + d2lz * z_h**2 + dlz * z_hh
    n = y.size
    dm = np.concatenate([lags, np.zeros((n, p + 1))], axis=1)
    dh = np.concatenate([np.zeros((n, p)), np.ones((n, 1)), lags2], axis=1)
    return (
        (dm * w_mm[:, None]).T @ dm
        + (dm * w_mh[:, None]).T @ dh
        + (dh * w_mh[:, None]).T @ dm
        + (dh * w_hh[:, None]).T @ dh
    )


def numeric_hessian(grad_fn, vec, rel_step: float = 1e-4) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrized."""
    vec = np.asarray(vec, dtype=float)
    d = vec.size
    out = np.empty((d, d))
    for i in range(d):
        step = rel_step * max(1.0, abs(vec[i]))
        up = vec.copy()
        dn = vec.copy()
        up[i] += step
        dn[i] -= step
        out[:, i] = (grad_fn(up) - grad_fn(dn)) / (2 * step)
    return 0.5 * (out + out.T)


# ----------------------------------------------------------------------------
# Known-density likelihood (used by the MLE benchmark)
# ----------------------------------------------------------------------------


def _density_terms(vec, p, spec, y, lags, lags2, want_grad):
    phi = vec[:p]
    omega = vec[p]
    alpha = vec[p + 1 : 2 * p + 1]
    m = lags @ phi
    h = omega + lags2 @ alpha
    if np.any(h <= 0):
        raise InfeasiblePoint("conditional variance must be positive")
    sq = np.sqrt(h)
    z = (y - m) / sq
    contrib = -0.5 * np.log(h) + log_pdf(spec, z)
    if not want_grad:
        return contrib, None
    dlz = dlog_pdf(spec, z)
    dW_dm = -dlz / sq
    dW_dh = -0.5 / h - dlz * z / (2 * h)
    rows = np.concatenate([dW_dm[:, None] * lags, dW_dh[:, None], dW_dh[:, None] * lags2], axis=1)
    return contrib, rows


# ----------------------------------------------------------------------------
# Unconstrained reparametrization
# ----------------------------------------------------------------------------


class _Transform:
    """Map between ``theta`` and an optimizer vector ``u``.

    ``phi`` and the component means are left as they are, positive
    quantities enter through their logs and the free weights through
    stick-breaking logits. The compact parameter box becomes a box in
    ``u`` which the optimizer enforces by projection.
    """

    def __init__(self, p: int, k: int):
        self.p = p
        self.k = k

    def to_theta(self, u):
        p, m = self.p, self.k - 1
        theta = np.empty_like(u)
        theta[:p] = u[:p]
        theta[p : 2 * p + 1] = np.exp(u[p : 2 * p + 1])
        if m:
            o = 2 * p + 1
            s = expit(u[o : o + m])
            rem = np.concatenate([[1.0], np.cumprod(1.0 - s)])[:-1]
            theta[o : o + m] = rem * s
            theta[o + m : o + 2 * m] = u[o + m : o + 2 * m]
            theta[o + 2 * m :] = np.exp(u[o + 2 * m :])
        return theta

    def to_u(self, theta):
        p, m = self.p, self.k - 1
        u = np.empty_like(theta)
        u[:p] = theta[:p]
        u[p : 2 * p + 1] = np.log(theta[p : 2 * p + 1])
        if m:
            o = 2 * p + 1
            w = theta[o : o + m]
            rem = 1.0 - np.concatenate([[0.0], np.cumsum(w)])[:-1]
            u[o : o + m] = logit(w / rem)
            u[o + m : o + 2 * m] = theta[o + m : o + 2 * m]
            u[o + 2 * m :] = np.log(theta[o + 2 * m :])
        return u

    def bounds(self, config: FitConfig):
        p, m = self.p, self.k - 1
        lo = np.full(2 * p + 1 + 3 * m, -np.inf)
        hi = np.full_like(lo, np.inf)
        lo[:p], hi[:p] = -config.phi_bound, config.phi_bound
        lo[p], hi[p] = np.log(config.omega_bounds[0]), np.log(config.omega_bounds[1])
        lo[p + 1 : 2 * p + 1] = np.log(config.alpha_bounds[0])
        hi[p + 1 : 2 * p + 1] = np.log(config.alpha_bounds[1])
        if m:
            lo[2 * p + 1 + 2 * m :] = np.log(config.scale_floor)
        return lo, hi

    def chain(self, u, theta, grad_theta):
        """Gradient w.r.t. ``u`` given the gradient w.r.t. ``theta``."""
        p, m = self.p, self.k - 1
        g = grad_theta.copy()
        g[p : 2 * p + 1] *= theta[p : 2 * p + 1]
        if m:
            o = 2 * p + 1
            s = expit(u[o : o + m])
            w = theta[o : o + m]
            # dp_i/dv_j = p_i (1 - s_i) if i == j, -p_i s_j if j < i
            jac = -np.outer(w, s)
            jac = np.tril(jac, -1)
            jac[np.arange(m), np.arange(m)] = w * (1 - s)
            g[o : o + m] = jac.T @ grad_theta[o : o + m]
            g[o + 2 * m :] *= theta[o + 2 * m :]
        return g


def _make_objective(p, k, y, lags, lags2, config: FitConfig, spec=None):
    tr = _Transform(p, k)
    # exp(log(b)) may round just below b, hence the relative slack
    floor2 = (config.scale_floor * (1.0 - 1e-9)) ** 2

    def fg(u):
        theta = tr.to_theta(u)
        if not np.all(np.isfinite(theta)):
            return np.inf, np.zeros_like(u)
        try:
            if spec is None:
                if k > 1 and not _last_variance(theta[2 * p + 1 :], k) >= floor2:
                    return np.inf, np.zeros_like(u)
                contrib, rows, _ = _mixture_terms(theta, p, k, y, lags, lags2, True)
            else:
                contrib, rows = _density_terms(theta, p, spec, y, lags, lags2, True)
        except InfeasiblePoint:
            return np.inf, np.zeros_like(u)
        f = -contrib.sum()
        if not np.isfinite(f):
            return np.inf, np.zeros_like(u)
        return f, tr.chain(u, theta, -rows.sum(axis=0))

    return tr, fg


def _last_variance(free_vec, k):
    m = k - 1
    p, mu, s = free_vec[:m], free_vec[m : 2 * m], free_vec[2 * m :]
    pk = 1 - p.sum()
    muk = -(p * mu).sum() / pk
    return (1 - (p * (mu**2 + s**2)).sum() - pk * muk**2) / pk


# ----------------------------------------------------------------------------
# Starting values
# ----------------------------------------------------------------------------


def _moment_start(y, lags, lags2, config: FitConfig) -> np.ndarray:
    """Least-squares drift plus a regression of squared residuals on squared lags."""
    phi, *_ = np.linalg.lstsq(lags, y, rcond=None)
    phi = np.clip(phi, -0.95 * config.phi_bound, 0.95 * config.phi_bound)
    e2 = (y - lags @ phi) ** 2
    design = np.column_stack([np.ones_like(y), lags2])
    coef, *_ = np.linalg.lstsq(design, e2, rcond=None)
    var = max(float(e2.mean()), 1e-8)
    omega = float(np.clip(coef[0], 0.05 * var, var))
    alpha = np.clip(coef[1:], 0.05, 0.9)
    lo_w, hi_w = config.omega_bounds
    omega = float(np.clip(omega, lo_w * 10, hi_w / 10))
    return np.concatenate([phi, [omega], alpha])


def _em_mixture(z, k, rng, init, n_iter, scale_floor):
    """Short EM run for a plain K-component normal mixture on ``z``."""
    sd = z.std()
    if init == "quantile":
        means = np.quantile(z, (np.arange(k) + 0.5) / k)
        scales = np.full(k, sd / k)
    else:
        means = rng.choice(z, size=k, replace=False)
        scales = np.full(k, sd * rng.uniform(0.3, 1.0))
    weights = np.full(k, 1.0 / k)
    floor = max(scale_floor * 10, 0.05 * sd)
    for _ in range(n_iter):
        params = mx.MixtureParams(weights, means, np.maximum(scales, floor))
        r = mx.responsibilities(params, z)
        nk = r.sum(axis=0) + 1e-12
        weights = nk / nk.sum()
        means = (r * z[:, None]).sum(axis=0) / nk
        scales = np.sqrt((r * (z[:, None] - means) ** 2).sum(axis=0) / nk)
        scales = np.maximum(scales, floor)
    weights = np.maximum(weights, 0.01)
    return mx.standardize_mixture(weights, means, scales, scale_floor=10 * scale_floor)


def _split_component(mix: mx.MixtureParams, spread: float = 0.5) -> np.ndarray:
    """Free coordinates of a (K+1)-mixture made by splitting the heaviest component.

    The two halves keep the parent's first two moments, so the split
    mixture has the same density moments as ``mix``.
    """
    j = int(np.argmax(mix.weights))
    w, mu, sig = mix.weights[j], mix.means[j], mix.scales[j]
    half = np.sqrt(1.0 - spread**2) * sig
    weights = np.concatenate([np.delete(mix.weights, j), [w / 2, w / 2]])
    means = np.concatenate([np.delete(mix.means, j), [mu - spread * sig, mu + spread * sig]])
    scales = np.concatenate([np.delete(mix.scales, j), [half, half]])
    return mx.free_from_params(mx.standardize_mixture(weights, means, scales)).to_vector()


def _jitter(theta1, p, rng, config: FitConfig):
    out = theta1.copy()
    out[:p] += config.jitter * 0.5 * rng.standard_normal(p)
    out[p : 2 * p + 1] *= np.exp(config.jitter * 2 * rng.standard_normal(p + 1))
    out[:p] = np.clip(out[:p], -0.95 * config.phi_bound, 0.95 * config.phi_bound)
    return out


# ----------------------------------------------------------------------------
# Fitting
# ----------------------------------------------------------------------------


def _check_length(n_eff: int, dim: int):
    if n_eff < dim + 1:
        raise DataTooShort(f"{n_eff} usable observations for {dim} parameters")


def _run_starts(starts, tr, fg, config: FitConfig):
    lower, upper = tr.bounds(config)
    results = []
    for vec in starts:
        try:
            u0 = tr.to_u(vec)
        except (FloatingPointError, ValueError):
            continue
        if not np.all(np.isfinite(u0)):
            continue
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = minimize_bfgs(
                fg, u0, lower, upper, gtol=config.gtol, xtol=config.xtol, max_iter=config.max_iter
            )
        results.append(res)
    return results


def _best(results, method):
    ok = [r for r in results if r.converged and np.isfinite(r.fun)]
    if not ok:
        msgs = sorted({r.message for r in results}) or ["no feasible start"]
        raise AllStartsFailed(f"{method}: no start converged ({'; '.join(msgs)})")
    return min(ok, key=lambda r: (r.fun, r.proj_grad))


def _polish(best, tr, fg, config: FitConfig, factor: float = 1e-4, max_iter: int = 300):
    """Restart from the winning start with a tighter gradient tolerance.

    The relative stopping rule scales with ``|f|`` and so with ``n``; the
    extra pass pins the reported coordinates well below that resolution.
    """
    lower, upper = tr.bounds(config)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        res = minimize_bfgs(
            fg, best.x, lower, upper, gtol=config.gtol * factor, xtol=config.xtol * 1e-3,
            max_iter=max_iter,
        )
    if np.isfinite(res.fun) and res.fun <= best.fun:
        res.converged = True
        res.nit += best.nit
        return res
    return best


def _warn_stationarity(dar: DarParams):
    if stationarity_margin(dar) >= 1:
        warnings.warn(
            "estimated DAR parameters lie outside the stationarity region",
            RuntimeWarning,
            stacklevel=3,
        )


def fit_gaussian_qmle(series: Series, config: FitConfig | None = None, p: int = 1) -> FitResult:
    """Gaussian QMLE of the DAR(p) coefficients."""
    config = config or FitConfig()
    return _fit_single_density(series, None, config, p, method="gaussian_qmle")


def fit_mle(
    series: Series, innovation: InnovationSpec, config: FitConfig | None = None, p: int = 1
) -> FitResult:
    """Maximum likelihood with the innovation density taken as known."""
    config = config or FitConfig()
    return _fit_single_density(series, innovation, config, p, method="mle")


def _fit_single_density(series, spec, config, p, method):
    y, lags, lags2 = _prepare(series, p)
    _check_length(y.size, 2 * p + 1)
    if spec is not None and spec.law == "standard_normal":
        spec = None
    if spec is None:
        tr, fg = _make_objective(p, 1, y, lags, lags2, config)
    else:
        tr, fg = _make_objective(p, 1, y, lags, lags2, config, spec=spec)
    rng = np.random.default_rng(config.seed)
    base = _moment_start(y, lags, lags2, config)
    if spec is not None:
        # the Gaussian fit is a better centre for the known-density search
        try:
            gq = _fit_single_density(series, None, replace(config, n_starts=1, init=None), p, "gaussian_qmle")
            base = gq.params_vector()
        except AllStartsFailed:
            pass
    starts = []
    if config.init is not None:
        starts.append(config.init.dar.to_vector())
    starts.append(base)
    while len(starts) < config.n_starts:
        starts.append(_jitter(base, p, rng, config))
    results = _run_starts(starts, tr, fg, config)
    best = _polish(_best(results, method), tr, fg, config)
    vec = tr.to_theta(best.x)
    theta = FullTheta(DarParams.from_vector(vec, p), mx.MixtureFree(1))
    _warn_stationarity(theta.dar)
    result = FitResult(
        theta=theta,
        neg_loglik=float(best.fun),
        loglik=float(-best.fun),
        k=1,
        converged=True,
        n_restarts_used=len(results),
        n_obs=int(y.size),
        method=method,
        grad_norm=float(best.proj_grad),
        n_iter=best.nit,
        responsibilities_summary=np.ones(1),
        innovation=spec if spec is not None else (InnovationSpec.normal() if method == "mle" else None),
        start_losses=tuple(float(r.fun) for r in results),
    )
    if config.compute_covariance:
        cov, se = sandwich_covariance(result, series)
        result = replace(result, covariance=cov, std_errors=se)
    return result


def fit_nmqmle(series: Series, k: int, config: FitConfig | None = None, p: int = 1) -> FitResult:
    """Normal-mixture QMLE with ``k`` components.

    Starts: the Gaussian QMLE coefficients (jittered after the first start)
    paired with a short EM fit of a ``k``-component mixture to the Gaussian
    residuals, standardized onto the moment constraints.
    """
    config = config or FitConfig()
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    y, lags, lags2 = _prepare(series, p)
    dim = 2 * p + 1 + 3 * (k - 1)
    _check_length(y.size, dim)
    tr, fg = _make_objective(p, k, y, lags, lags2, config)
    rng = np.random.default_rng(config.seed)
    try:
        gq = fit_gaussian_qmle(series, replace(config, n_starts=1, init=None, compute_covariance=False), p)
        base = gq.params_vector()
    except AllStartsFailed:
        base = _moment_start(y, lags, lags2, config)
    starts = []
    if config.init is not None and config.init.k == k:
        starts.append(config.init.to_vector())
    elif config.init is not None and config.init.k == k - 1:
        split = _split_component(config.init.mixture())
        starts.append(np.concatenate([config.init.dar.to_vector(), split]))
    for i in range(config.n_starts):
        theta1 = base if i == 0 else _jitter(base, p, rng, config)
        if k == 1:
            starts.append(theta1)
            continue
        m = theta1[:p]
        h = theta1[p] + lags2 @ theta1[p + 1 :]
        z = (y - lags @ m) / np.sqrt(h)
        mix = _em_mixture(z, k, rng, "quantile" if i == 0 else "random", config.em_iter, config.scale_floor)
        starts.append(np.concatenate([theta1, mx.free_from_params(mix).to_vector()]))
    results = _run_starts(starts, tr, fg, config)
    best = _polish(_best(results, "nmqmle"), tr, fg, config)
    vec = tr.to_theta(best.x)
    theta = FullTheta.from_vector(vec, p, k)
    _warn_stationarity(theta.dar)
    mix = theta.mixture()
    eta = residuals(theta.dar, series.for_order(p))
    tau = mx.responsibilities(mix, eta)
    post = tau.mean(axis=0)
    # 0 log 0 := 0
    entropy = float(-np.sum(tau * np.log(np.where(tau > 0, tau, 1.0))))
    result = FitResult(
        theta=theta,
        neg_loglik=float(best.fun),
        loglik=float(-best.fun),
        k=k,
        converged=True,
        n_restarts_used=len(results),
        n_obs=int(y.size),
        method="nmqmle",
        grad_norm=float(best.proj_grad),
        n_iter=best.nit,
        responsibilities_summary=post,
        classification_entropy=entropy,
        start_losses=tuple(float(r.fun) for r in results),
    )
    if config.compute_covariance:
        cov, se = sandwich_covariance(result, series)
        result = replace(result, covariance=cov, std_errors=se)
    return result


# ----------------------------------------------------------------------------
# Asymptotic covariance
# ----------------------------------------------------------------------------


def _contributions_fn(fit_or_theta, series: Series):
    """Return ``(vec, grad_rows(vec))`` for the likelihood behind a fit."""
    if isinstance(fit_or_theta, FitResult):
        fit = fit_or_theta
        theta = fit.theta
        spec = None if fit.method == "nmqmle" else fit.innovation
        if fit.method == "gaussian_qmle":
            spec = None
    else:
        theta, spec = fit_or_theta, None
        fit = None
    p = theta.p
    y, lags, lags2 = _prepare(series, p)
    if spec is None or spec.law == "standard_normal":
        k = theta.k if fit is None or fit.method == "nmqmle" else 1
        vec = theta.to_vector()[: 2 * p + 1 + 3 * (k - 1)]

        def rows(v):
            return _mixture_terms(v, p, k, y, lags, lags2, True)[1]

    else:
        vec = theta.dar.to_vector()

        def rows(v):
            return _density_terms(v, p, spec, y, lags, lags2, True)[1]

    return vec, rows, y.size


def sandwich_covariance(theta_hat, series: Series, rel_step: float = 1e-4, max_cond: float = 1e12):
    """``H^{-1} J H^{-1} / n`` with ``H`` from central differences of the score.

    ``theta_hat`` may be a :class:`FitResult` (any method) or a
    :class:`FullTheta` evaluated under the mixture likelihood.

    Returns
    -------
    cov : ndarray
        Covariance of the estimator in the free coordinates.
    std_errors : ndarray
        Square roots of its diagonal.
    """
    vec, rows, n = _contributions_fn(theta_hat, series)
    s = rows(vec)
    j_hat = s.T @ s / n
    h_hat = -numeric_hessian(lambda v: rows(v).sum(axis=0) / n, vec, rel_step)
    cond = np.linalg.cond(h_hat)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularHessian(f"Hessian condition number {cond:.3g} exceeds {max_cond:.0e}")
    h_inv = np.linalg.inv(h_hat)
    cov = h_inv @ j_hat @ h_inv / n
    cov = 0.5 * (cov + cov.T)
    return cov, np.sqrt(np.clip(np.diag(cov), 0.0, None))
