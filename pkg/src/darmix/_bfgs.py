"""Projected BFGS for box constraints, with a line search that tolerates infeasible trial points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    jac: np.ndarray
    nit: int
    nfev: int
    converged: bool
    message: str
    proj_grad: float = float("nan")


def _projected_gradient(x, g, lower, upper):
    return x - np.clip(x - g, lower, upper)


def minimize_bfgs(
    fun_and_grad,
    x0,
    lower=None,
    upper=None,
    gtol: float = 1e-6,
    xtol: float = 1e-9,
    max_iter: int = 500,
    max_backtracks: int = 60,
) -> BfgsResult:
    """Minimize ``fun_and_grad(x) -> (f, g)`` subject to ``lower <= x <= upper``.

    ``f`` may be ``inf`` at infeasible points that the box does not
    describe; the line search then halves the step. Variables sitting on a
    bound with the gradient pushing outward are held fixed for the step.
    Convergence is declared when the projected gradient satisfies
    ``max|x - P(x - g)| < gtol * max(1, |f|)``. A relative step below
    ``xtol`` stops the run without declaring convergence unless the
    gradient test also passes.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)
    f, g = fun_and_grad(x)
    nfev = 1
    if not np.isfinite(f):
        return BfgsResult(x, f, g, 0, nfev, False, "infeasible start")

    def pg_norm(x, g):
        return float(np.max(np.abs(_projected_gradient(x, g, lower, upper)), initial=0.0))

    def done(x, f, g):
        return pg_norm(x, g) < gtol * max(1.0, abs(f))

    def result(it, ok, msg):
        return BfgsResult(x, f, g, it, nfev, ok, msg, pg_norm(x, g))

    hinv = np.eye(n) / max(1.0, np.max(np.abs(g)))
    first = True
    for it in range(1, max_iter + 1):
        if done(x, f, g):
            return result(it - 1, True, "gradient below tolerance")
        span = np.maximum(1e-10, 1e-10 * np.abs(x))
        bound = ((x <= lower + span) & (g > 0)) | ((x >= upper - span) & (g < 0))
        free = ~bound
        d = np.zeros(n)
        d[free] = -hinv[np.ix_(free, free)] @ g[free]
        if not g @ d < 0:
            hinv = np.eye(n) / max(1.0, np.max(np.abs(g)))
            first = True
            d = np.where(free, -g, 0.0) * hinv[0, 0]
        step = 1.0
        for _ in range(max_backtracks):
            x_new = np.clip(x + step * d, lower, upper)
            f_new, g_new = fun_and_grad(x_new)
            nfev += 1
            if np.isfinite(f_new) and f_new <= f + 1e-4 * (g @ (x_new - x)):
                break
            step *= 0.5
        else:
            return result(it, done(x, f, g), "line search failed")
        s = x_new - x
        yv = g_new - g
        x, f, g = x_new, f_new, g_new
        sy = s @ yv
        if sy > 1e-12 * np.sqrt((s @ s) * (yv @ yv)):
            if first:
                hinv = np.eye(n) * (sy / (yv @ yv))
                first = False
            rho = 1.0 / sy
            hy = hinv @ yv
            hinv = (
                hinv
                - rho * (np.outer(hy, s) + np.outer(s, hy))
                + (rho * rho * (yv @ hy) + rho) * np.outer(s, s)
            )
        if np.max(np.abs(s)) < xtol * max(1.0, np.max(np.abs(x))):
            return result(it, done(x, f, g), "relative step below tolerance")
    return result(max_iter, done(x, f, g), "iteration limit reached")
