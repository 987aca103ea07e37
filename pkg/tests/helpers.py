"""Shared builders for the test suite."""

import numpy as np

from darmix import mixture as mx
from darmix.dar import DarParams, simulate_series
from darmix.estimate import FullTheta
from darmix.innovations import InnovationSpec


def random_theta(rng, p, k):
    """An interior parameter point with well-separated mixture scales."""
    dar = DarParams(rng.uniform(-0.5, 0.5, p), rng.uniform(0.5, 2.0), rng.uniform(0.1, 0.8, p) / p)
    full = mx.standardize_mixture(
        rng.dirichlet(np.full(k, 3.0)), rng.normal(0, 1, k), rng.uniform(0.5, 1.5, k)
    )
    return FullTheta(dar, mx.free_from_params(full))


def random_series(rng, p, n=200):
    dar = DarParams(np.full(p, 0.2), 1.0, np.full(p, 0.3))
    return simulate_series(dar, InnovationSpec.student_t(5), n, seed=int(rng.integers(2**31)))


def fd_gradient(f, vec, rel_step=1e-5):
    out = np.empty(vec.size)
    for i in range(vec.size):
        h = rel_step * max(1.0, abs(vec[i]))
        up, dn = vec.copy(), vec.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (f(up) - f(dn)) / (2 * h)
    return out


def gradient_rel_error(analytic, numeric):
    """Coordinatewise relative error ``|a - n| / |n|``."""
    return np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-300)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
