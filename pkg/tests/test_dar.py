import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from darmix.dar import (
    DarParams,
    Series,
    cond_moments,
    conditional_moments,
    expected_kron_matrix,
    read_series,
    residuals,
    simulate,
    simulate_series,
    stationarity_margin,
    write_series,
)
from darmix.exceptions import IndexOutOfRange, InvalidParameter, NonFiniteState
from darmix.innovations import InnovationSpec

BASE = DarParams([0.3], 1.0, [0.5])


@st.composite
def dar_params(draw, p=None):
    p = draw(st.integers(1, 3)) if p is None else p
    phi = draw(st.lists(st.floats(-0.6, 0.6), min_size=p, max_size=p))
    alpha = draw(st.lists(st.floats(0.01, 0.6), min_size=p, max_size=p))
    return DarParams(phi, draw(st.floats(0.1, 3.0)), alpha)


def test_invalid_params():
    with pytest.raises(InvalidParameter):
        DarParams([0.3], 0.0, [0.5])
    with pytest.raises(InvalidParameter):
        DarParams([0.3], 1.0, [0.0])
    with pytest.raises(InvalidParameter):
        DarParams([0.3, 0.1], 1.0, [0.5])


def test_stationarity_examples():
    assert stationarity_margin(BASE) == pytest.approx(0.59, abs=1e-12)
    assert stationarity_margin(DarParams([1.0], 1.0, [0.5])) == pytest.approx(1.5, abs=1e-12)
    assert stationarity_margin(DarParams([0.3, 0.1], 1.0, [0.5, 0.2])) < 1


@given(dar_params(p=1))
def test_stationarity_p1_closed_form(params):
    closed = params.phi[0] ** 2 + params.alpha[0]
    assert stationarity_margin(params) == pytest.approx(closed, abs=1e-12)
    assert np.max(np.abs(np.linalg.eigvals(expected_kron_matrix(params)))) == pytest.approx(
        closed, abs=1e-12
    )


def test_kron_matrix_against_monte_carlo():
    params = DarParams([0.3, 0.1], 1.0, [0.5, 0.2])
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((10**6, 2))
    first = params.phi + np.sqrt(params.alpha) * xi
    # companion matrix A = [[a1, a2], [1, 0]] with a random first row
    mats = np.zeros((xi.shape[0], 2, 2))
    mats[:, 0, :] = first
    mats[:, 1, 0] = 1.0
    acc = np.einsum("nij,nkl->ikjl", mats, mats).reshape(4, 4) / mats.shape[0]
    np.testing.assert_allclose(acc, expected_kron_matrix(params), atol=1e-2)


def test_dar2_long_run_bounded():
    params = DarParams([0.3, 0.1], 1.0, [0.5, 0.2])
    s = simulate_series(params, InnovationSpec.normal(), 10**6, seed=4)
    assert np.isfinite(s.values).all()
    assert np.mean(s.values**2) < 50


def test_simulate_zero_fixed_point():
    s = simulate(BASE, np.zeros(20), presample=[0.0], burn_in=0)
    assert np.all(s.values == 0)


def test_simulate_hand_recursion():
    s = simulate(BASE, [1.0, -1.0], presample=[1.0], burn_in=0)
    y1 = 0.3 + np.sqrt(1.5)
    y2 = 0.3 * y1 - np.sqrt(1 + 0.5 * y1**2)
    np.testing.assert_allclose(s.values, [y1, y2], atol=1e-12)
    np.testing.assert_allclose(s.values, [1.524745, -1.013094], atol=1e-6)
    assert cond_moments(BASE, s, 1) == pytest.approx((0.3, 1.5), abs=1e-15)


def test_simulate_explosion():
    with pytest.raises(NonFiniteState):
        simulate(DarParams([3.0], 1.0, [5.0]), np.full(2000, 2.0), burn_in=0)


def test_stationary_second_moment():
    # for p = 1, E y^2 = omega / (1 - phi^2 - alpha) when the right side is positive
    target = 1.0 / (1 - 0.09 - 0.5)
    s = simulate_series(BASE, InnovationSpec.student_t(10), 10**5, seed=8)
    assert np.isfinite(s.values).all()
    assert np.mean(s.values**2) == pytest.approx(target, rel=0.15)


def test_cond_moments_limits():
    s = simulate_series(BASE, InnovationSpec.normal(), 50, seed=1)
    tiny = DarParams([0.0], 2.0, [1e-300])
    m, h = conditional_moments(tiny, s)
    assert np.all(m == 0)
    np.testing.assert_allclose(h, 2.0, rtol=1e-12)
    with pytest.raises(IndexOutOfRange):
        cond_moments(BASE, s, 0)
    with pytest.raises(IndexOutOfRange):
        cond_moments(BASE, s, 51)


@given(dar_params(), st.integers(0, 10**6))
def test_residual_round_trip(params, seed):
    eta = np.random.default_rng(seed).standard_normal(300)
    pre = np.random.default_rng(seed + 1).standard_normal(params.p)
    s = simulate(params, eta, presample=pre, burn_in=0)
    np.testing.assert_allclose(residuals(params, s), eta, atol=1e-12)


@given(dar_params(), st.integers(0, 10**6))
def test_conditional_variance_properties(params, seed):
    s = simulate_series(params, InnovationSpec.normal(), 100, seed=seed, burn_in=50)
    m, h = conditional_moments(params, s)
    assert np.all(h >= params.omega)
    bumped = DarParams(params.phi, params.omega, params.alpha + 0.1)
    assert np.all(conditional_moments(bumped, s)[1] >= h)
    doubled = DarParams(2 * params.phi, params.omega, params.alpha)
    np.testing.assert_allclose(conditional_moments(doubled, s)[0], 2 * m, atol=1e-12)


def test_residuals_identity_limit():
    s = Series([0.5, -1.0, 2.0], [0.7])
    np.testing.assert_allclose(residuals(DarParams([0.0], 1.0, [1e-300]), s), s.values)


def test_residual_variance_base_design():
    s = simulate_series(BASE, InnovationSpec.normal(), 1000, seed=2)
    assert residuals(BASE, s).var() == pytest.approx(1.0, abs=0.15)


def test_for_order_moves_presample():
    s = Series([1.0, 2.0, 3.0, 4.0])
    s2 = s.for_order(2)
    assert s2.presample.tolist() == [1.0, 2.0]
    assert s2.values.tolist() == [3.0, 4.0]


def test_series_csv_round_trip(tmp_path):
    s = simulate_series(DarParams([0.3, 0.1], 1.0, [0.5, 0.2]), InnovationSpec.normal(), 40, 0)
    path = tmp_path / "s.csv"
    write_series(s, path)
    back = read_series(path)
    assert back.values.tobytes() == s.values.tobytes()
    assert back.presample.tobytes() == s.presample.tobytes()
