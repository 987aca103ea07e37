import numpy as np
import pytest
from scipy import integrate, stats

from darmix import mixture as mx
from darmix.exceptions import InvalidParameter
from darmix.innovations import (
    InnovationSpec,
    dlog_pdf,
    log_pdf,
    parse_innovation,
    sample_innovations,
    skewed_t_textbook_constants,
    standardization_constants,
)

SCENARIOS = {
    "a": InnovationSpec.student_t(2.5),
    "b": InnovationSpec.student_t(5),
    "c": InnovationSpec.student_t(10),
    "d": InnovationSpec.skew_normal(2),
    "e": InnovationSpec.skew_normal(5),
    "f": InnovationSpec.skew_normal(10),
    "g": InnovationSpec.skewed_t(2.5, -0.9),
    "h": InnovationSpec.skewed_t(4, -0.5),
    "i": InnovationSpec.skewed_t(2.5, 0.3),
}
ALL_SPECS = dict(SCENARIOS, normal=InnovationSpec.normal(),
                 mixture=InnovationSpec.normal_mixture(mx.equally_spaced_mixture(3)))


def _moment(spec, power):
    f = lambda x: x**power * np.exp(log_pdf(spec, x))  # noqa: E731
    # split at the mode region so quad sees the peak
    parts = [(-np.inf, -5), (-5, 0), (0, 5), (5, np.inf)]
    return sum(integrate.quad(f, a, b, limit=400, epsabs=1e-12, epsrel=1e-12)[0] for a, b in parts)


def test_standardization_closed_forms():
    assert standardization_constants(InnovationSpec.normal()) == (0.0, 1.0)
    shift, scale = standardization_constants(InnovationSpec.student_t(5))
    assert shift == 0.0 and scale == pytest.approx(1.290994, abs=1e-6)
    shift, scale = standardization_constants(InnovationSpec.skew_normal(2))
    # oracle: scipy's skew-normal moments for shape 2
    m, v = stats.skewnorm.stats(2, moments="mv")
    assert shift == pytest.approx(float(m), abs=1e-12) and shift == pytest.approx(0.713650, abs=1e-6)
    assert scale == pytest.approx(np.sqrt(float(v)), abs=1e-12)
    assert scale == pytest.approx(0.700503, abs=1e-6)


@pytest.mark.parametrize("name", ["b", "e"])
def test_standardization_against_raw_draws(name):
    spec = SCENARIOS[name]
    x = sample_innovations(spec, 10**7, seed=3)
    assert abs(x.mean()) < 0.003
    assert abs(x.var() - 1) < 0.01


@pytest.mark.parametrize("bad", [lambda: InnovationSpec.student_t(2.0),
                                 lambda: InnovationSpec.skewed_t(2.0, 0.1),
                                 lambda: InnovationSpec.skewed_t(3.0, 1.0)])
def test_invalid_laws(bad):
    with pytest.raises(InvalidParameter):
        bad()


def test_standard_normal_log_pdf():
    assert log_pdf(InnovationSpec.normal(), 0.0) == pytest.approx(-0.918939, abs=1e-6)


@pytest.mark.parametrize("name", list(ALL_SPECS))
def test_quadrature_moments(name):
    spec = ALL_SPECS[name]
    assert _moment(spec, 0) == pytest.approx(1.0, abs=1e-5)
    assert _moment(spec, 1) == pytest.approx(0.0, abs=1e-4)
    assert _moment(spec, 2) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("name", list(ALL_SPECS))
def test_density_on_bounded_window(name):
    spec = ALL_SPECS[name]
    total = integrate.quad(lambda x: np.exp(log_pdf(spec, x)), -15, 15, limit=400)[0]
    # t_2.5, t_4 and the skewed t laws put 6e-5..3e-4 of mass beyond |x| = 15
    heavy = name in ("a", "g", "h", "i")
    assert total == pytest.approx(1.0, abs=5e-4 if heavy else 1e-5)


def test_student_t_matches_scipy():
    spec = InnovationSpec.student_t(5)
    x = np.linspace(-6, 6, 25)
    s = np.sqrt(5 / 3)
    np.testing.assert_allclose(log_pdf(spec, x), stats.t.logpdf(x * s, 5) + np.log(s), rtol=1e-12)


def test_skew_normal_matches_scipy():
    spec = InnovationSpec.skew_normal(5)
    shift, scale = standardization_constants(spec)
    x = np.linspace(-4, 6, 25)
    np.testing.assert_allclose(
        log_pdf(spec, x), stats.skewnorm.logpdf(shift + scale * x, 5) + np.log(scale), rtol=1e-10
    )


@pytest.mark.parametrize("name", list(ALL_SPECS))
def test_dlog_pdf_matches_differences(name):
    spec = ALL_SPECS[name]
    x = np.array([-2.3, -0.7, 0.4, 1.9])
    h = 1e-6
    fd = (log_pdf(spec, x + h) - log_pdf(spec, x - h)) / (2 * h)
    np.testing.assert_allclose(dlog_pdf(spec, x), fd, rtol=1e-6, atol=1e-7)


def _grid_cdf(spec):
    grid = np.linspace(-80, 80, 400001)
    dens = np.exp(log_pdf(spec, grid))
    left = integrate.quad(lambda x: np.exp(log_pdf(spec, x)), -np.inf, -80)[0]
    cdf = left + integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    return grid, cdf


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_sampler_matches_density(name):
    spec = SCENARIOS[name]
    x = np.sort(sample_innovations(spec, 10**6, seed=11))
    grid, cdf = _grid_cdf(spec)
    f = np.interp(x, grid, cdf)
    n = x.size
    ks = max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n))
    assert ks < 0.005


def test_skew_normal_zero_is_normal():
    x = sample_innovations(InnovationSpec.skew_normal(0), 10**6, seed=5)
    assert stats.kstest(x, "norm").statistic < 0.002


def test_skew_normal_moments():
    x = sample_innovations(InnovationSpec.skew_normal(10), 10**6, seed=2)
    assert abs(x.mean()) < 0.005
    assert abs(x.var() - 1) < 0.01


def test_heavy_t_truncated_second_moment():
    # the fourth moment is infinite, so check a truncated second moment whose
    # Monte Carlo error is finite against its quadrature value
    spec = InnovationSpec.student_t(2.5)
    x = sample_innovations(spec, 10**6, seed=0)
    c = 10.0
    oracle = integrate.quad(lambda u: u * u * np.exp(log_pdf(spec, u)), -c, c, limit=200)[0]
    w = np.where(np.abs(x) < c, x * x, 0.0)
    assert abs(w.mean() - oracle) < 5 * w.std() / np.sqrt(x.size)


@pytest.mark.parametrize("name", list(ALL_SPECS))
def test_seed_determinism(name):
    a = sample_innovations(ALL_SPECS[name], 500, seed=9)
    b = sample_innovations(ALL_SPECS[name], 500, seed=9)
    assert a.tobytes() == b.tobytes()


def test_skewed_t_textbook_form_agrees():
    q, lam = 4.0, -0.5
    m, nu = skewed_t_textbook_constants(q, lam)
    from scipy.special import gammaln

    x = np.linspace(-4, 4, 17)
    u = x + m
    a = 1 + lam * np.sign(u)
    textbook = (gammaln((1 + q) / 2) - np.log(nu) - 0.5 * np.log(np.pi * q / 2) - gammaln(q / 2)
                - (1 + q) / 2 * np.log1p(u**2 / ((q / 2) * nu**2 * a**2)))
    np.testing.assert_allclose(log_pdf(InnovationSpec.skewed_t(q, lam), x), textbook, rtol=1e-10)


@pytest.mark.parametrize(
    "text, law",
    [("normal", "standard_normal"), ("t:2.5", "student_t"), ("skewnormal:5", "skew_normal"),
     ("skewt:2.5,-0.9", "skewed_t")],
)
def test_parse(text, law):
    spec = parse_innovation(text)
    assert spec.law == law
    assert parse_innovation(str(spec)) == spec


def test_parse_mixture_file(tmp_path):
    path = tmp_path / "m.txt"
    mx.write_mixture(mx.equally_spaced_mixture(2), path)
    spec = parse_innovation(f"mixture:{path}")
    assert spec.law == "normal_mixture" and spec.mixture.k == 2


def test_parse_rejects_garbage():
    with pytest.raises(InvalidParameter):
        parse_innovation("cauchy")
