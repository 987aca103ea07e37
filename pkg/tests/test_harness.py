import numpy as np
import pytest

from darmix.dar import DarParams
from darmix.estimate import FitConfig
from darmix.exceptions import (
    HarnessError,
    InvalidParameter,
    MalformedCsv,
    NonMonotoneDates,
    NonPositivePrice,
)
from darmix.harness import (
    Scenario,
    fit_config_from_mapping,
    load_returns,
    nested_consistency,
    parse_keyed_text,
    run_monte_carlo,
    scenario_from_config,
)
from darmix.innovations import InnovationSpec

BASE = DarParams([0.3], 1.0, [0.5])
FAST = FitConfig(n_starts=2)


def truth_estimator(series):
    return BASE


def broken_estimator(series):
    raise InvalidParameter("always fails")


def write_prices(path, closes, dates=None):
    dates = dates or [f"2020-01-{i + 1:02d}" for i in range(len(closes))]
    path.write_text("date,close\n" + "".join(f"{d},{c}\n" for d, c in zip(dates, closes)))
    return path


def test_oracle_estimator_has_zero_error():
    sc = Scenario(BASE, InnovationSpec.normal(), n=200, replicates=4,
                  estimators=(("oracle", truth_estimator),))
    rep = run_monte_carlo(sc)
    np.testing.assert_array_equal(rep.rmse("oracle"), 0.0)
    np.testing.assert_array_equal(rep.mean_bias("oracle"), 0.0)


@pytest.fixture(scope="module")
def small_report():
    sc = Scenario(BASE, InnovationSpec.student_t(5), n=300, replicates=6,
                  estimators=("nmqmle", "gaussian_qmle", "mle"), fit_config=FAST, base_seed=40)
    return sc, run_monte_carlo(sc)


def test_report_is_deterministic(small_report):
    sc, rep = small_report
    again = run_monte_carlo(sc)
    for name in rep.errors:
        assert rep.errors[name].tobytes() == again.errors[name].tobytes()
    assert rep.to_csv() == again.to_csv()


def test_parallel_equals_serial(small_report):
    sc, rep = small_report
    par = run_monte_carlo(sc, workers=2)
    for name in rep.errors:
        assert rep.errors[name].tobytes() == par.errors[name].tobytes()


def test_rmse_dominates_bias(small_report):
    _, rep = small_report
    for name in rep.errors:
        assert np.all(rep.rmse(name) >= np.abs(rep.mean_bias(name)) - 1e-15)
        assert rep.n_failed(name) == 0


def test_report_formats(small_report):
    _, rep = small_report
    lines = rep.to_csv().splitlines()
    assert lines[0] == "scenario,innovation,estimator,parameter,rmse,mean_bias,n_ok"
    assert len(lines) == 1 + 3 * 3
    md = rep.to_markdown()
    assert "| phi |" in md and "nmqmle RMSE" in md


def test_failures_abort_run():
    sc = Scenario(BASE, InnovationSpec.normal(), n=100, replicates=3,
                  estimators=(("bad", broken_estimator),))
    with pytest.raises(HarnessError):
        run_monte_carlo(sc)


def test_coverage_with_covariance():
    sc = Scenario(BASE, InnovationSpec.normal(), n=500, replicates=5, estimators=("gaussian_qmle",),
                  fit_config=FitConfig(n_starts=2, compute_covariance=True))
    cov = run_monte_carlo(sc).coverage("gaussian_qmle")
    assert cov.shape == (3,) and np.all((cov >= 0) & (cov <= 1))


def test_criterion_policy_records_k():
    sc = Scenario(BASE, InnovationSpec.normal(), n=300, replicates=2, estimators=("nmqmle",),
                  k_policy="bic", k_range=(1, 2), fit_config=FAST)
    rep = run_monte_carlo(sc)
    assert set(rep.chosen_k["nmqmle"]) <= {1, 2}


def test_nested_consistency_shapes():
    out = nested_consistency(BASE, InnovationSpec.normal(), sizes=(200, 400), replicates=2,
                             config=FAST)
    assert set(out) == {200, 400}
    assert out[200].shape == (2, 3)


def test_scenario_validation():
    with pytest.raises(InvalidParameter):
        Scenario(BASE, InnovationSpec.normal(), replicates=0)
    with pytest.raises(InvalidParameter):
        Scenario(BASE, InnovationSpec.normal(), estimators=("lad",))


def test_load_returns_examples(tmp_path):
    flat = load_returns(write_prices(tmp_path / "a.csv", [50.0] * 6), scale=1.0)
    assert np.all(flat.full() == 0)
    two = load_returns(write_prices(tmp_path / "b.csv", [100, 101, 102]), scale=1.0)
    assert two.full()[0] == pytest.approx(np.log(1.01), abs=1e-15)
    assert two.full()[0] == pytest.approx(0.00995033, abs=1e-8)
    path = write_prices(tmp_path / "c.csv", [100, 101.3, 99.8, 100.4, 102.0])
    one = load_returns(path, scale=1.0)
    hundred = load_returns(path, scale=100.0)
    np.testing.assert_array_equal(hundred.full(), 100.0 * one.full())


def test_simple_and_log_agree_to_first_order(tmp_path):
    closes = 100 * np.cumprod(1 + np.random.default_rng(0).uniform(-9e-4, 9e-4, 50))
    path = write_prices(tmp_path / "p.csv", [f"{c:.17g}" for c in closes],
                        [f"2020-{1 + i // 28:02d}-{1 + i % 28:02d}" for i in range(50)])
    log = load_returns(path, "log", 1.0).full()
    simple = load_returns(path, "simple", 1.0).full()
    assert np.all(np.abs(simple - log) < simple**2)


@pytest.mark.parametrize(
    "content, exc",
    [
        ("when,price\n2020-01-01,1\n2020-01-02,2\n", MalformedCsv),
        ("date,close\n2020-01-01,1\n2020-01-02,oops\n", MalformedCsv),
        ("date,close\n2020-01-01,1\n2020-01-02,0\n", NonPositivePrice),
        ("date,close\n2020-01-02,1\n2020-01-01,2\n", NonMonotoneDates),
    ],
)
def test_load_returns_errors(tmp_path, content, exc):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(exc):
        load_returns(path)


def test_keyed_config():
    text = """
    # Table-1 style scenario
    name = t25
    phi = 0.3
    omega = 1
    alpha = 0.5
    innovation = t:2.5
    n = 400
    replicates = 3
    k = icl
    kmax = 4
    starts = 2
    max_iter = 300
    omega_min = 1e-5
    """
    sc = scenario_from_config(text, replicates=7)
    assert sc.name == "t25" and sc.n == 400 and sc.replicates == 7
    assert sc.k_policy == "icl" and sc.k_range == (1, 4)
    assert sc.fit_config.n_starts == 2 and sc.fit_config.max_iter == 300
    assert sc.fit_config.omega_bounds == (1e-5, 1e6)
    assert sc.innovation == InnovationSpec.student_t(2.5)
    assert parse_keyed_text("a = 1 # note\n")["a"] == "1"
    with pytest.raises(InvalidParameter):
        parse_keyed_text("novalue")
    with pytest.raises(InvalidParameter):
        fit_config_from_mapping({"starts": "0"})
