"""
Monte Carlo replication driver, return ingestion and keyed-text configuration.

Replicate ``r`` of a scenario simulates with seed ``base_seed + r`` and fits
every estimator with the same seed, so a report depends only on the
scenario. Replicates may run in a process pool; results are collected in
replicate order, which keeps parallel and serial runs identical.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path

import numpy as np

from darmix.dar import DarParams, Series, simulate_series
from darmix.estimate import (
    FitConfig,
    fit_gaussian_qmle,
    fit_mle,
    fit_nmqmle,
)
from darmix.exceptions import (
    DarmixError,
    HarnessError,
    InvalidParameter,
    MalformedCsv,
    NonMonotoneDates,
    NonPositivePrice,
)
from darmix.innovations import InnovationSpec, parse_innovation
from darmix.select import select_k

__all__ = [
    "Scenario",
    "McReport",
    "run_monte_carlo",
    "nested_consistency",
    "load_returns",
    "load_prices",
    "parse_keyed_text",
    "scenario_from_config",
    "fit_config_from_mapping",
    "FAILURE_LIMIT",
]

logger = logging.getLogger(__name__)

# a scenario with a larger share of failed replicates aborts the run
FAILURE_LIMIT = 0.05
BUILTIN_ESTIMATORS = ("nmqmle", "gaussian_qmle", "mle")


@dataclass(frozen=True)
class Scenario:
    """One simulation design.

    ``k_policy`` is either a fixed mixture order or the name of a criterion
    (``aic``, ``bic``, ``icl``, ``ddse``, ``djump``) used to pick the order
    over ``k_range`` in every replicate. ``estimators`` holds built-in names
    or ``(name, callable)`` pairs where the callable maps a ``Series`` to
    ``DarParams``.
    """

    dar_params: DarParams
    innovation: InnovationSpec
    n: int = 1000
    replicates: int = 200
    estimators: tuple = ("nmqmle", "gaussian_qmle")
    k_policy: int | str = 2
    k_range: tuple[int, int] = (1, 15)
    base_seed: int = 0
    fit_config: FitConfig = field(default_factory=FitConfig)
    name: str = "scenario"
    burn_in: int = 500

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidParameter("replicates must be >= 1")
        if not self.estimators:
            raise InvalidParameter("at least one estimator is required")
        for est in self.estimators:
            if isinstance(est, str) and est not in BUILTIN_ESTIMATORS:
                raise InvalidParameter(f"unknown estimator {est!r}")
        if self.n < 2 * self.dar_params.p + 2:
            raise InvalidParameter("n too small for the model order")

    def estimator_names(self) -> list[str]:
        return [e if isinstance(e, str) else e[0] for e in self.estimators]


@dataclass
class McReport:
    """Per-replicate estimation errors and their summaries.

    ``errors[name]`` is a ``(replicates, 2p + 1)`` array of
    ``theta1_hat - theta1_0`` with NaN rows for failed replicates.
    """

    scenario: Scenario
    param_names: list[str]
    errors: dict[str, np.ndarray]
    std_errors: dict[str, np.ndarray]
    converged: dict[str, np.ndarray]
    chosen_k: dict[str, np.ndarray]
    failures: dict[str, list[str]]

    def ok(self, name: str) -> np.ndarray:
        return ~np.isnan(self.errors[name]).any(axis=1)

    def rmse(self, name: str) -> np.ndarray:
        e = self.errors[name][self.ok(name)]
        return np.sqrt(np.mean(e**2, axis=0))

    def mean_bias(self, name: str) -> np.ndarray:
        return np.mean(self.errors[name][self.ok(name)], axis=0)

    def n_failed(self, name: str) -> int:
        return int((~self.ok(name)).sum())

    def coverage(self, name: str, z: float = 1.959963984540054) -> np.ndarray:
        """Share of replicates whose normal interval ``theta_hat +- z se`` covers the truth."""
        e = self.errors[name]
        se = self.std_errors[name]
        keep = self.ok(name) & ~np.isnan(se).any(axis=1)
        return np.mean(np.abs(e[keep]) <= z * se[keep], axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario", "innovation", "estimator", "parameter", "rmse", "mean_bias", "n_ok"])
        for name in self.errors:
            rmse, bias = self.rmse(name), self.mean_bias(name)
            n_ok = int(self.ok(name).sum())
            for i, pname in enumerate(self.param_names):
                writer.writerow(
                    [self.scenario.name, str(self.scenario.innovation), name, pname,
                     f"{rmse[i]:.6g}", f"{bias[i]:.6g}", n_ok]
                )
        return buf.getvalue()

    def to_markdown(self) -> str:
        names = list(self.errors)
        lines = [
            f"### {self.scenario.name}: innovation {self.scenario.innovation}, "
            f"n = {self.scenario.n}, {self.scenario.replicates} replicates",
            "",
            "| parameter | " + " | ".join(f"{n} RMSE | {n} bias" for n in names) + " |",
            "|---" * (1 + 2 * len(names)) + "|",
        ]
        for i, pname in enumerate(self.param_names):
            cells = []
            for n in names:
                cells += [f"{self.rmse(n)[i]:.4f}", f"{self.mean_bias(n)[i]:.4f}"]
            lines.append(f"| {pname} | " + " | ".join(cells) + " |")
        lines.append("")
        for n in names:
            lines.append(f"- {n}: {self.n_failed(n)} failed replicates")
            ks = self.chosen_k[n]
            if np.any(ks > 0):
                vals, counts = np.unique(ks[ks > 0], return_counts=True)
                freq = ", ".join(f"K={v}: {c}" for v, c in zip(vals, counts))
                lines.append(f"  chosen orders: {freq}")
        return "\n".join(lines) + "\n"


def _fit_one(name, est, series: Series, scenario: Scenario, config: FitConfig):
    """Return ``(theta1_hat, std_errors or None, converged, chosen_k)``."""
    p = scenario.dar_params.p
    if not isinstance(est, str):
        dar = est[1](series)
        return dar.to_vector(), None, True, 0
    if est == "gaussian_qmle":
        fit = fit_gaussian_qmle(series, config, p=p)
        k = 1
    elif est == "mle":
        fit = fit_mle(series, scenario.innovation, config, p=p)
        k = 0
    else:
        k = scenario.k_policy
        if isinstance(k, str):
            table = select_k(
                series, scenario.k_range, replace(config, compute_covariance=False), p=p,
                slope_methods=k in ("ddse", "djump"),
            )
            k = table.chosen[k]
            if k is None:
                raise HarnessError(f"criterion {scenario.k_policy} selected no order")
            fit = table.fits[k]
            if config.compute_covariance:
                fit = fit_nmqmle(series, k, replace(config, init=fit.theta), p=p)
        else:
            fit = fit_nmqmle(series, k, config, p=p)
    d = 2 * p + 1
    se = None if fit.std_errors is None else fit.std_errors[:d]
    return fit.params_vector()[:d], se, fit.converged, k


def _replicate(args):
    scenario, r = args
    seed = scenario.base_seed + r
    truth = scenario.dar_params.to_vector()
    d = truth.size
    out = {}
    try:
        series = simulate_series(
            scenario.dar_params, scenario.innovation, scenario.n, seed, scenario.burn_in
        )
    except DarmixError as exc:
        msg = f"replicate {r}: simulation failed: {exc}"
        return {n: (np.full(d, np.nan), np.full(d, np.nan), False, 0, msg) for n in scenario.estimator_names()}
    config = replace(scenario.fit_config, seed=seed)
    for est in scenario.estimators:
        name = est if isinstance(est, str) else est[0]
        try:
            theta, se, conv, k = _fit_one(name, est, series, scenario, config)
            se = np.full(d, np.nan) if se is None else se
            out[name] = (theta - truth, se, conv, k, None)
        except (DarmixError, np.linalg.LinAlgError) as exc:
            out[name] = (np.full(d, np.nan), np.full(d, np.nan), False, 0, f"replicate {r}: {exc}")
    return out


def run_monte_carlo(scenario: Scenario, workers: int | None = None) -> McReport:
    """Simulate and fit every replicate of ``scenario``.

    Parameters
    ----------
    scenario : Scenario
    workers : int, optional
        Number of worker processes; ``None`` or 1 runs serially.

    Raises
    ------
    HarnessError
        If more than 5% of the replicates fail for any estimator. The
        partial report is attached as ``exc.report``.
    """
    jobs = [(scenario, r) for r in range(scenario.replicates)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(job) for job in jobs]
    names = scenario.estimator_names()
    report = McReport(
        scenario=scenario,
        param_names=scenario.dar_params.names(),
        errors={n: np.array([res[n][0] for res in results]) for n in names},
        std_errors={n: np.array([res[n][1] for res in results]) for n in names},
        converged={n: np.array([res[n][2] for res in results]) for n in names},
        chosen_k={n: np.array([res[n][3] for res in results], dtype=int) for n in names},
        failures={n: [res[n][4] for res in results if res[n][4]] for n in names},
    )
    for n in names:
        for msg in report.failures[n]:
            logger.warning("%s/%s: %s", scenario.name, n, msg)
        if report.n_failed(n) > FAILURE_LIMIT * scenario.replicates:
            raise HarnessError(
                f"{scenario.name}: {report.n_failed(n)} of {scenario.replicates} replicates "
                f"failed for {n}",
                report,
            )
    return report


def _nested_replicate(args):
    dar, spec, sizes, k, config, seed, burn_in = args
    series = simulate_series(dar, spec, max(sizes), seed, burn_in)
    truth = dar.to_vector()
    out = []
    for n in sizes:
        try:
            fit = fit_nmqmle(series.head(n), k, replace(config, seed=seed), p=dar.p)
            out.append(fit.params_vector()[: truth.size] - truth)
        except DarmixError:
            out.append(np.full(truth.size, np.nan))
    return out


def nested_consistency(
    dar_params: DarParams,
    innovation: InnovationSpec,
    sizes=(500, 1000, 2000, 4000),
    replicates: int = 100,
    k: int = 2,
    base_seed: int = 0,
    config: FitConfig | None = None,
    workers: int | None = None,
    burn_in: int = 500,
) -> dict[int, np.ndarray]:
    """Errors of the mixture QMLE on nested prefixes of one path per replicate.

    Returns a mapping ``n -> (replicates, 2p + 1)`` error array.
    """
    config = config or FitConfig()
    sizes = tuple(sorted(sizes))
    jobs = [
        (dar_params, innovation, sizes, k, config, base_seed + r, burn_in)
        for r in range(replicates)
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_nested_replicate, jobs))
    else:
        results = [_nested_replicate(job) for job in jobs]
    return {n: np.array([res[i] for res in results]) for i, n in enumerate(sizes)}


# ----------------------------------------------------------------------------
# Data ingestion
# ----------------------------------------------------------------------------


def load_prices(path) -> tuple[list[date], np.ndarray]:
    """Read a ``date,close`` CSV with ISO dates."""
    dates, closes = [], []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "close"]:
            raise MalformedCsv(f"{path}: expected header 'date,close'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                d = date.fromisoformat(row[0].strip())
                c = float(row[1])
            except (ValueError, IndexError) as exc:
                raise MalformedCsv(f"{path}:{lineno}: {exc}") from exc
            if not c > 0:
                raise NonPositivePrice(f"{path}:{lineno}: close {c} is not positive")
            if dates and d <= dates[-1]:
                raise NonMonotoneDates(f"{path}:{lineno}: {d} does not follow {dates[-1]}")
            dates.append(d)
            closes.append(c)
    if len(closes) < 2:
        raise MalformedCsv(f"{path}: need at least two prices")
    return dates, np.asarray(closes)


def load_returns(path, return_kind: str = "log", scale: float = 100.0, p: int = 1) -> Series:
    """Returns from a price file; the first ``p`` returns become the presample."""
    _, closes = load_prices(path)
    if return_kind == "log":
        r = np.log(closes[1:] / closes[:-1])
    elif return_kind == "simple":
        r = closes[1:] / closes[:-1] - 1.0
    else:
        raise InvalidParameter(f"return_kind must be 'log' or 'simple', got {return_kind!r}")
    return Series(scale * r).for_order(p)


# ----------------------------------------------------------------------------
# Keyed-text configuration
# ----------------------------------------------------------------------------


def parse_keyed_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameter(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip().lower().replace("-", "_")] = value.strip()
    return out


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def fit_config_from_mapping(cfg: dict[str, str], base: FitConfig | None = None) -> FitConfig:
    """Build a :class:`FitConfig` from keyed-text entries, keeping unspecified defaults."""
    base = base or FitConfig()
    kwargs = {}
    ints = {"starts": "n_starts", "n_starts": "n_starts", "max_iter": "max_iter",
            "seed": "seed", "em_iter": "em_iter"}
    floats = {"gtol": "gtol", "xtol": "xtol", "phi_bound": "phi_bound",
              "scale_floor": "scale_floor", "jitter": "jitter"}
    for key, attr in ints.items():
        if key in cfg:
            kwargs[attr] = int(cfg[key])
    for key, attr in floats.items():
        if key in cfg:
            kwargs[attr] = float(cfg[key])
    if "omega_min" in cfg or "omega_max" in cfg:
        kwargs["omega_bounds"] = (
            float(cfg.get("omega_min", base.omega_bounds[0])),
            float(cfg.get("omega_max", base.omega_bounds[1])),
        )
    if "alpha_min" in cfg or "alpha_max" in cfg:
        kwargs["alpha_bounds"] = (
            float(cfg.get("alpha_min", base.alpha_bounds[0])),
            float(cfg.get("alpha_max", base.alpha_bounds[1])),
        )
    if "covariance" in cfg:
        kwargs["compute_covariance"] = cfg["covariance"].lower() in ("1", "true", "yes")
    try:
        return replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidParameter(f"bad fit configuration: {exc}") from exc


def scenario_from_config(text: str, **overrides) -> Scenario:
    """Build a :class:`Scenario` from keyed text.

    Recognized keys: ``name``, ``phi``, ``omega``, ``alpha`` (comma lists for
    p > 1), ``innovation``, ``n``, ``replicates``, ``estimators``, ``k``
    (an integer or a criterion name), ``kmin``, ``kmax``, ``seed``, plus
    the optimizer keys of :func:`fit_config_from_mapping`.
    """
    cfg = parse_keyed_text(text)
    try:
        dar = DarParams(_floats(cfg["phi"]), float(cfg["omega"]), _floats(cfg["alpha"]))
    except KeyError as exc:
        raise InvalidParameter(f"scenario config lacks key {exc}") from exc
    k_text = cfg.get("k", "2").strip().lower()
    k_policy: int | str = int(k_text) if k_text.isdigit() else k_text
    fit_cfg = fit_config_from_mapping({k: v for k, v in cfg.items() if k != "seed"})
    kwargs = dict(
        dar_params=dar,
        innovation=parse_innovation(cfg.get("innovation", "normal")),
        n=int(cfg.get("n", 1000)),
        replicates=int(cfg.get("replicates", 200)),
        estimators=tuple(e.strip() for e in cfg.get("estimators", "nmqmle,gaussian_qmle").split(",")),
        k_policy=k_policy,
        k_range=(int(cfg.get("kmin", 1)), int(cfg.get("kmax", 15))),
        base_seed=int(cfg.get("seed", 0)),
        fit_config=fit_cfg,
        name=cfg.get("name", "scenario"),
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return Scenario(**kwargs)

