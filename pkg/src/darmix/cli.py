"""Command-line entry point: ``darmix {simulate,fit,select-k,backtest,mc}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from darmix.backtest import VarConfig, rolling_backtest_levels
from darmix.dar import DarParams, read_series, simulate_series, write_series
from darmix.estimate import fit_gaussian_qmle, fit_mle, fit_nmqmle
from darmix.exceptions import DarmixError
from darmix.harness import (
    fit_config_from_mapping,
    load_returns,
    parse_keyed_text,
    run_monte_carlo,
    scenario_from_config,
)
from darmix.innovations import parse_innovation
from darmix.select import select_k


def _parse_params(text: str) -> DarParams:
    """``phi=0.3,omega=1,alpha=0.5`` or, for p > 1, ``phi=0.3;0.1,omega=1,alpha=0.5;0.2``."""
    fields = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        fields[key.strip()] = [float(v) for v in val.split(";")]
    try:
        return DarParams(fields["phi"], fields["omega"][0], fields["alpha"])
    except KeyError as exc:
        raise argparse.ArgumentTypeError(f"--params lacks {exc}") from exc


def _fit_config(args):
    mapping = parse_keyed_text(Path(args.config).read_text()) if args.config else {}
    cfg = fit_config_from_mapping(mapping)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.starts is not None:
        overrides["n_starts"] = args.starts
    if getattr(args, "covariance", False):
        overrides["compute_covariance"] = True
    return replace(cfg, **overrides)


def _load(args):
    with open(args.data) as fh:
        header = fh.readline().strip().lower().replace(" ", "")
    if args.prices or header.startswith("date,close"):
        return load_returns(args.data, args.return_kind, args.scale, p=args.order)
    return read_series(args.data)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    params = _parse_params(args.params)
    spec = parse_innovation(args.innovation)
    series = simulate_series(params, spec, args.n, args.seed, burn_in=args.burn_in)
    write_series(series, args.out)
    print(f"wrote {series.n} observations to {args.out}")


def cmd_fit(args):
    series = _load(args)
    cfg = _fit_config(args)
    if args.method == "gaussian_qmle":
        fit = fit_gaussian_qmle(series, cfg, p=args.order)
    elif args.method == "mle":
        fit = fit_mle(series, parse_innovation(args.innovation), cfg, p=args.order)
    elif args.criterion:
        table = select_k(series, (args.kmin, args.kmax), replace(cfg, compute_covariance=False),
                         p=args.order, slope_methods=args.criterion in ("ddse", "djump"))
        k = table.chosen[args.criterion]
        if k is None:
            raise DarmixError(f"criterion {args.criterion} selected no order")
        fit = fit_nmqmle(series, k, replace(cfg, init=table.fits[k].theta), p=args.order)
    else:
        fit = fit_nmqmle(series, args.k, cfg, p=args.order)
    _emit(fit.to_text(), args.out)


def cmd_select_k(args):
    series = _load(args)
    table = select_k(series, (args.kmin, args.kmax), _fit_config(args), p=args.order)
    _emit(table.to_csv(), args.out)
    sys.stdout.write(table.summary())


def cmd_backtest(args):
    series = _load(args)
    n = series.n
    test_start = args.test_start if args.test_start else n - args.test_size + 1
    cfg = VarConfig(
        p_level=args.p_levels[0],
        test_start=test_start,
        refit_every=args.refit_every,
        estimator=args.estimator,
        k=args.k,
        p=args.order,
        fit_config=_fit_config(args),
    )
    reports = rolling_backtest_levels(series, cfg, args.p_levels)
    print(f"{'p':>7} {'N':>6} {'N*':>5} {'p_hat':>8} {'LR_POF':>9} {'LR_CCI':>9} {'LR_CC':>9}"
          f"  reject@1%  reject@2.5%  reject@5%")
    for lvl, rep in reports.items():
        rej = "  ".join(f"{'yes' if rep.reject_at[a] else 'no':>9}" for a in (0.01, 0.025, 0.05))
        print(f"{lvl:7.3f} {rep.n:6d} {rep.n_star:5d} {rep.p_hat:8.4f} {rep.lr_pof:9.4f} "
              f"{rep.lr_cci:9.4f} {rep.lr_cc:9.4f}  {rej}")
    if args.out:
        out = Path(args.out)
        for lvl, rep in reports.items():
            path = out if len(reports) == 1 else out.with_name(f"{out.stem}_p{lvl:g}{out.suffix}")
            path.write_text(rep.to_csv())
            path.with_suffix(".summary.txt").write_text(rep.summary())


def cmd_mc(args):
    scenario = scenario_from_config(
        Path(args.scenario).read_text(), replicates=args.reps, base_seed=args.seed
    )
    report = run_monte_carlo(scenario, workers=args.workers)
    _emit(report.to_csv(), args.out)
    md = report.to_markdown()
    if args.out:
        Path(args.out).with_suffix(".md").write_text(md)
    else:
        sys.stdout.write("\n" + md)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darmix", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--data", required=True, help="t,value series CSV or date,close price CSV")
        p.add_argument("--prices", action="store_true", help="treat --data as date,close prices")
        p.add_argument("--return-kind", choices=("log", "simple"), default="log")
        p.add_argument("--scale", type=float, default=100.0)
        p.add_argument("--order", type=int, default=1, help="autoregressive order p")
        p.add_argument("--config", help="keyed-text optimizer settings")
        p.add_argument("--seed", type=int)
        p.add_argument("--starts", type=int)
        p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulate a DAR(p) path")
    p.add_argument("--params", required=True, help="e.g. phi=0.3,omega=1,alpha=0.5")
    p.add_argument("--innovation", default="normal")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model")
    data_args(p)
    p.add_argument("--method", choices=("nmqmle", "gaussian_qmle", "mle"), default="nmqmle")
    p.add_argument("--innovation", default="normal", help="known law for --method mle")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--criterion", choices=("aic", "bic", "icl", "ddse", "djump"))
    p.add_argument("--kmin", type=int, default=1)
    p.add_argument("--kmax", type=int, default=15)
    p.add_argument("--covariance", action="store_true", help="report sandwich standard errors")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select-k", help="tabulate AIC/BIC/ICL over mixture orders")
    data_args(p)
    p.add_argument("--kmin", type=int, default=1)
    p.add_argument("--kmax", type=int, default=15)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("backtest", help="expanding-window VaR backtest")
    data_args(p)
    p.add_argument("--p", "--p-level", dest="p_levels", type=float, nargs="+",
                   default=[0.01, 0.025, 0.05])
    p.add_argument("--refit-every", type=int, default=1)
    p.add_argument("--estimator", choices=("nmqmle", "gaussian_qmle"), default="nmqmle")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--test-start", type=int)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("mc", help="Monte Carlo RMSE study from a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (DarmixError, OSError) as exc:
        print(f"darmix: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
