"""Command-line interface.

Subcommands: price, iv, skew, asymptotics, experiment, fbm-check.
A TOML/JSON config file can supply any flag's value (--config); explicit
command-line flags win over config entries.
"""

from __future__ import annotations

import argparse
import math
import sys

from .asymptotics import atm_skew_closed, atm_skew_general
from .black import IvBoundError
from .lab import (
    MODEL_FAMILIES,
    ExperimentPlan,
    build_model,
    estimate_atm_iv,
    estimate_skew_fd,
    load_plan,
    run_experiment,
    write_csv,
)
from .mc import ConfigurationError, McConfig, price_asian
from .models import LocalVol, MarketSetup, skew_kernel, spot_vol

_ESTIMATORS = ("plain", "antithetic", "control_variate", "cv_antithetic")


def _fmt(x: float) -> str:
    return format(x, ".10g")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="const", choices=MODEL_FAMILIES,
                   help="model family")
    p.add_argument("--sigma0", type=float, default=0.3, help="spot volatility")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="sabr vol-of-vol")
    p.add_argument("--vov", type=float, default=0.5,
                   help="fbergomi vol-of-vol")
    p.add_argument("--hurst", type=float, default=0.4,
                   help="fbergomi Hurst exponent")
    p.add_argument("--cev-nu", dest="cev_nu", type=float, default=0.3,
                   help="CEV scale nu")
    p.add_argument("--cev-beta", dest="cev_beta", type=float, default=0.5,
                   help="CEV elasticity beta")


def _add_market_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--s0", type=float, default=100.0, help="spot price")
    p.add_argument("--strike", type=float, default=None,
                   help="strike (default: s0)")
    p.add_argument("--maturity", type=float, default=1.0,
                   help="maturity in years")
    p.add_argument("--rho", type=float, default=0.0,
                   help="spot/vol correlation")


def _add_mc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--paths", type=int, default=100_000,
                   help="number of MC samples")
    p.add_argument("--steps", type=int, default=100,
                   help="time steps per path")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--estimator", default="plain", choices=_ESTIMATORS)
    p.add_argument("--cv-mode", dest="cv_mode", default="discrete",
                   choices=("continuous", "discrete"),
                   help="control-variate reference formula")


def _model_from(args: argparse.Namespace):
    return build_model(args.model, {
        "sigma0": args.sigma0,
        "alpha": args.alpha,
        "vov": args.vov,
        "hurst": args.hurst,
        "cev_nu": args.cev_nu,
        "cev_beta": args.cev_beta,
    })


def _market_from(args: argparse.Namespace) -> MarketSetup:
    strike = args.s0 if args.strike is None else args.strike
    return MarketSetup(s0=args.s0, strike=strike, maturity=args.maturity,
                       rho=args.rho)


def _mc_from(args: argparse.Namespace) -> McConfig:
    return McConfig(n_paths=args.paths, steps=args.steps, seed=args.seed,
                    estimator=args.estimator, cv_mode=args.cv_mode)


def _cmd_price(args: argparse.Namespace) -> int:
    model = _model_from(args)
    market = _market_from(args)
    est = price_asian(model, market, _mc_from(args))
    print(f"mean {_fmt(est.mean)}")
    print(f"stderr {_fmt(est.stderr)}")
    print(f"ci95 [{_fmt(est.ci95[0])}, {_fmt(est.ci95[1])}]")
    print(f"n_effective {est.n_effective}")
    print(f"estimator {est.estimator}")
    if args.out:
        write_csv(args.out,
                  ("model", "s0", "strike", "maturity", "rho", "mean",
                   "stderr", "ci_low", "ci_high", "n_effective", "estimator"),
                  [(args.model, market.s0, market.strike, market.maturity,
                    market.rho, est.mean, est.stderr, est.ci95[0],
                    est.ci95[1], est.n_effective, est.estimator)])
        print(f"wrote {args.out}")
    return 0


def _cmd_iv(args: argparse.Namespace) -> int:
    model = _model_from(args)
    market = _market_from(args)
    point = estimate_atm_iv(model, market, _mc_from(args))
    print(f"iv {_fmt(point.iv)}")
    print(f"iv_stderr {_fmt(point.iv_stderr)}")
    if args.out:
        write_csv(args.out,
                  ("model", "s0", "maturity", "rho", "log_strike", "iv",
                   "iv_stderr"),
                  [(args.model, market.s0, market.maturity, market.rho,
                    point.log_strike, point.iv, point.iv_stderr)])
        print(f"wrote {args.out}")
    return 0


def _cmd_skew(args: argparse.Namespace) -> int:
    model = _model_from(args)
    market = _market_from(args)
    est = estimate_skew_fd(model, market, _mc_from(args), dk=args.dk)
    print(f"skew {_fmt(est.slope)}")
    print(f"skew_stderr {_fmt(est.stderr)}")
    print(f"iv_lower {_fmt(est.lower.iv)}")
    print(f"iv_upper {_fmt(est.upper.iv)}")
    if args.out:
        write_csv(args.out,
                  ("model", "s0", "maturity", "rho", "dk", "skew",
                   "skew_stderr", "iv_lower", "iv_upper"),
                  [(args.model, market.s0, market.maturity, market.rho,
                    args.dk, est.slope, est.stderr, est.lower.iv,
                    est.upper.iv)])
        print(f"wrote {args.out}")
    return 0


def _cmd_asymptotics(args: argparse.Namespace) -> int:
    model = _model_from(args)
    market = _market_from(args)
    quote = atm_skew_closed(model, market)
    print(f"level {_fmt(quote.level)}")
    print(f"skew {_fmt(quote.skew)}")
    print(f"scaling_exponent {_fmt(quote.scaling_exponent)}")
    print(f"scaled {str(quote.scaled).lower()}")
    rows = [("closed", quote.level, quote.skew, quote.scaling_exponent,
             quote.scaled)]
    if args.general:
        sigma0 = spot_vol(model, market)
        rho = 1.0 if isinstance(model, LocalVol) else market.rho
        kernel = skew_kernel(model, market)
        for mode in ("finite", "limit"):
            q = atm_skew_general(sigma0, rho, kernel, market.maturity, mode=mode)
            print(f"general_{mode}_skew {_fmt(q.skew)}")
            rows.append((f"general_{mode}", q.level, q.skew,
                         q.scaling_exponent, q.scaled))
    if args.out:
        write_csv(args.out,
                  ("source", "level", "skew", "scaling_exponent", "scaled"),
                  rows)
        print(f"wrote {args.out}")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    plan = load_plan(args.plan)
    if args.out:
        plan = ExperimentPlan(kind=plan.kind, model=plan.model,
                              market=plan.market, mc=plan.mc, out=args.out,
                              grid=plan.grid)
    path = run_experiment(plan)
    print(f"wrote {path}")
    return 0


def _cmd_fbm_check(args: argparse.Namespace) -> int:
    plan = ExperimentPlan(
        kind="fbm_check",
        model={},
        market={"maturity": args.maturity},
        mc=McConfig(n_paths=2, steps=1, seed=args.seed),
        out=args.out,
        grid={"steps": args.steps, "hurst": args.hurst,
              "n_samples": args.samples},
    )
    path = run_experiment(plan)
    print(f"wrote {path}")
    return 0


def _read_config(argv):
    """Extract --config from argv and load its entries as flag defaults.

    Keys are flag names without the leading dashes (hyphens map to
    underscores, e.g. cv-mode -> cv_mode).  Explicit command-line flags
    always win because the entries only replace parser defaults.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}, argv
    if known.config.endswith(".json"):
        import json

        with open(known.config, encoding="utf-8") as f:
            raw = json.load(f)
    else:
        try:
            import tomllib as toml_reader
        except ImportError:
            import tomli as toml_reader
        with open(known.config, "rb") as f:
            raw = toml_reader.load(f)
    cleaned = [a for a in argv if a != "--config" and a != known.config]
    return {k.replace("-", "_"): v for k, v in raw.items()}, cleaned


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asianvol",
        description="Arithmetic Asian option pricing and short-maturity "
                    "implied-vol asymptotics under stochastic volatility.",
    )
    parser.add_argument("--config", default=None,
                        help="TOML/JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p_price = sub.add_parser("price", help="Monte Carlo Asian call price")
    p_iv = sub.add_parser("iv", help="ATM implied vol from MC")
    p_skew = sub.add_parser("skew", help="finite-difference ATM skew from MC")
    p_asym = sub.add_parser("asymptotics", help="closed-form level and skew")
    for p in (p_price, p_iv, p_skew):
        _add_model_flags(p)
        _add_market_flags(p)
        _add_mc_flags(p)
        p.add_argument("--out", default=None, help="optional CSV output path")
    p_skew.add_argument("--dk", type=float, default=0.001,
                        help="relative strike bump")
    _add_model_flags(p_asym)
    _add_market_flags(p_asym)
    p_asym.add_argument("--general", action="store_true",
                        help="also run the generic kernel quadrature")
    p_asym.add_argument("--out", default=None, help="optional CSV output path")

    p_exp = sub.add_parser("experiment", help="run an experiment plan")
    p_exp.add_argument("plan", help="path to a plan .toml/.json")
    p_exp.add_argument("--out", default=None, help="override the plan's output path")

    p_fbm = sub.add_parser("fbm-check",
                           help="joint Gaussian sampler covariance check")
    p_fbm.add_argument("--steps", type=int, default=10)
    p_fbm.add_argument("--hurst", type=float, nargs="+", default=[0.4, 0.7])
    p_fbm.add_argument("--samples", type=int, default=100_000)
    p_fbm.add_argument("--maturity", type=float, default=1.0)
    p_fbm.add_argument("--seed", type=int, default=0)
    p_fbm.add_argument("--out", required=True, help="CSV output path")

    p_price.set_defaults(func=_cmd_price)
    p_iv.set_defaults(func=_cmd_iv)
    p_skew.set_defaults(func=_cmd_skew)
    p_asym.set_defaults(func=_cmd_asymptotics)
    p_exp.set_defaults(func=_cmd_experiment)
    p_fbm.set_defaults(func=_cmd_fbm_check)

    if defaults:
        # a subparser re-applies its own defaults over anything set on the
        # parent namespace, so the config entries must be pushed onto every
        # subparser that actually defines the flag
        for p in (parser, p_price, p_iv, p_skew, p_asym, p_exp, p_fbm):
            known = {action.dest for action in p._actions}
            p.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        defaults, argv = _read_config(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser = build_parser(defaults)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ConfigurationError, IvBoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
