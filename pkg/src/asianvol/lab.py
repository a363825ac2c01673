"""Experiment orchestration: ATM IV / skew estimation from MC prices,
parameter sweeps, proxy error tables, and CSV output.

All experiment kinds fan their cells out over a thread pool; every cell
derives its own seed from (plan seed, cell index) via SeedSequence spawn
keys, so results do not depend on scheduling or worker count and reruns
are byte-identical.

CSV conventions: UTF-8, comma-separated, '.' decimal, one header row,
snake_case column names, floats printed with 10 significant digits.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .asymptotics import atm_level, atm_skew_closed, price_proxy
from .black import IvBoundError, bs_vega, implied_vol
from .mc import McConfig, price_asian, price_asian_multi
from .models import (
    ConstantVol,
    FractionalBergomi,
    MarketSetup,
    ModelSpec,
    Sabr,
    cev_local_vol,
)
from .paths import GaussianDriver, TimeGrid, joint_covariance, sample_joint_gaussian

MODEL_FAMILIES = ("const", "sabr", "fbergomi", "localvol-cev")


@dataclass(frozen=True)
class IvPoint:
    """One implied-vol observation with its delta-method standard error."""

    log_strike: float
    maturity: float
    iv: float
    iv_stderr: float

    def __post_init__(self) -> None:
        if not self.iv > 0:
            raise ValueError(f"iv must be > 0, got {self.iv}")
        if self.iv_stderr < 0:
            raise ValueError(f"iv_stderr must be >= 0, got {self.iv_stderr}")


@dataclass(frozen=True)
class SkewEstimate:
    """Finite-difference ATM skew with covariance-propagated stderr."""

    slope: float
    stderr: float
    lower: IvPoint
    upper: IvPoint


def build_model(family: str, params: dict) -> ModelSpec:
    """Construct a model from its external name and flat parameter dict.

    Families and keys follow the CLI/config surface: const (sigma0),
    sabr (sigma0, alpha), fbergomi (sigma0, vov, hurst),
    localvol-cev (cev_nu, cev_beta; hyphenated spellings accepted).
    """

    def get(key, *aliases, default=None, required=False):
        for k in (key, *aliases):
            if k in params and params[k] is not None:
                return params[k]
        if required:
            raise ValueError(f"model family {family!r} requires parameter {key!r}")
        return default

    if family == "const":
        return ConstantVol(sigma=float(get("sigma0", required=True)))
    if family == "sabr":
        return Sabr(
            sigma0=float(get("sigma0", required=True)),
            alpha=float(get("alpha", required=True)),
        )
    if family == "fbergomi":
        return FractionalBergomi(
            sigma0=float(get("sigma0", required=True)),
            v=float(get("vov", required=True)),
            hurst=float(get("hurst", required=True)),
        )
    if family == "localvol-cev":
        return cev_local_vol(
            nu=float(get("cev_nu", "cev-nu", required=True)),
            beta=float(get("cev_beta", "cev-beta", required=True)),
        )
    raise ValueError(f"model family must be one of {MODEL_FAMILIES}, got {family!r}")


def estimate_atm_iv(model: ModelSpec, market: MarketSetup, cfg: McConfig) -> IvPoint:
    """MC price at the ATM strike inverted to an implied vol.

    iv_stderr is the delta-method propagation price_stderr / vega(iv).
    """
    if market.strike != market.s0:
        raise ValueError(
            f"ATM estimation requires strike = s0, got strike={market.strike}, "
            f"s0={market.s0}"
        )
    est = price_asian(model, market, cfg)
    x = math.log(market.s0)
    try:
        iv = implied_vol(est.mean, x, x, market.maturity)
    except IvBoundError as exc:
        raise IvBoundError(
            f"MC price outside no-arbitrage bounds ({exc}); "
            "try a larger n_paths"
        ) from exc
    vega = bs_vega(x, x, market.maturity, iv)
    return IvPoint(
        log_strike=x,
        maturity=market.maturity,
        iv=iv,
        iv_stderr=est.stderr / vega,
    )


def fd_slope(iv_upper: float, iv_lower: float, h: float) -> float:
    """Central difference (iv(k*+h) - iv(k*-h)) / (2h)."""
    return (iv_upper - iv_lower) / (2.0 * h)


def estimate_skew_fd(
    model: ModelSpec,
    market: MarketSetup,
    cfg: McConfig,
    dk: float = 0.001,
) -> SkewEstimate:
    """ATM skew by central finite difference on common random numbers.

    Prices strikes K/(1+dk) and K*(1+dk) on the same paths, inverts both,
    and propagates the stderr through the full 2x2 covariance of the two
    price means (the CRN covariance term is what makes the difference
    usable at small dk).
    """
    if not dk > 0:
        raise ValueError(f"dk must be > 0, got {dk}")
    strike = market.strike
    h = math.log(1.0 + dk)
    k_lo = math.log(strike) - h
    k_hi = math.log(strike) + h
    strikes = [strike / (1.0 + dk), strike * (1.0 + dk)]
    ests, cov = price_asian_multi(model, market, strikes, cfg)
    x = math.log(market.s0)
    t = market.maturity
    ivs = []
    for est, k in zip(ests, (k_lo, k_hi)):
        ivs.append(implied_vol(est.mean, x, k, t))
    vega_lo = bs_vega(x, k_lo, t, ivs[0])
    vega_hi = bs_vega(x, k_hi, t, ivs[1])
    slope = fd_slope(ivs[1], ivs[0], h)
    var_diff = (
        cov[1, 1] / vega_hi**2
        + cov[0, 0] / vega_lo**2
        - 2.0 * cov[0, 1] / (vega_hi * vega_lo)
    )
    stderr = math.sqrt(max(var_diff, 0.0)) / (2.0 * h)
    lower = IvPoint(k_lo, t, ivs[0], ests[0].stderr / vega_lo)
    upper = IvPoint(k_hi, t, ivs[1], ests[1].stderr / vega_hi)
    return SkewEstimate(slope=slope, stderr=stderr, lower=lower, upper=upper)


@dataclass(frozen=True)
class ExperimentPlan:
    """A declarative experiment: kind, model family, market template,
    MC budget, kind-specific grid, output path.

    Kinds and their grid keys (all optional unless marked):
      level_sweep       sigma0 (list, required)
      skew_sweep        sigma0 (list, required), dk
      skew_vs_T         maturities (list, required), dk
      proxy_error_table n_samples, maturities, strikes, workers
      fbm_check         steps, hurst (list), n_samples
    """

    kind: str
    model: dict
    market: dict
    mc: McConfig
    out: str
    grid: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        kinds = (
            "level_sweep",
            "skew_sweep",
            "skew_vs_T",
            "proxy_error_table",
            "fbm_check",
        )
        if self.kind not in kinds:
            raise ValueError(f"kind must be one of {kinds}, got {self.kind!r}")


def load_plan(path: str) -> ExperimentPlan:
    """Read an ExperimentPlan from a TOML (or JSON) file."""
    if path.endswith(".json"):
        import json

        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    else:
        try:
            import tomllib as toml_reader
        except ImportError:  # Python < 3.11
            import tomli as toml_reader
        with open(path, "rb") as f:
            raw = toml_reader.load(f)
    return plan_from_dict(raw)


def plan_from_dict(raw: dict) -> ExperimentPlan:
    mc_raw = dict(raw.get("mc", {}))
    cfg = McConfig(
        n_paths=int(mc_raw.get("n_paths", 100_000)),
        steps=int(mc_raw.get("steps", 100)),
        seed=int(mc_raw.get("seed", 0)),
        estimator=mc_raw.get("estimator", "plain"),
        cv_mode=mc_raw.get("cv_mode", "discrete"),
    )
    return ExperimentPlan(
        kind=raw["kind"],
        model=dict(raw.get("model", {})),
        market=dict(raw.get("market", {})),
        mc=cfg,
        out=raw["out"],
        grid=dict(raw.get("grid", {})),
    )


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def write_csv(path: str, header: Sequence[str], rows) -> str:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise OSError(f"output directory does not exist: {parent}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _cell_seed(base_seed: int, namespace: int, index: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(namespace, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _market_from(template: dict, **overrides) -> MarketSetup:
    vals = {
        "s0": float(template.get("s0", 100.0)),
        "maturity": float(template.get("maturity", 1.0)),
        "rho": float(template.get("rho", 0.0)),
    }
    vals["strike"] = float(template.get("strike", vals["s0"]))
    vals.update(overrides)
    return MarketSetup(**vals)


def _map_cells(fn, n_cells: int, workers: Optional[int]) -> list:
    w = workers or min(4, max(1, n_cells))
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, range(n_cells)))


def _sweep_models(plan: ExperimentPlan, sigma0: float) -> ModelSpec:
    params = dict(plan.model)
    params["sigma0"] = sigma0
    family = params.pop("family", "const")
    return build_model(family, params)


def _run_level_sweep(plan: ExperimentPlan) -> str:
    sigmas = [float(s) for s in plan.grid.get("sigma0", ())]
    if not sigmas:
        raise ValueError("level_sweep requires a non-empty grid.sigma0 list")
    market = _market_from(plan.market)
    market = replace(market, strike=market.s0)

    def cell(i: int):
        model = _sweep_models(plan, sigmas[i])
        cfg = replace(plan.mc, seed=_cell_seed(plan.mc.seed, 1, i))
        point = estimate_atm_iv(model, market, cfg)
        return (sigmas[i], point.iv, point.iv_stderr, atm_level(sigmas[i]))

    rows = _map_cells(cell, len(sigmas), plan.grid.get("workers"))
    return write_csv(
        plan.out, ("sigma0", "iv", "iv_stderr", "theory_level"), rows
    )


def _closed_quote(plan: ExperimentPlan, sigma0: float, market: MarketSetup):
    model = _sweep_models(plan, sigma0)
    return model, atm_skew_closed(model, market)


def _run_skew_sweep(plan: ExperimentPlan) -> str:
    sigmas = [float(s) for s in plan.grid.get("sigma0", ())]
    if not sigmas:
        raise ValueError("skew_sweep requires a non-empty grid.sigma0 list")
    dk = float(plan.grid.get("dk", 0.001))
    market = _market_from(plan.market)
    market = replace(market, strike=market.s0)
    t = market.maturity
    scaled = False
    if plan.model.get("family") == "fbergomi" and float(plan.model["hurst"]) < 0.5:
        scaled = True

    def cell(i: int):
        model, quote = _closed_quote(plan, sigmas[i], market)
        cfg = replace(plan.mc, seed=_cell_seed(plan.mc.seed, 2, i))
        est = estimate_skew_fd(model, market, cfg, dk=dk)
        theory = quote.slope_at(t)
        row = [sigmas[i], est.slope, est.stderr, theory]
        if scaled:
            descale = t ** (-quote.scaling_exponent)
            row.extend([est.slope * descale, quote.skew + descale * quote.level / 10.0])
        return tuple(row)

    rows = _map_cells(cell, len(sigmas), plan.grid.get("workers"))
    header = ["sigma0", "skew", "skew_stderr", "theory_skew"]
    if scaled:
        header += ["scaled_skew", "theory_scaled_skew"]
    return write_csv(plan.out, header, rows)


def _run_skew_vs_t(plan: ExperimentPlan) -> str:
    mats = [float(t) for t in plan.grid.get("maturities", ())]
    if not mats:
        raise ValueError("skew_vs_T requires a non-empty grid.maturities list")
    dk = float(plan.grid.get("dk", 0.001))
    template = _market_from(plan.market)
    params = dict(plan.model)
    family = params.pop("family", "const")
    model = build_model(family, params)
    scaled = isinstance(model, FractionalBergomi) and model.hurst < 0.5

    def cell(i: int):
        market = replace(template, maturity=mats[i], strike=template.s0)
        quote = atm_skew_closed(model, market)
        cfg = replace(plan.mc, seed=_cell_seed(plan.mc.seed, 3, i))
        est = estimate_skew_fd(model, market, cfg, dk=dk)
        row = [mats[i], est.slope, est.stderr, quote.slope_at(mats[i])]
        if scaled:
            descale = mats[i] ** (-quote.scaling_exponent)
            row.append(est.slope * descale)
        return row

    rows = _map_cells(cell, len(mats), plan.grid.get("workers"))
    # least-squares fit of log10|skew| against log10 T: the slope estimates
    # the short-maturity blow-up exponent (H - 1/2 for rough kernels)
    xs, ys = [], []
    for row in rows:
        if math.isfinite(row[1]) and row[1] != 0.0:
            xs.append(math.log10(row[0]))
            ys.append(math.log10(abs(row[1])))
    if len(xs) >= 2:
        fit_slope, fit_intercept = np.polyfit(np.array(xs), np.array(ys), 1)
    else:
        fit_slope, fit_intercept = float("nan"), float("nan")
    out_rows = [tuple(row) + (float(fit_intercept), float(fit_slope)) for row in rows]
    header = ["maturity", "skew", "skew_stderr", "theory_skew"]
    if scaled:
        header.append("scaled_skew")
    header += ["fit_intercept", "fit_slope"]
    return write_csv(plan.out, header, out_rows)


def _run_proxy_error_table(plan: ExperimentPlan) -> str:
    family = plan.model.get("family", "sabr")
    if family not in ("sabr", "fbergomi"):
        raise ValueError(
            f"proxy_error_table supports sabr or fbergomi families, got {family!r}"
        )
    n_samples = int(plan.grid.get("n_samples", 200))
    if n_samples < 1:
        raise ValueError("proxy_error_table requires n_samples >= 1")
    maturities = [float(t) for t in plan.grid.get("maturities", (0.01, 0.1, 0.5, 1.0, 2.0))]
    strikes = [float(k) for k in plan.grid.get("strikes", tuple(range(90, 130, 5)))]
    s0 = float(plan.market.get("s0", 100.0))

    # parameter sampling laws: sigma0 ~ U(0.2, 0.8), vol-of-vol ~ U(0.3, 1.5),
    # rho ~ U(-0.9, 0.9); drawn once per sample from a dedicated stream
    rng = np.random.default_rng(
        np.random.SeedSequence(plan.mc.seed, spawn_key=(4, 0))
    )
    sigma0s = rng.uniform(0.2, 0.8, n_samples)
    vovs = rng.uniform(0.3, 1.5, n_samples)
    rhos = rng.uniform(-0.9, 0.9, n_samples)
    hurst = float(plan.model.get("hurst", 0.4)) if family == "fbergomi" else None

    def make_model(i: int) -> ModelSpec:
        if family == "sabr":
            return Sabr(sigma0=float(sigma0s[i]), alpha=float(vovs[i]))
        return FractionalBergomi(
            sigma0=float(sigma0s[i]), v=float(vovs[i]), hurst=hurst
        )

    n_cells = n_samples * len(maturities)

    def cell(idx: int):
        i, j = divmod(idx, len(maturities))
        model = make_model(i)
        market = MarketSetup(
            s0=s0, strike=s0, maturity=maturities[j], rho=float(rhos[i])
        )
        cfg = replace(plan.mc, seed=_cell_seed(plan.mc.seed, 5, idx))
        ests, _ = price_asian_multi(model, market, strikes, cfg)
        out = []
        for k, est in zip(strikes, ests):
            proxy = price_proxy(model, market, math.log(k))
            out.append((est.mean, est.stderr, proxy))
        return out

    results = _map_cells(cell, n_cells, plan.grid.get("workers"))

    header = (
        "maturity",
        "strike",
        "err_median_pct",
        "err_q90_pct",
        "err_max_pct",
        "mc_ci_median_pct",
        "n_valid",
        "flag",
    )
    rows = []
    for j, t in enumerate(maturities):
        for col, k in enumerate(strikes):
            errs = []
            cis = []
            bad = 0
            for i in range(n_samples):
                mc_mean, mc_se, proxy = results[i * len(maturities) + j][col]
                if not (
                    math.isfinite(mc_mean)
                    and math.isfinite(mc_se)
                    and math.isfinite(proxy)
                    and mc_mean > 0
                ):
                    bad += 1
                    continue
                errs.append(100.0 * abs(proxy - mc_mean) / mc_mean)
                cis.append(100.0 * 1.96 * mc_se / mc_mean)
            if errs:
                rows.append(
                    (
                        t,
                        k,
                        float(np.median(errs)),
                        float(np.quantile(errs, 0.9)),
                        float(np.max(errs)),
                        float(np.median(cis)),
                        len(errs),
                        f"nonfinite={bad}" if bad else "",
                    )
                )
            else:
                rows.append((t, k, float("nan"), float("nan"), float("nan"),
                             float("nan"), 0, f"nonfinite={bad}"))
    return write_csv(plan.out, header, rows)


def _run_fbm_check(plan: ExperimentPlan) -> str:
    steps = int(plan.grid.get("steps", 10))
    hursts = [float(h) for h in plan.grid.get("hurst", (0.4, 0.7))]
    n_samples = int(plan.grid.get("n_samples", 100_000))
    maturity = float(plan.market.get("maturity", 1.0))
    grid = TimeGrid(maturity, steps)

    rows = []
    for hi, h in enumerate(hursts):
        analytic = joint_covariance(grid, h)
        driver = GaussianDriver(_cell_seed(plan.mc.seed, 6, hi), 0)
        w, z = sample_joint_gaussian(grid, h, driver, n_samples)
        x = np.concatenate([w, z], axis=1)
        sample = (x.T @ x) / n_samples  # mean is exactly zero by construction
        dim = 2 * steps
        for i in range(dim):
            for j in range(i, dim):
                # normal-theory stderr of a second-moment estimate
                se = math.sqrt(
                    (analytic[i, i] * analytic[j, j] + analytic[i, j] ** 2)
                    / n_samples
                )
                z_score = (sample[i, j] - analytic[i, j]) / se if se > 0 else 0.0
                rows.append(
                    (h, i, j, analytic[i, j], sample[i, j], se, z_score)
                )
    header = ("hurst", "row", "col", "analytic_cov", "sample_cov",
              "stderr", "z_score")
    return write_csv(plan.out, header, rows)


_RUNNERS = {
    "level_sweep": _run_level_sweep,
    "skew_sweep": _run_skew_sweep,
    "skew_vs_T": _run_skew_vs_t,
    "proxy_error_table": _run_proxy_error_table,
    "fbm_check": _run_fbm_check,
}


def run_experiment(plan: ExperimentPlan) -> str:
    """Execute a plan and write its CSV; returns the output path."""
    return _RUNNERS[plan.kind](plan)
