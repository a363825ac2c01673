"""Monte Carlo pricing of arithmetic Asian calls with variance reduction.

Estimators:
  plain            straight average of discounted payoffs
  antithetic       pairwise average with sign-flipped driver draws
  control_variate  geometric-average Asian control with closed-form reference
  cv_antithetic    both

The engine prices a whole strike vector on common paths in one pass and
returns the full covariance of the per-strike mean estimates, which is
what finite-difference skew estimation needs.

Batching: paths are processed in fixed blocks of 16384; block j draws
from stream j of the seed (GaussianDriver(seed, stream=j)), so results
are independent of how many blocks run and bit-identical across reruns.
Moments are accumulated per block around a pivot (the first sample of
the first block) and reduced with a fixed summation tree; the pivot
keeps the variance computation exact when all samples coincide and
well-conditioned otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .backend import path_stats, path_stats_const, path_stats_localvol
from .black import geometric_asian_price
from .models import (
    ConstantVol,
    FractionalBergomi,
    LocalVol,
    MarketSetup,
    ModelSpec,
    spot_vol,
)
from .paths import GaussianDriver, Shocks, TimeGrid

BATCH_SIZE = 16384

_ESTIMATORS = ("plain", "antithetic", "control_variate", "cv_antithetic")
_CV_MODES = ("continuous", "discrete")


class ConfigurationError(ValueError):
    """Invalid estimator/model combination or malformed config."""


@dataclass(frozen=True)
class McConfig:
    """Simulation budget and estimator selection.

    n_paths counts estimator samples: for antithetic estimators each
    sample is one +/- pair (two path evaluations).
    """

    n_paths: int
    steps: int
    seed: int
    estimator: str = "plain"
    cv_mode: str = "discrete"

    def __post_init__(self) -> None:
        if int(self.n_paths) != self.n_paths or self.n_paths < 2:
            raise ValueError(f"n_paths must be an integer >= 2, got {self.n_paths}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps}")
        if self.estimator not in _ESTIMATORS:
            raise ConfigurationError(
                f"estimator must be one of {_ESTIMATORS}, got {self.estimator!r}"
            )
        if self.cv_mode not in _CV_MODES:
            raise ConfigurationError(
                f"cv_mode must be one of {_CV_MODES}, got {self.cv_mode!r}"
            )


@dataclass(frozen=True)
class McEstimate:
    """Point estimate with standard error and normal 95% CI.

    estimator records what actually ran: a control-variate run whose
    control had zero sample variance degrades (coefficient 0) and is
    labelled by the surviving estimator.
    """

    mean: float
    stderr: float
    ci95: tuple
    n_effective: int
    estimator: str

    def __post_init__(self) -> None:
        if self.stderr < 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")


def cv_coefficient(payoffs, controls, reference: float = 0.0) -> float:
    """Optimal control-variate coefficient Cov(payoffs, controls)/Var(controls).

    The reference (the control's known expectation) does not enter the
    coefficient; it is accepted so call sites can pass the full control
    specification in one place.  Zero control variance returns 0 — the
    caller then flags the estimate as not variance-reduced.
    """
    p = np.asarray(payoffs, dtype=float)
    c = np.asarray(controls, dtype=float)
    if p.ndim != 1 or c.ndim != 1 or p.size != c.size:
        raise ValueError("payoffs and controls must be 1-d sequences of equal length")
    if p.size < 2:
        raise ValueError(f"need at least 2 samples, got {p.size}")
    cm = c - c.mean()
    var_c = float(cm @ cm)
    if var_c == 0.0:
        return 0.0
    pm = p - p.mean()
    return float(pm @ cm) / var_c


def _validate_combo(model: ModelSpec, cfg: McConfig) -> None:
    if cfg.estimator == "control_variate" and not isinstance(model, ConstantVol):
        raise ConfigurationError(
            "control_variate requires ConstantVol: the geometric closed-form "
            f"reference assumes constant volatility (got {type(model).__name__})"
        )
    if cfg.estimator == "cv_antithetic" and not isinstance(
        model, (ConstantVol, FractionalBergomi)
    ):
        raise ConfigurationError(
            "cv_antithetic requires ConstantVol or FractionalBergomi: the "
            "control is the spot-vol geometric reference, defined for the "
            f"constant-vol shadow of those models (got {type(model).__name__})"
        )


def _stats(model, market, grid, sig, dw):
    if sig is None:
        return path_stats_localvol(model.sigma_fn, dw, market.s0, grid.dt)
    if isinstance(sig, float):
        return path_stats_const(sig, dw, market.s0, grid.dt)
    return path_stats(sig, dw, market.s0, grid.dt)


def _batch_samples(sh, model, market, grid, ks, use_cv, shadow_cv, sigma_ref, anti):
    """Sample matrix (rows, nb): payoff rows per strike, then control rows."""

    def one_pass(flag):
        sig, dw = sh.asset_driver(flag)
        arith, geom, _ = _stats(model, market, grid, sig, dw)
        if use_cv:
            if shadow_cv:
                # shadow asset: same dW, vol frozen at the spot level
                geom = path_stats_const(sigma_ref, dw, market.s0, grid.dt)[1]
            control = np.maximum(geom[None, :] - ks[:, None], 0.0)
        else:
            control = None
        payoff = np.maximum(arith[None, :] - ks[:, None], 0.0)
        return payoff, control

    pay, ctl = one_pass(False)
    if anti:
        pay2, ctl2 = one_pass(True)
        pay = 0.5 * (pay + pay2)
        if use_cv:
            ctl = 0.5 * (ctl + ctl2)
    return np.concatenate([pay, ctl], axis=0) if use_cv else pay


def mc_moments(model: ModelSpec, market: MarketSetup, strikes, cfg: McConfig):
    """Mean vector and covariance-of-means matrix for a strike vector.

    Returns (means, cov_of_means, n_effective, labels): the per-strike
    estimator means (CV-adjusted when requested), the covariance matrix
    of those mean estimates, and the per-strike estimator labels.
    """
    _validate_combo(model, cfg)
    grid = TimeGrid(market.maturity, cfg.steps)
    ks = np.asarray(strikes, dtype=float)
    if ks.ndim != 1 or ks.size == 0:
        raise ValueError("strikes must be a non-empty 1-d sequence")
    n_strikes = ks.size

    anti = cfg.estimator in ("antithetic", "cv_antithetic")
    use_cv = cfg.estimator in ("control_variate", "cv_antithetic")
    shadow_cv = use_cv and not isinstance(model, ConstantVol)
    sigma_ref = spot_vol(model, market) if use_cv else 0.0
    refs = None
    if use_cv:
        refs = np.array(
            [
                geometric_asian_price(
                    replace(market, strike=float(k)), sigma_ref, cfg.cv_mode, grid
                )
                for k in ks
            ]
        )

    n = cfg.n_paths
    n_batches = -(-n // BATCH_SIZE)
    pivot = None
    s1_parts = []
    s2_parts = []
    for j in range(n_batches):
        nb = min(BATCH_SIZE, n - j * BATCH_SIZE)
        rng = GaussianDriver(cfg.seed, stream=j).rng()
        sh = Shocks(model, market, grid, rng, nb)
        x = _batch_samples(
            sh, model, market, grid, ks, use_cv, shadow_cv, sigma_ref, anti
        )
        if pivot is None:
            pivot = x[:, 0].copy()
        xc = x - pivot[:, None]
        s1_parts.append(xc.sum(axis=1))
        s2_parts.append(xc @ xc.T)
    s1 = np.sum(np.stack(s1_parts, axis=0), axis=0)
    s2 = np.sum(np.stack(s2_parts, axis=0), axis=0)

    mean = pivot + s1 / n
    cov = (s2 - np.outer(s1, s1) / n) / (n - 1)

    labels = [cfg.estimator] * n_strikes
    if use_cv:
        coef = np.zeros(n_strikes)
        base_label = "antithetic" if anti else "plain"
        for i in range(n_strikes):
            var_c = cov[n_strikes + i, n_strikes + i]
            if var_c > 0.0:
                coef[i] = cov[i, n_strikes + i] / var_c
            else:
                labels[i] = base_label
        vv = cov[:n_strikes, :n_strikes]
        vc = cov[:n_strikes, n_strikes:]
        cc = cov[n_strikes:, n_strikes:]
        adj_mean = mean[:n_strikes] - coef * (mean[n_strikes:] - refs)
        adj_cov = (
            vv
            - vc * coef[None, :]
            - coef[:, None] * vc.T
            + np.outer(coef, coef) * cc
        )
    else:
        adj_mean = mean
        adj_cov = cov

    adj_cov = np.asarray(adj_cov)
    d = np.diag(adj_cov).copy()
    np.fill_diagonal(adj_cov, np.maximum(d, 0.0))
    return adj_mean, adj_cov / n, n, labels


def _estimate(mean: float, var_of_mean: float, n: int, label: str) -> McEstimate:
    stderr = math.sqrt(max(var_of_mean, 0.0))
    return McEstimate(
        mean=float(mean),
        stderr=stderr,
        ci95=(float(mean) - 1.96 * stderr, float(mean) + 1.96 * stderr),
        n_effective=n,
        estimator=label,
    )


def price_asian_multi(
    model: ModelSpec, market: MarketSetup, strikes: Sequence[float], cfg: McConfig
):
    """Price several strikes on common paths.

    Returns (estimates, cov_of_means); the off-diagonal covariances are
    what common-random-number finite differences need.
    """
    means, cov_means, n, labels = mc_moments(model, market, strikes, cfg)
    ests = [
        _estimate(means[i], cov_means[i, i], n, labels[i])
        for i in range(len(labels))
    ]
    return ests, cov_means


def price_asian(model: ModelSpec, market: MarketSetup, cfg: McConfig) -> McEstimate:
    """Monte Carlo price of the arithmetic Asian call at market.strike."""
    ests, _ = price_asian_multi(model, market, [market.strike], cfg)
    return ests[0]
