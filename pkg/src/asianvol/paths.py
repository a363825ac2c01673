"""Path engine: time grids, Gaussian drivers, fBm sampling, and path simulation.

Layout conventions used throughout:

* A grid with ``steps = m`` has m+1 nodes t_i = i*T/m, so node arrays
  (w_prime, z, vol, asset) have length m+1 and increment arrays (b, dw)
  have length m.
* Volatility nodes are exact evaluations of the model's vol map at the
  grid nodes (no Euler stepping of the vol), the asset is log-Euler:
      S_{i+1} = S_i * exp(vol_i * dW_i - vol_i^2 * dt / 2).
* The driving draws are consumed in a fixed order so that every consumer
  (single-path simulation, Monte Carlo batches, joint-Gaussian sampling)
  sees bit-identical randomness for the same (seed, stream):
      - fractional Bergomi: one (n, 2m) block for the correlated
        (W', Z) nodes, then one (n, m) block for the independent B;
      - all other models: one (n, m) block for the W' increments, then
        one (n, m) block for B.
  Antithetic paths negate every raw draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import roots_jacobi

from .backend import path_stats, path_stats_const, path_stats_localvol
from .models import (
    ConstantVol,
    FractionalBergomi,
    LocalVol,
    MarketSetup,
    ModelSpec,
    Sabr,
)

_MAX_JOINT_STEPS = 1000


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_m = maturity."""

    maturity: float
    steps: int

    def __post_init__(self) -> None:
        if self.maturity <= 0:
            raise ValueError(f"maturity must be > 0, got {self.maturity}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.maturity / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.maturity, self.steps + 1)


@dataclass(frozen=True)
class GaussianDriver:
    """Seed policy: stream j draws from SeedSequence(seed, spawn_key=(j,)).

    Distinct streams are statistically independent, and the mapping from
    (seed, stream) to the delivered numbers is stable across runs.
    """

    seed: int
    stream: int = 0

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.default_rng(ss)


def _volterra_cov(nodes: np.ndarray, hurst: float) -> np.ndarray:
    """Joint covariance of (W'_{t_1..t_m}, Z_{t_1..t_m}) for the Volterra
    process Z_t = int_0^t (t-s)^{H-1/2} dW'_s.

    Blocks:
      Cov(W'_s, W'_t) = min(s, t)
      Cov(Z_t, W'_s)  = (t^{H+1/2} - (t - min(s,t))^{H+1/2}) / (H + 1/2)
      Var(Z_t)        = t^{2H} / (2H)
      Cov(Z_s, Z_t)   = int_0^min (t-u)^{H-1/2} (s-u)^{H-1/2} du,
    the last evaluated by 64-node Gauss-Jacobi on u = min(s,t) * x with the
    endpoint factor (min - u)^{H-1/2} absorbed into the quadrature weight.
    A plain Gauss-Legendre rule leaves an O(n^{-2H-1}) error from that
    algebraic endpoint singularity; for H < 1/2 and fine grids the error
    exceeds the smallest eigenvalue of the exact matrix and the assembled
    covariance stops being positive definite.  Absorbing the singular factor
    keeps the entries accurate to ~1e-15 relative and the matrix factorizable
    for every grid this module accepts.
    """
    h = hurst
    t = np.asarray(nodes, dtype=float)
    m = t.size
    cov = np.empty((2 * m, 2 * m))

    ww = np.minimum.outer(t, t)
    cov[:m, :m] = ww

    mn = np.minimum.outer(t, t)  # rows: Z index, cols: W' index
    zw = (t[:, None] ** (h + 0.5) - (t[:, None] - mn) ** (h + 0.5)) / (h + 0.5)
    cov[m:, :m] = zw
    cov[:m, m:] = zw.T

    zz = np.empty((m, m))
    zz[np.diag_indices(m)] = t ** (2.0 * h) / (2.0 * h)
    if m > 1:
        iu, ju = np.triu_indices(m, k=1)
        s_lo = t[iu]
        t_hi = t[ju]
        # weight (1 - x)^{H-1/2} on [-1, 1]; u = s*(x+1)/2 so (s-u) supplies it
        x, w = roots_jacobi(64, h - 0.5, 0.0)
        u = s_lo[:, None] * (0.5 * (x + 1.0))[None, :]
        vals = (t_hi[:, None] - u) ** (h - 0.5)
        off = (0.5 * s_lo) ** (h + 0.5) * (vals @ w)
        zz[iu, ju] = off
        zz[ju, iu] = off
    cov[m:, m:] = zz
    return cov


@lru_cache(maxsize=8)
def _joint_cholesky(steps: int, maturity: float, hurst: float) -> np.ndarray:
    grid = TimeGrid(maturity, steps)
    cov = _volterra_cov(grid.nodes[1:], hurst)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(cov) / cov.shape[0]
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            raise RuntimeError(
                f"joint covariance for steps={steps}, maturity={maturity}, "
                f"hurst={hurst} is not positive definite even after a "
                f"{jitter:.3e} diagonal jitter"
            ) from None


def joint_covariance(grid: TimeGrid, hurst: float) -> np.ndarray:
    """The analytic covariance matrix targeted by sample_joint_gaussian."""
    return _volterra_cov(grid.nodes[1:], hurst)


def sample_joint_gaussian(
    grid: TimeGrid,
    hurst: float,
    driver: GaussianDriver,
    n_samples: Optional[int] = None,
):
    """Draw (W'_{t_1..t_m}, Z_{t_1..t_m}) jointly from the exact covariance.

    Returns a pair (w_prime, z) of arrays, each of shape (m,) when
    n_samples is None and (n_samples, m) otherwise.  Refuses grids with
    more than 1000 steps (the dense Cholesky would be the wrong tool).
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must be in (0, 1), got {hurst}")
    if grid.steps > _MAX_JOINT_STEPS:
        raise ValueError(
            f"sample_joint_gaussian supports at most {_MAX_JOINT_STEPS} steps, "
            f"got {grid.steps}"
        )
    chol = _joint_cholesky(grid.steps, grid.maturity, hurst)
    n = 1 if n_samples is None else int(n_samples)
    g = driver.rng().standard_normal((n, 2 * grid.steps))
    x = g @ chol.T
    m = grid.steps
    if n_samples is None:
        return x[0, :m], x[0, m:]
    return x[:, :m], x[:, m:]


class Shocks:
    """Raw Gaussian draws for a block of paths, consumed in the canonical order.

    Holding the raw draws (rather than transformed increments) lets the
    same block serve both halves of an antithetic pair: the antithetic
    member negates every draw and rebuilds.
    """

    def __init__(self, model: ModelSpec, market: MarketSetup, grid: TimeGrid,
                 rng: np.random.Generator, n: int):
        self.model = model
        self.market = market
        self.grid = grid
        self.n = n
        m = grid.steps
        if isinstance(model, FractionalBergomi):
            if grid.steps > _MAX_JOINT_STEPS:
                raise ValueError(
                    f"fractional Bergomi grids support at most "
                    f"{_MAX_JOINT_STEPS} steps, got {grid.steps}"
                )
            self._chol = _joint_cholesky(grid.steps, grid.maturity, model.hurst)
            self.g_joint = rng.standard_normal((n, 2 * m))
            self.g_w = None
        else:
            self._chol = None
            self.g_joint = None
            self.g_w = rng.standard_normal((n, m))
        self.g_b = rng.standard_normal((n, m))

    def _wp_z_nodes(self, sign: float):
        """W' and Z at nodes t_1..t_m (Bergomi) or W' increments (others)."""
        m = self.grid.steps
        if self.g_joint is not None:
            x = (sign * self.g_joint) @ self._chol.T
            return x[:, :m], x[:, m:]
        sqdt = math.sqrt(self.grid.dt)
        return sqdt * sign * self.g_w, None

    def asset_driver(self, antithetic: bool = False):
        """(vol description, dW increments) for the asset log-Euler step.

        The vol description is a float for constant vol, an (n, m) array of
        left-node vols for Sabr / fractional Bergomi, and None for local
        vol (whose vol nodes are a function of the asset recursion).
        """
        sign = -1.0 if antithetic else 1.0
        m = self.grid.steps
        dt = self.grid.dt
        sqdt = math.sqrt(dt)
        rho = self.market.rho
        orth = math.sqrt(1.0 - rho * rho)
        db = sqdt * sign * self.g_b

        model = self.model
        if isinstance(model, FractionalBergomi):
            wp_nodes, z_nodes = self._wp_z_nodes(sign)
            dwp = np.empty_like(wp_nodes)
            dwp[:, 0] = wp_nodes[:, 0]
            np.subtract(wp_nodes[:, 1:], wp_nodes[:, :-1], out=dwp[:, 1:])
            dw = rho * dwp + orth * db
            # left-node Z: (0, Z_{t_1}, ..., Z_{t_{m-1}})
            z_left = np.empty((self.n, m))
            z_left[:, 0] = 0.0
            z_left[:, 1:] = z_nodes[:, : m - 1]
            t_left = self.grid.nodes[:m]
            h2 = 2.0 * model.hurst
            sig = model.sigma0 * np.exp(
                0.5 * model.v * math.sqrt(h2) * z_left
                - 0.25 * model.v * model.v * t_left ** h2
            )
            return sig, dw
        dwp, _ = self._wp_z_nodes(sign)
        dw = rho * dwp + orth * db
        if isinstance(model, ConstantVol):
            return model.sigma, dw
        if isinstance(model, Sabr):
            wp_left = np.empty((self.n, m))
            wp_left[:, 0] = 0.0
            np.cumsum(dwp[:, : m - 1], axis=1, out=wp_left[:, 1:])
            t_left = self.grid.nodes[:m]
            sig = model.sigma0 * np.exp(
                model.alpha * wp_left - 0.5 * model.alpha * model.alpha * t_left
            )
            return sig, dw
        if isinstance(model, LocalVol):
            return None, dw
        raise TypeError(f"unsupported model type {type(model).__name__}")

    def path_stats(self, antithetic: bool = False):
        """(arith_avg, geom_avg, S_T) per path via the active backend kernel."""
        sig, dw = self.asset_driver(antithetic)
        s0, dt = self.market.s0, self.grid.dt
        if sig is None:
            return path_stats_localvol(self.model.sigma_fn, dw, s0, dt)
        if isinstance(sig, float):
            return path_stats_const(sig, dw, s0, dt)
        return path_stats(sig, dw, s0, dt)

    def node_arrays(self, antithetic: bool = False):
        """Full node arrays for bundle construction: dict with keys
        w_prime (n, m+1), b (n, m), z (n, m+1) or None, vol (n, m+1),
        asset (n, m+1)."""
        sign = -1.0 if antithetic else 1.0
        m = self.grid.steps
        nodes = self.grid.nodes
        dt = self.grid.dt
        sqdt = math.sqrt(dt)
        rho = self.market.rho
        orth = math.sqrt(1.0 - rho * rho)
        db = sqdt * sign * self.g_b

        model = self.model
        z_full = None
        if isinstance(model, FractionalBergomi):
            wp_inner, z_inner = self._wp_z_nodes(sign)
            wp_full = np.concatenate(
                [np.zeros((self.n, 1)), wp_inner], axis=1
            )
            z_full = np.concatenate([np.zeros((self.n, 1)), z_inner], axis=1)
            h2 = 2.0 * model.hurst
            vol = model.sigma0 * np.exp(
                0.5 * model.v * math.sqrt(h2) * z_full
                - 0.25 * model.v * model.v * nodes ** h2
            )
        else:
            dwp, _ = self._wp_z_nodes(sign)
            wp_full = np.concatenate(
                [np.zeros((self.n, 1)), np.cumsum(dwp, axis=1)], axis=1
            )
            if isinstance(model, ConstantVol):
                vol = np.full((self.n, m + 1), model.sigma)
            elif isinstance(model, Sabr):
                vol = model.sigma0 * np.exp(
                    model.alpha * wp_full
                    - 0.5 * model.alpha * model.alpha * nodes
                )
            elif isinstance(model, LocalVol):
                vol = None  # filled along the asset recursion below
            else:
                raise TypeError(f"unsupported model type {type(model).__name__}")

        dwp_full = np.diff(wp_full, axis=1)
        dw = rho * dwp_full + orth * db
        s0 = self.market.s0
        asset = np.empty((self.n, m + 1))
        asset[:, 0] = s0
        if isinstance(model, LocalVol):
            vol = np.empty((self.n, m + 1))
            logs = np.zeros(self.n)
            s = np.full(self.n, s0)
            for i in range(m):
                v = model.sigma_fn(s)
                vol[:, i] = v
                logs = logs + v * dw[:, i] - 0.5 * v * v * dt
                s = s0 * np.exp(logs)
                asset[:, i + 1] = s
            vol[:, m] = model.sigma_fn(s)
        else:
            x = vol[:, :m] * dw - 0.5 * dt * vol[:, :m] ** 2
            asset[:, 1:] = s0 * np.exp(np.cumsum(x, axis=1))
        return {
            "w_prime": wp_full,
            "b": db,
            "z": z_full,
            "vol": vol,
            "asset": asset,
        }


@dataclass(frozen=True)
class PathBundle:
    """One simulated path: driver nodes, vol nodes, asset nodes.

    w_prime, vol, asset hold all m+1 node values; b holds the m increments
    of the orthogonal Brownian; z holds the Volterra nodes for fractional
    Bergomi and is empty otherwise.
    """

    grid: TimeGrid
    w_prime: np.ndarray
    b: np.ndarray
    z: np.ndarray
    vol: np.ndarray
    asset: np.ndarray
    antithetic: bool = False


@dataclass(frozen=True)
class ForwardState:
    """Running-average state along one path, for proxy diagnostics.

    m_path[i] is the conditional expectation weight mix
    (1/m) sum_{j<i} S_j + ((m-i)/m) S_i; phi_path[i] is the effective
    proxy vol sigma_i * ((m-i)/m) S_i / m_path[i]; v0 is the root mean
    square of phi over the left nodes; a_T is the left-rectangle average.
    """

    m_path: np.ndarray
    phi_path: np.ndarray
    v0: float
    a_T: float


def simulate_paths(
    model: ModelSpec,
    market: MarketSetup,
    grid: TimeGrid,
    driver: GaussianDriver,
    antithetic: bool = False,
) -> PathBundle:
    """Simulate one path of (drivers, vol, asset) on the grid.

    Vol nodes are exact evaluations of the model vol map; the asset uses
    the log-Euler scheme, which keeps asset nodes strictly positive.
    """
    sh = Shocks(model, market, grid, driver.rng(), 1)
    arrs = sh.node_arrays(antithetic)
    asset = arrs["asset"][0]
    if not np.all(np.isfinite(asset)):
        bad = int(np.argmin(np.isfinite(asset)))
        raise RuntimeError(
            f"non-finite asset value at node {bad} (t={grid.nodes[bad]:.6g})"
        )
    vol = arrs["vol"][0]
    if not np.all(np.isfinite(vol)):
        bad = int(np.argmin(np.isfinite(vol)))
        raise RuntimeError(
            f"non-finite vol value at node {bad} (t={grid.nodes[bad]:.6g})"
        )
    z = arrs["z"][0] if arrs["z"] is not None else np.empty(0)
    return PathBundle(
        grid=grid,
        w_prime=arrs["w_prime"][0],
        b=arrs["b"][0],
        z=z,
        vol=vol,
        asset=asset,
        antithetic=antithetic,
    )


def averages(bundle: PathBundle):
    """(arithmetic, geometric) averages over all m+1 asset nodes."""
    asset = bundle.asset
    arith = float(asset.mean())
    geom = float(np.exp(np.mean(np.log(asset))))
    return arith, geom


def forward_diagnostics(bundle: PathBundle) -> ForwardState:
    """Running-average mix M_i, proxy vol phi_i, and their aggregates.

    With weights w_i = (m-i)/m (exact in floating point for i = 0 they
    give w_0 = 1, so M_0 = s0 and phi_0 equals the spot vol identically):
        M_i   = (1/m) sum_{j<i} S_j + w_i S_i
        phi_i = sigma_i * w_i S_i / M_i
        v0    = sqrt((1/m) sum_{i<m} phi_i^2)
        a_T   = M_m = (1/m) sum_{j<m} S_j.
    Since M_i >= w_i S_i term by term, phi_i <= sigma_i holds in floating
    point as well.
    """
    asset = bundle.asset
    vol = bundle.vol
    m = bundle.grid.steps
    m_path = np.empty(m + 1)
    phi_path = np.empty(m + 1)
    run = 0.0
    for i in range(m + 1):
        w_i = (m - i) / m
        m_path[i] = run / m + w_i * asset[i]
        phi_path[i] = vol[i] * (w_i * asset[i]) / m_path[i]
        run += asset[i]
    v0 = float(np.sqrt(np.mean(phi_path[:m] ** 2)))
    return ForwardState(
        m_path=m_path, phi_path=phi_path, v0=v0, a_T=float(m_path[m])
    )
