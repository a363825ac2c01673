"""Market/contract data and the volatility models.

Four model families share the asset dynamics dS_t = sigma_t * S_t * dW_t
(zero rates) with W = rho*W' + sqrt(1-rho^2)*B:

* ConstantVol      sigma_t = sigma
* Sabr             sigma_t = sigma0 * exp(alpha*W'_t - alpha^2*t/2)
* FractionalBergomi  sigma_t^2 = sigma0^2 * exp(v*sqrt(2H)*Z_t - v^2*t^{2H}/2),
                   Z_t = int_0^t (t-s)^{H-1/2} dW'_s
* LocalVol         sigma_t = sigma(S_t), with sigma' supplied analytically

Each model exposes its spot volatility and the deterministic skew kernel
(r, u) -> E[D_r^{W'} sigma_u] that the short-maturity skew functional
integrates against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union


@dataclass(frozen=True)
class MarketSetup:
    """Contract and correlation data: spot, strike, maturity, rho. Rates are zero."""

    s0: float
    strike: float
    maturity: float
    rho: float = 0.0

    def __post_init__(self) -> None:
        if not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")
        if not self.strike >= 0:
            # strike 0 is admitted as the degenerate forward contract
            # (payoff = the average itself), useful for martingale checks
            raise ValueError(f"strike must be >= 0, got {self.strike}")
        if not self.maturity > 0:
            raise ValueError(f"maturity must be > 0, got {self.maturity}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [-1, 1], got {self.rho}")

    @property
    def rate(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ConstantVol:
    """Flat volatility. sigma = 0 is allowed (deterministic path edge case)."""

    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class Sabr:
    """Lognormal stochastic volatility: sigma_t = sigma0*exp(alpha*W'_t - alpha^2 t/2)."""

    sigma0: float
    alpha: float

    def __post_init__(self) -> None:
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class FractionalBergomi:
    """Riemann-Liouville fractional volatility.

    sigma_t^2 = sigma0^2 * exp(v*sqrt(2H)*Z_t - v^2 t^{2H}/2) where Z is the
    Riemann-Liouville process driven by W'.  The exponent compensates
    Var(v*sqrt(2H)*Z_t) = v^2 t^{2H}, so sigma_t^2 is a (non-martingale)
    process with E[sigma_t^2] = sigma0^2.
    """

    sigma0: float
    v: float
    hurst: float

    def __post_init__(self) -> None:
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.v < 0:
            raise ValueError(f"v must be >= 0, got {self.v}")
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"hurst must be in (0, 1), got {self.hurst}")


@dataclass(frozen=True)
class LocalVol:
    """State-dependent volatility sigma(S) with an analytic derivative.

    sigma_deriv_fn must be the exact derivative of sigma_fn; no numerical
    differentiation happens downstream, so a mismatched pair silently
    corrupts the skew formulas.  Handles must be pure and re-entrant.
    """

    sigma_fn: Callable[[float], float]
    sigma_deriv_fn: Callable[[float], float] = field(compare=False)

    def __post_init__(self) -> None:
        if not callable(self.sigma_fn) or not callable(self.sigma_deriv_fn):
            raise ValueError("LocalVol requires callable sigma_fn and sigma_deriv_fn")


ModelSpec = Union[ConstantVol, Sabr, FractionalBergomi, LocalVol]


def cev_local_vol(nu: float, beta: float) -> LocalVol:
    """CEV parameterisation sigma(S) = nu * S^(beta-1), the CLI's local-vol model."""
    if not nu > 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    return LocalVol(
        sigma_fn=lambda s: nu * s ** (beta - 1.0),
        sigma_deriv_fn=lambda s: nu * (beta - 1.0) * s ** (beta - 2.0),
    )


@dataclass(frozen=True)
class SkewKernel:
    """The kernel (r, u) -> E[D_r^{W'} sigma_u], r <= u, with its singularity order.

    eval(r, u) = smooth(r, u) * (u-r)^(exponent - 1/2); the smooth factor is
    bounded as u -> r, so Gauss-Jacobi quadrature with weight
    (u-r)^(exponent-1/2) integrates the kernel without losing accuracy at the
    diagonal.  Constant kernels carry exponent = 1/2 (no singularity).
    """

    exponent: float
    smooth: Callable[[float, float], float] = field(compare=False)

    def eval(self, r: float, u: float) -> float:
        if r > u:
            raise ValueError(f"kernel requires r <= u, got r={r} > u={u}")
        p = self.exponent - 0.5
        if p == 0.0:
            return self.smooth(r, u)
        return self.smooth(r, u) * (u - r) ** p


def spot_vol(model: ModelSpec, market: MarketSetup | None = None) -> float:
    """Volatility at t=0.  LocalVol needs the market for sigma_fn(s0)."""
    if isinstance(model, ConstantVol):
        return model.sigma
    if isinstance(model, (Sabr, FractionalBergomi)):
        return model.sigma0
    if isinstance(model, LocalVol):
        if market is None:
            raise ValueError("spot_vol for LocalVol needs a MarketSetup (for s0)")
        return float(model.sigma_fn(market.s0))
    raise TypeError(f"unknown model {model!r}")


def skew_kernel(model: ModelSpec, market: MarketSetup) -> SkewKernel:
    """Leading-order E[D_r^{W'} sigma_u] per model.

    ConstantVol -> 0.  Sabr -> alpha*sigma0 (constant: D_r sigma_u =
    alpha*sigma_u and E[sigma_u] = sigma0 by the lognormal martingale
    property).  FractionalBergomi -> exp(-v^2 u^{2H}/8) * (sigma0*v*sqrt(2H)/2)
    * (u-r)^{H-1/2}.  LocalVol -> sigma'(S0)*sigma(S0)*S0 (leading term only;
    used with rho = 1 since the volatility is driven by the asset's own
    Brownian motion).
    """
    if isinstance(model, ConstantVol):
        return SkewKernel(exponent=0.5, smooth=lambda r, u: 0.0)
    if isinstance(model, Sabr):
        c = model.alpha * model.sigma0
        return SkewKernel(exponent=0.5, smooth=lambda r, u: c)
    if isinstance(model, FractionalBergomi):
        h, v, sigma0 = model.hurst, model.v, model.sigma0
        amp = 0.5 * sigma0 * v * math.sqrt(2.0 * h)

        def smooth(r: float, u: float, _amp=amp, _h=h, _v=v) -> float:
            return math.exp(-0.125 * _v * _v * u ** (2.0 * _h)) * _amp

        return SkewKernel(exponent=h, smooth=smooth)
    if isinstance(model, LocalVol):
        s0 = market.s0
        c = float(model.sigma_deriv_fn(s0)) * float(model.sigma_fn(s0)) * s0
        return SkewKernel(exponent=0.5, smooth=lambda r, u: c)
    raise TypeError(f"unknown model {model!r}")
