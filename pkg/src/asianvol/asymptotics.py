"""Short-maturity asymptotics of the arithmetic Asian ATM implied vol.

Level: the ATM implied vol tends to sigma0/sqrt(3).

Skew: the ATM slope in log-strike behaves, as T -> 0, like

    T^{-gamma} * [ (3*sqrt(3)*rho)/(sigma0*T^5) * II(T) + sqrt(3)*sigma0/30 ]

with gamma = min(H - 1/2, 0) and II the double integral

    II(T) = int_0^T (T-r) int_r^T (T-u)^2 kernel(r,u) du dr,

where kernel(r,u) = smooth(r,u) * (u-r)^(H-1/2) is the model's vol
sensitivity kernel (see models.skew_kernel).  For H >= 1/2 the bracket
itself converges; for H < 1/2 only the kernel term survives the scaling
and its limit is a finite constant.

Normalizing r = T*a, u = T*b turns the double integral into

    II(T) = T^(4.5+H) * Q(T),
    Q(T)  = int_0^1 (1-a) int_a^1 (1-b)^2 smooth(T*a, T*b) (b-a)^(H-1/2) db da,

so the scaled kernel term g(T) = T^(1/2-H) * (3*sqrt(3)*rho)/(sigma0*T^5) * II(T)
equals (3*sqrt(3)*rho/sigma0) * Q(T) with every power of T cancelled
analytically.  Q is evaluated with Gauss-Jacobi nodes in b (exact weight
(b-a)^(H-1/2)) and Gauss-Legendre nodes in a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import roots_jacobi, roots_legendre

from .black import BsQuote, bs_price
from .models import (
    ConstantVol,
    FractionalBergomi,
    LocalVol,
    MarketSetup,
    ModelSpec,
    Sabr,
    SkewKernel,
    skew_kernel,
    spot_vol,
)

_SQRT3 = math.sqrt(3.0)
_IV_FLOOR = 1e-6


def _level_term(sigma0: float) -> float:
    # written as sqrt(3)*sigma0/30 (not level/10) so that rho=0 results
    # reproduce the closed forms bit-for-bit
    return _SQRT3 * sigma0 / 30.0


@dataclass(frozen=True)
class AsymptoticQuote:
    """ATM level and skew asymptotics.

    scaling_exponent is min(H - 1/2, 0).  When it is negative (H < 1/2)
    the raw skew diverges like T^scaling_exponent and `skew` stores the
    scaled finite constant instead; `scaled` flags exactly that case.
    """

    level: float
    skew: float
    scaling_exponent: float
    scaled: bool

    def __post_init__(self) -> None:
        if not self.level > 0:
            raise ValueError(f"level must be > 0, got {self.level}")
        if not -0.5 < self.scaling_exponent <= 0.0:
            raise ValueError(
                f"scaling_exponent must be in (-1/2, 0], got {self.scaling_exponent}"
            )
        if self.scaled != (self.scaling_exponent < 0.0):
            raise ValueError("scaled must hold exactly when scaling_exponent < 0")

    def slope_at(self, maturity: float) -> float:
        """Reconstruct the raw ATM skew at a given maturity.

        Unscaled quotes return `skew` unchanged.  For scaled quotes whose
        `skew` holds the limit constant (atm_skew_closed, limit mode),
        the raw slope is skew * T^scaling_exponent + sqrt(3)*sigma0/30.
        Finite-mode scaled quotes already contain the scaled level term;
        de-scale those with skew * T**scaling_exponent instead.
        """
        if not self.scaled:
            return self.skew
        return self.skew * maturity ** self.scaling_exponent + self.level / 10.0


def atm_level(sigma0: float) -> float:
    """Limiting ATM implied vol sigma0/sqrt(3)."""
    if not sigma0 > 0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    return sigma0 / _SQRT3


def rough_skew_constant(hurst: float, rho: float, v: float) -> float:
    """Closed-form scaled skew constant for the rough (H < 1/2) vol kernel:
    3*sqrt(6H)*rho*v / ((H+1/2)(H+3/2)(H+5/2)(H+9/2))."""
    denom = (hurst + 0.5) * (hurst + 1.5) * (hurst + 2.5) * (hurst + 4.5)
    return 3.0 * math.sqrt(6.0 * hurst) * rho * v / denom


def atm_skew_closed(model: ModelSpec, market: MarketSetup) -> AsymptoticQuote:
    """Model-specific closed-form ATM skew asymptotics."""
    if isinstance(model, ConstantVol):
        return AsymptoticQuote(
            level=atm_level(model.sigma),
            skew=model.sigma * _SQRT3 / 30.0,
            scaling_exponent=0.0,
            scaled=False,
        )
    if isinstance(model, Sabr):
        skew = _SQRT3 * market.rho * model.alpha / 5.0 + _level_term(model.sigma0)
        return AsymptoticQuote(
            level=atm_level(model.sigma0),
            skew=skew,
            scaling_exponent=0.0,
            scaled=False,
        )
    if isinstance(model, FractionalBergomi):
        h = model.hurst
        level = atm_level(model.sigma0)
        if h > 0.5:
            return AsymptoticQuote(
                level=level,
                skew=_level_term(model.sigma0),
                scaling_exponent=0.0,
                scaled=False,
            )
        if h == 0.5:
            skew = _SQRT3 * market.rho * model.v / 10.0 + _level_term(model.sigma0)
            return AsymptoticQuote(
                level=level, skew=skew, scaling_exponent=0.0, scaled=False
            )
        return AsymptoticQuote(
            level=level,
            skew=rough_skew_constant(h, market.rho, model.v),
            scaling_exponent=h - 0.5,
            scaled=True,
        )
    if isinstance(model, LocalVol):
        s0 = market.s0
        sig = float(model.sigma_fn(s0))
        dsig = float(model.sigma_deriv_fn(s0))
        # sqrt(3)*sig/30 + sqrt(3)*s0*sig'/5, grouped so sig'=0 collapses to
        # the flat-vol skew bit-for-bit
        skew = _level_term(sig) + _SQRT3 * s0 * dsig / 5.0
        return AsymptoticQuote(
            level=atm_level(sig), skew=skew, scaling_exponent=0.0, scaled=False
        )
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _scaled_kernel_term(
    sigma0: float,
    rho: float,
    kernel: SkewKernel,
    maturity: float,
    n_inner: int,
    n_outer: int,
) -> float:
    """g(T) = (3*sqrt(3)*rho/sigma0) * Q(T) with Q the normalized double
    integral; equals T^(1/2-H) times the raw kernel term of the skew."""
    h = kernel.exponent
    beta = h - 0.5
    xa, wa = roots_legendre(n_outer)
    xb, wb = roots_jacobi(n_inner, 0.0, beta)
    a_nodes = 0.5 * (xa + 1.0)
    a_weights = 0.5 * wa
    total = 0.0
    for a, w_a in zip(a_nodes, a_weights):
        half = 0.5 * (1.0 - a)
        # b = a + (1-a)(x+1)/2; (b-a)^(H-1/2) absorbed into the Jacobi weight
        inner = 0.0
        for x, w_b in zip(xb, wb):
            b = a + half * (x + 1.0)
            inner += w_b * (1.0 - b) ** 2 * kernel.smooth(maturity * a, maturity * b)
        total += w_a * (1.0 - a) * half ** (h + 0.5) * inner
    return 3.0 * _SQRT3 * rho / sigma0 * total


class ExtrapolationError(RuntimeError):
    """Richardson limit failed to converge; carries the evaluated sequence."""

    def __init__(self, message: str, sequence):
        super().__init__(message)
        self.sequence = tuple(sequence)


def _richardson_limit(values) -> float:
    """Limit of a sequence evaluated at T, T/4, T/16, T/64.

    The residual decays geometrically in the index (a fixed power of T on
    a ratio-4 grid), so one Aitken delta-squared step on the last three
    values removes the dominant term.  Differences already at rounding
    level short-circuit to the last value; growing differences raise.
    """
    v0, v1, v2, v3 = values
    d = (v1 - v0, v2 - v1, v3 - v2)
    scale = max(1.0, abs(v3))
    tol = 1e-13 * scale
    if all(abs(x) <= tol for x in d):
        return v3
    if abs(d[1]) > abs(d[0]) + tol or abs(d[2]) > abs(d[1]) + tol:
        raise ExtrapolationError(
            f"successive differences do not shrink: {d}", values
        )
    denom = d[2] - d[1]
    if abs(denom) <= 1e-15 * scale:
        return v3
    return v3 - d[2] * d[2] / denom


def atm_skew_general(
    sigma0: float,
    rho: float,
    kernel: SkewKernel,
    maturity: float,
    mode: str = "finite",
    n_inner: int = 32,
    n_outer: int = 32,
) -> AsymptoticQuote:
    """Skew asymptotics from the generic kernel quadrature.

    finite mode evaluates the scaled bracket at the given maturity:
        T^{-gamma} * [kernel term + sqrt(3)*sigma0/30],  gamma = min(H-1/2, 0),
    which for H >= 1/2 is the bracket itself and for H < 1/2 is the
    quantity whose T -> 0 limit is the scaled constant.

    limit mode evaluates on (T, T/4, T/16, T/64) and Richardson-
    extrapolates.  The exactly known level term sqrt(3)*sigma0/30 and the
    explicit power T^{H-1/2} are handled analytically; Aitken
    delta-squared extrapolation is applied to the smooth scaled kernel
    term g(T), whose residual is a single power of T.  For H < 1/2 the
    limit is the correlated constant alone (the scaled level term
    vanishes); for H > 1/2 the kernel term vanishes instead.
    """
    if not sigma0 > 0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [-1, 1], got {rho}")
    if not maturity > 0:
        raise ValueError(f"maturity must be > 0, got {maturity}")
    if mode not in ("finite", "limit"):
        raise ValueError(f"mode must be 'finite' or 'limit', got {mode!r}")
    h = kernel.exponent
    if not 0.0 < h < 1.0:
        raise ValueError(f"kernel exponent must be in (0, 1), got {h}")
    gamma = min(h - 0.5, 0.0)
    level = atm_level(sigma0)
    lvl_term = _level_term(sigma0)

    if mode == "finite":
        g = _scaled_kernel_term(sigma0, rho, kernel, maturity, n_inner, n_outer)
        if gamma < 0.0:
            # T^{1/2-H} * (kernel term + level term); g is already scaled
            skew = g + maturity ** (-gamma) * lvl_term
        else:
            skew = g * maturity ** (h - 0.5) + lvl_term
        return AsymptoticQuote(
            level=level, skew=skew, scaling_exponent=gamma, scaled=gamma < 0.0
        )

    ts = (maturity, maturity / 4.0, maturity / 16.0, maturity / 64.0)
    gs = [
        _scaled_kernel_term(sigma0, rho, kernel, t, n_inner, n_outer) for t in ts
    ]
    g_lim = _richardson_limit(gs)
    if gamma < 0.0:
        skew = g_lim  # correlated constant only; scaled level term -> 0
    elif h == 0.5:
        skew = g_lim + lvl_term
    else:
        skew = lvl_term  # kernel term carries T^{H-1/2} -> 0
    return AsymptoticQuote(
        level=level, skew=skew, scaling_exponent=gamma, scaled=gamma < 0.0
    )


def local_vol_smile(model: LocalVol, market: MarketSetup, x: float) -> float:
    """First-order local-vol Asian smile in log-moneyness x = log(K/S0):
    (sigma(S0)/sqrt(3)) * (1 + (1/10 + 3*sigma'(S0)*S0/(5*sigma(S0))) * x)."""
    if not isinstance(model, LocalVol):
        raise TypeError("local_vol_smile requires a LocalVol model")
    s0 = market.s0
    sig = float(model.sigma_fn(s0))
    dsig = float(model.sigma_deriv_fn(s0))
    if not sig > 0:
        raise ValueError(f"sigma(S0) must be > 0, got {sig}")
    slope = 0.1 + 3.0 * dsig * s0 / (5.0 * sig)
    return sig / _SQRT3 * (1.0 + slope * x)


def price_proxy(
    model: ModelSpec,
    market: MarketSetup,
    k: float,
    skew_source: str = "closed",
) -> float:
    """Taylor-proxy price: linearize the smile at the ATM point and plug
    into Black-Scholes.

    Uses Ihat(k) = level + slope * (k - k*), k* = log s0, floored at 1e-6.
    The slope is the closed-form skew for exponent-0 models; for H < 1/2
    (or on request) it is the finite-maturity general quadrature,
    de-scaled back to a raw slope by T^scaling_exponent.
    """
    if skew_source not in ("closed", "general-at-T"):
        raise ValueError(
            f"skew_source must be 'closed' or 'general-at-T', got {skew_source!r}"
        )
    sigma0 = spot_vol(model, market)
    level = atm_level(sigma0)
    t = market.maturity
    quote = atm_skew_closed(model, market)
    if quote.scaled or skew_source == "general-at-T":
        rho_eff = 1.0 if isinstance(model, LocalVol) else market.rho
        fin = atm_skew_general(
            sigma0, rho_eff, skew_kernel(model, market), t, mode="finite"
        )
        slope = fin.skew * t ** fin.scaling_exponent
    else:
        slope = quote.skew
    k_star = math.log(market.s0)
    iv = max(level + slope * (k - k_star), _IV_FLOOR)
    return bs_price(BsQuote(x=k_star, k=k, tau=t, sigma=iv))
