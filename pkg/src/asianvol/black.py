"""Black-Scholes price/vega, implied volatility, geometric Asian closed forms.

Everything here is in log-forward coordinates with zero rates:
BS(x, k, tau, sigma) = e^x N(d+) - e^k N(d-),  d± = (x-k)/(sigma*sqrt(tau)) ± sigma*sqrt(tau)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Normal CDF via the complementary error function: N(x) = erfc(-x/sqrt(2))/2.
# math.erfc is the platform libm's minimax implementation (abs error < 1e-15
# over the real line, cf. the glibc s_erf.c rational approximations); the
# erfc form avoids cancellation in the tails that 0.5*(1+erf) would suffer.
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


@dataclass(frozen=True)
class BsQuote:
    """A Black-Scholes evaluation point (log-forward, log-strike, maturity, vol)."""

    x: float
    k: float
    tau: float
    sigma: float

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def _bs_time_value(x: float, k: float, tau: float, sigma: float) -> float:
    """Time value of the call, i.e. price minus (e^x - e^k)+.

    In-the-money quotes are evaluated through the complementary tails,
    e^k N(-d-) - e^x N(-d+), instead of e^x N(d+) - e^k N(d-): the direct form
    rounds both N() factors to 1.0 once d is a few dozen, silently collapsing
    the price to intrinsic and destroying the information an implied-vol
    round trip needs.  The tail form keeps the time value representable down
    to ~1e-300 in forward units.
    """
    srt = sigma * math.sqrt(tau)
    if srt == 0.0:
        return 0.0
    d_plus = (x - k) / srt + 0.5 * srt
    d_minus = d_plus - srt
    if x >= k:
        tv = math.exp(k) * norm_cdf(-d_minus) - math.exp(x) * norm_cdf(-d_plus)
    else:
        tv = math.exp(x) * norm_cdf(d_plus) - math.exp(k) * norm_cdf(d_minus)
    # mathematically tv > 0 for srt > 0; clamp the last-ulp cancellation case
    return tv if tv > 0.0 else 0.0


def _bs(x: float, k: float, tau: float, sigma: float) -> float:
    return max(math.exp(x) - math.exp(k), 0.0) + _bs_time_value(x, k, tau, sigma)


def bs_price(q: BsQuote) -> float:
    """Call price e^x N(d+) - e^k N(d-); the intrinsic (e^x - e^k)+ at sigma*sqrt(tau)=0.

    Evaluated as intrinsic plus time value so short-dated away-from-the-money
    quotes do not round to intrinsic (see _bs_time_value).
    """
    return _bs(q.x, q.k, q.tau, q.sigma)


def bs_vega(x: float, k: float, tau: float, sigma: float) -> float:
    """d(price)/d(sigma) = e^x n(d+) sqrt(tau)."""
    srt = sigma * math.sqrt(tau)
    if srt == 0.0:
        return 0.0
    d_plus = (x - k) / srt + 0.5 * srt
    return math.exp(x) * norm_pdf(d_plus) * math.sqrt(tau)


class IvBoundError(ValueError):
    """Price at or outside the no-arbitrage bounds, so no vol can reproduce it."""


_IV_LO = 1e-9
_IV_HI = 10.0


def implied_vol(price: float, x: float, k: float, tau: float) -> float:
    """Invert BS in sigma by a bracketed, safeguarded Newton iteration.

    The iteration runs on the log of the time value (price minus intrinsic):
    Newton steps use the analytic vega through the chain rule, and any step
    that leaves the current bracket (or a vanishing vega / underflowed time
    value) falls back to bisection, so convergence is guaranteed on
    [1e-9, 10].  The log form keeps the problem well conditioned even when
    the time value sits hundreds of orders of magnitude below the forward
    (deep in/out of the money at short maturity), where a fixed absolute
    price tolerance would accept wildly wrong vols.  Terminates once the
    Newton correction is below 1e-12 relative in sigma; the returned vol
    reprices within 1e-12 * e^x.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    intrinsic = max(math.exp(x) - math.exp(k), 0.0)
    upper = math.exp(x)
    if price <= intrinsic:
        raise IvBoundError(
            f"price {price} at or below the lower no-arbitrage bound "
            f"(e^x - e^k)+ = {intrinsic}"
        )
    if price >= upper:
        raise IvBoundError(
            f"price {price} at or above the upper no-arbitrage bound e^x = {upper}"
        )

    target = price - intrinsic  # > 0 by the bound checks above
    log_target = math.log(target)
    tol = 1e-12 * upper
    lo, hi = _IV_LO, _IV_HI
    if _bs_time_value(x, k, tau, lo) - target > 0:
        raise IvBoundError(
            f"price {price} below the bracket floor price {_bs(x, k, tau, lo)} "
            f"at sigma={lo}"
        )
    if _bs_time_value(x, k, tau, hi) - target < 0:
        raise IvBoundError(
            f"price {price} above the bracket ceiling price {_bs(x, k, tau, hi)} "
            f"at sigma={hi}"
        )

    sigma = min(max(math.sqrt(2.0 * math.pi / tau) * target / upper, lo), hi)
    f = math.nan
    for _ in range(200):
        tv = _bs_time_value(x, k, tau, sigma)
        f = tv - target
        if f > 0:
            hi = sigma
        else:
            lo = sigma
        vega = bs_vega(x, k, tau, sigma)
        if tv > 0.0 and vega > 0.0:
            # Newton on log(tv): sigma - (log tv - log target) * tv / vega
            step_size = (math.log(tv) - log_target) * tv / vega
            if abs(step_size) <= 1e-12 * sigma and abs(f) < tol:
                return sigma
            step = sigma - step_size
            sigma = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            sigma = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            return sigma
    if abs(f) < tol:
        return sigma
    raise RuntimeError(
        f"implied_vol failed to converge: price={price}, x={x}, k={k}, tau={tau}"
    )


def geometric_asian_price(market, sigma: float, mode: str = "continuous", grid=None) -> float:
    """Closed-form price of the geometric-average Asian call at constant vol.

    continuous: the average is exp((1/T) int log S_t dt), lognormal with
    vol sigma_G = sigma/sqrt(3) and mean adjustment e^{-sigma_G^2 T/4}:
        price = e^{-sigma_G^2 T/4} S0 N(d1) - K N(d2),
        d1 = (log(S0/K) + sigma_G^2 T/4) / (sigma_G sqrt(T)),  d2 = d1 - sigma_G sqrt(T).

    discrete: the (m+1)-node geometric mean G = (prod S_{t_i})^{1/(m+1)} is
    lognormal with
        E log G   = log S0 - (sigma^2/2) * (1/(m+1)) * sum t_i
        Var log G = (sigma^2/(m+1)^2) * sum_{i,j} min(t_i, t_j),
    priced by the Black formula on that lognormal.  This is the exact
    expectation of the simulated control statistic on the same grid.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    s0, strike, t = market.s0, market.strike, market.maturity
    if mode == "continuous":
        sg = sigma / math.sqrt(3.0)
        srt = sg * math.sqrt(t)
        if srt == 0.0:
            return max(s0 - strike, 0.0)
        if strike == 0.0:
            # degenerate forward on the average: both N(d) terms -> 1
            return math.exp(-0.25 * sg * sg * t) * s0
        d1 = (math.log(s0 / strike) + 0.25 * sg * sg * t) / srt
        d2 = d1 - srt
        return math.exp(-0.25 * sg * sg * t) * s0 * norm_cdf(d1) - strike * norm_cdf(d2)
    if mode == "discrete":
        if grid is None:
            raise ValueError("discrete mode requires a TimeGrid")
        nodes = grid.nodes
        n_nodes = len(nodes)
        mu = math.log(s0) - 0.5 * sigma * sigma * float(nodes.sum()) / n_nodes
        # sum_{i,j} min(t_i,t_j) over sorted nodes = sum_k t_k * (2*(m-k)+1)
        m = n_nodes - 1
        msum = 0.0
        for idx in range(n_nodes):
            msum += float(nodes[idx]) * (2.0 * (m - idx) + 1.0)
        var = sigma * sigma * msum / (n_nodes * n_nodes)
        s = math.sqrt(var)
        if strike == 0.0:
            return math.exp(mu + 0.5 * var)
        lk = math.log(strike)
        if s == 0.0:
            return max(math.exp(mu) - strike, 0.0)
        d1 = (mu - lk + var) / s
        d2 = (mu - lk) / s
        return math.exp(mu + 0.5 * var) * norm_cdf(d1) - strike * norm_cdf(d2)
    raise ValueError(f"mode must be 'continuous' or 'discrete', got {mode!r}")
