"""End-to-end validation suite.

Each test here is one externally stated target for the library, checked at
its stated tolerance and wall-clock budget: Monte Carlo estimates against
the short-maturity closed forms, the quadrature against the algebraic
brackets, the implied-vol round trip at the resolution float64 admits, the
joint Gaussian sampler against its analytic covariance, and the pricing
proxy against full Monte Carlo over a randomized parameter population.

Seeds are fixed so every number below is reproducible bit-for-bit; the
printed lines show the measured values next to their tolerances.
"""

import math
import time

import numpy as np
import pytest

from asianvol.asymptotics import (
    atm_level,
    atm_skew_closed,
    atm_skew_general,
    local_vol_smile,
)
from asianvol.black import BsQuote, IvBoundError, bs_price, bs_vega, implied_vol
from asianvol.lab import (
    ExperimentPlan,
    estimate_atm_iv,
    estimate_skew_fd,
    run_experiment,
)
from asianvol.mc import McConfig, price_asian
from asianvol.models import (
    ConstantVol,
    FractionalBergomi,
    MarketSetup,
    Sabr,
    cev_local_vol,
    skew_kernel,
)
from asianvol.paths import GaussianDriver, TimeGrid, joint_covariance, sample_joint_gaussian

ONE_DAY = 1.0 / 252.0


# ---------------------------------------------------------------------------
# closed forms and quadrature (sub-second targets)
# ---------------------------------------------------------------------------


def test_rough_limit_constant_matches_quadrature():
    # limit-mode quadrature for the rough kernel (H=0.4, v=0.5, rho=-0.3)
    # must reproduce the closed-form constant -0.028690 within 1e-6, in <1s
    t0 = time.perf_counter()
    market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY, rho=-0.3)
    model = FractionalBergomi(sigma0=0.3, v=0.5, hurst=0.4)
    ker = skew_kernel(model, market)
    q = atm_skew_general(0.3, -0.3, ker, 0.01, mode="limit")
    elapsed = time.perf_counter() - t0
    err = abs(q.skew - -0.028690)
    print(f"limit constant={q.skew:.9f} target=-0.028690 |err|={err:.2e} [{elapsed:.3f}s]")
    assert q.scaled and q.scaling_exponent == pytest.approx(-0.1)
    assert err < 1e-6
    assert elapsed < 1.0


def test_skew_bracket_is_maturity_invariant_for_sabr():
    # the finite-maturity bracket for a non-singular kernel has no T
    # dependence: quadrature at T in {1, 1e-2, 1e-4} agrees with the
    # closed form sqrt(3)*rho*alpha/5 + sqrt(3)*sigma0/30 within 1e-12, <1s
    t0 = time.perf_counter()
    market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY, rho=-0.3)
    model = Sabr(sigma0=0.5, alpha=0.5)
    closed = atm_skew_closed(model, market).skew
    ker = skew_kernel(model, market)
    worst = 0.0
    for t in (1.0, 1e-2, 1e-4):
        q = atm_skew_general(0.5, -0.3, ker, t, mode="finite")
        worst = max(worst, abs(q.skew - closed))
    elapsed = time.perf_counter() - t0
    print(f"closed={closed:.15f} worst quadrature gap={worst:.2e} [{elapsed:.3f}s]")
    assert worst < 1e-12
    assert elapsed < 1.0


def test_local_vol_skew_equals_smile_slope():
    # the closed-form local-vol skew must equal the slope of the first-order
    # smile within 1e-12, and collapse to the flat-vol value when sigma'=0
    t0 = time.perf_counter()
    market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY, rho=1.0)
    model = cev_local_vol(nu=0.3, beta=0.5)
    closed = atm_skew_closed(model, market).skew
    # the smile is affine in log-moneyness, so a unit difference is its slope
    slope = local_vol_smile(model, market, 1.0) - local_vol_smile(model, market, 0.0)
    gap = abs(closed - slope)

    from asianvol.models import LocalVol

    flat = LocalVol(sigma_fn=lambda s: s * 0 + 0.3, sigma_deriv_fn=lambda s: s * 0.0)
    flat_skew = atm_skew_closed(flat, market).skew
    const_skew = atm_skew_closed(ConstantVol(sigma=0.3), market).skew
    elapsed = time.perf_counter() - t0
    print(
        f"closed={closed:.9f} (~-0.010955) smile slope gap={gap:.2e} "
        f"flat reduction exact={flat_skew == const_skew} [{elapsed:.3f}s]"
    )
    assert abs(closed - -0.010955) < 1e-6
    assert gap < 1e-12
    assert flat_skew == const_skew
    assert elapsed < 1.0


def test_implied_vol_round_trip_across_the_grid():
    # sigma in {0.05..1.00 step 0.05} x tau in {1/252, 0.1, 1, 2} x
    # moneyness in {-0.1, 0, 0.1}: round-trip error < 1e-8 wherever the
    # float64 price carries that much information, in <5s.  Six in-the-money
    # cells do not: four prices round exactly to intrinsic (the solver's
    # contract is IvBoundError), and in two the error is bounded by the
    # price quantization 0.5*ulp(price)/vega rather than 1e-8.
    collapse_cells = {(0.05, ONE_DAY, 0.1), (0.1, ONE_DAY, 0.1),
                      (0.15, ONE_DAY, 0.1), (0.2, ONE_DAY, 0.1)}
    quantized_cells = {(0.05, 0.1, 0.1), (0.25, ONE_DAY, 0.1)}
    t0 = time.perf_counter()
    n_ok, n_collapsed, n_quantized = 0, 0, 0
    worst = 0.0
    for i in range(1, 21):
        sig = round(0.05 * i, 2)
        for tau in (ONE_DAY, 0.1, 1.0, 2.0):
            for dx in (-0.1, 0.0, 0.1):
                price = bs_price(BsQuote(dx, 0.0, tau, sig))
                try:
                    iv = implied_vol(price, dx, 0.0, tau)
                except IvBoundError:
                    assert (sig, tau, dx) in collapse_cells, (sig, tau, dx)
                    assert price == math.exp(dx) - 1.0  # intrinsic exactly
                    n_collapsed += 1
                    continue
                err = abs(iv - sig)
                if err < 1e-8:
                    n_ok += 1
                    worst = max(worst, err)
                else:
                    assert (sig, tau, dx) in quantized_cells, (sig, tau, dx)
                    qlim = 0.5 * math.ulp(price) / bs_vega(dx, 0.0, tau, sig)
                    assert err <= qlim, (sig, tau, dx, err, qlim)
                    assert qlim < 2e-7
                    n_quantized += 1
    elapsed = time.perf_counter() - t0
    print(
        f"{n_ok}/240 cells < 1e-8 (worst {worst:.2e}); {n_collapsed} at the "
        f"intrinsic bound; {n_quantized} at the quantization floor [{elapsed:.3f}s]"
    )
    assert n_ok == 234 and n_collapsed == 4 and n_quantized == 2
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# sampler and estimator statistics
# ---------------------------------------------------------------------------


def test_joint_gaussian_sampler_covariance():
    # 10-step grid, H in {0.4, 0.7}, 1e5 samples: every entry of the
    # sampled (W', Z) second-moment matrix within 5 sample stderr of the
    # analytic covariance, in <60s
    t0 = time.perf_counter()
    grid = TimeGrid(maturity=1.0, steps=10)
    n = 100_000
    worst = 0.0
    for h in (0.4, 0.7):
        target = joint_covariance(grid, h)
        wp, z = sample_joint_gaussian(grid, h, GaussianDriver(404), n_samples=n)
        x = np.hstack([wp, z])
        for i in range(20):
            prod = x[:, i, None] * x  # (n, 20) products against column i
            mean = prod.mean(axis=0)
            se = prod.std(axis=0, ddof=1) / math.sqrt(n)
            zscores = np.abs(mean - target[i]) / se
            worst = max(worst, float(zscores.max()))
    elapsed = time.perf_counter() - t0
    print(f"max |z| over both H = {worst:.2f} (limit 5) [{elapsed:.1f}s]")
    assert worst < 5.0
    assert elapsed < 60.0


def test_variance_reduction_halves_stderr():
    # constant vol 0.3, one-day maturity, 2e5 samples: the combined
    # control-variate + antithetic estimator must beat plain by 2x, <60s
    t0 = time.perf_counter()
    market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY)
    model = ConstantVol(sigma=0.3)
    plain = price_asian(model, market, McConfig(200_000, 500, 7, "plain"))
    cva = price_asian(model, market, McConfig(200_000, 500, 7, "cv_antithetic"))
    elapsed = time.perf_counter() - t0
    ratio = cva.stderr / plain.stderr
    print(f"stderr plain={plain.stderr:.3e} cv_anti={cva.stderr:.3e} "
          f"ratio={ratio:.4f} (limit 0.5) [{elapsed:.1f}s]")
    assert cva.stderr <= 0.5 * plain.stderr
    assert elapsed < 60.0


def test_average_is_a_martingale_under_every_model():
    # strike 0 pays the average itself, whose expectation is s0; each model
    # family must reproduce it within 3 stderr at 1e5 samples, <60s
    t0 = time.perf_counter()
    market = MarketSetup(s0=100.0, strike=0.0, maturity=1.0, rho=-0.3)
    models = {
        "const": ConstantVol(sigma=0.3),
        "sabr": Sabr(sigma0=0.5, alpha=0.5),
        "fbergomi": FractionalBergomi(sigma0=0.3, v=0.5, hurst=0.4),
        "localvol-cev": cev_local_vol(nu=3.0, beta=0.5),
    }
    zs = {}
    for name, model in models.items():
        est = price_asian(model, market, McConfig(100_000, 100, 11, "plain"))
        zs[name] = abs(est.mean - 100.0) / est.stderr
        assert abs(est.mean - 100.0) < 3.0 * est.stderr, (name, est)
    elapsed = time.perf_counter() - t0
    line = " ".join(f"{k}:z={v:.2f}" for k, v in zs.items())
    print(f"{line} (limit 3) [{elapsed:.1f}s]")
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# Monte Carlo vs short-maturity theory
# ---------------------------------------------------------------------------


def test_atm_iv_converges_to_level_constant_vol():
    # one-day ATM implied vol vs sigma/sqrt(3) for four vol levels,
    # tolerance max(3 iv_stderr, 0.5% relative), 2e5 cv_antithetic samples,
    # all four in <60s
    t0 = time.perf_counter()
    for sig in (0.1, 0.3, 0.6, 1.0):
        market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY)
        cfg = McConfig(200_000, 500, 7, "cv_antithetic")
        point = estimate_atm_iv(ConstantVol(sigma=sig), market, cfg)
        target = atm_level(sig)
        tol = max(3.0 * point.iv_stderr, 0.005 * target)
        err = abs(point.iv - target)
        print(f"sigma={sig}: iv={point.iv:.8f} target={target:.8f} "
              f"|err|={err:.2e} tol={tol:.2e}")
        assert err < tol, (sig, point)
    elapsed = time.perf_counter() - t0
    print(f"[{elapsed:.1f}s]")
    assert elapsed < 60.0


def test_atm_skew_converges_constant_vol():
    # finite-difference ATM skew vs sigma*sqrt(3)/30 for the same four vol
    # levels, tolerance max(3 stderr, 15%), in <90s
    t0 = time.perf_counter()
    for sig in (0.1, 0.3, 0.6, 1.0):
        market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY)
        cfg = McConfig(200_000, 500, 7, "cv_antithetic")
        est = estimate_skew_fd(ConstantVol(sigma=sig), market, cfg, dk=0.001)
        target = sig * math.sqrt(3.0) / 30.0
        tol = max(3.0 * est.stderr, 0.15 * target)
        err = abs(est.slope - target)
        print(f"sigma={sig}: skew={est.slope:.6f} target={target:.6f} "
              f"|err|={err:.2e} tol={tol:.2e}")
        assert err < tol, (sig, est)
    elapsed = time.perf_counter() - t0
    print(f"[{elapsed:.1f}s]")
    assert elapsed < 90.0


def test_atm_skew_converges_sabr():
    # negatively correlated lognormal vol: skew vs the closed bracket,
    # tolerance max(3 stderr, 15%), 5e5 antithetic samples, <120s
    t0 = time.perf_counter()
    market = MarketSetup(s0=10.0, strike=10.0, maturity=ONE_DAY, rho=-0.3)
    model = Sabr(sigma0=0.5, alpha=0.5)
    target = atm_skew_closed(model, market).skew
    assert abs(target - -0.0230940) < 1e-7
    cfg = McConfig(500_000, 100, 13, "antithetic")
    est = estimate_skew_fd(model, market, cfg, dk=0.001)
    elapsed = time.perf_counter() - t0
    tol = max(3.0 * est.stderr, 0.15 * abs(target))
    err = abs(est.slope - target)
    print(f"skew={est.slope:.6f} target={target:.7f} |err|={err:.2e} "
          f"tol={tol:.2e} [{elapsed:.1f}s]")
    assert err < tol
    assert elapsed < 120.0


def test_atm_level_is_hurst_free():
    # at T=0.001 the rough (H=0.4) and smooth (H=0.7) implied vols must be
    # statistically indistinguishable (within 2 combined stderr) and both
    # within max(3 stderr, 1%) of sigma0/sqrt(3); 2e5 samples each, <120s
    t0 = time.perf_counter()
    market = MarketSetup(s0=10.0, strike=10.0, maturity=0.001, rho=-0.3)
    target = atm_level(0.3)
    points = {}
    for h in (0.4, 0.7):
        model = FractionalBergomi(sigma0=0.3, v=0.5, hurst=h)
        cfg = McConfig(200_000, 100, 21, "antithetic")
        points[h] = estimate_atm_iv(model, market, cfg)
        err = abs(points[h].iv - target)
        tol = max(3.0 * points[h].iv_stderr, 0.01 * target)
        print(f"H={h}: iv={points[h].iv:.8f} target={target:.8f} "
              f"|err|={err:.2e} tol={tol:.2e}")
        assert err < tol, (h, points[h])
    gap = abs(points[0.4].iv - points[0.7].iv)
    combined = math.hypot(points[0.4].iv_stderr, points[0.7].iv_stderr)
    elapsed = time.perf_counter() - t0
    print(f"|iv(0.4)-iv(0.7)|={gap:.2e} vs 2*combined={2 * combined:.2e} "
          f"[{elapsed:.1f}s]")
    assert gap < 2.0 * combined
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# proxy pricer vs Monte Carlo over a parameter population
# ---------------------------------------------------------------------------


def test_proxy_error_table_sabr(tmp_path):
    # 200 random SABR parameter sets (sigma0~U(0.2,0.8), vov~U(0.3,1.5),
    # rho~U(-0.9,0.9)), maturities {0.01,...,2}, strikes 90..125, 1e5
    # samples per cell: at (T=0.01, K=100=S0) the median relative proxy
    # error must be below 1.5% and be the smallest entry of the K=100 row
    # across maturities; full table in <20min
    t0 = time.perf_counter()
    out = tmp_path / "proxy_table.csv"
    plan = ExperimentPlan(
        kind="proxy_error_table",
        model={"family": "sabr"},
        market={"s0": 100.0},
        mc=McConfig(n_paths=100_000, steps=100, seed=2024, estimator="antithetic"),
        out=str(out),
        grid={
            "n_samples": 200,
            "maturities": [0.01, 0.1, 0.5, 1.0, 2.0],
            "strikes": [90.0, 95.0, 100.0, 105.0, 110.0, 115.0, 120.0, 125.0],
        },
    )
    run_experiment(plan)
    elapsed = time.perf_counter() - t0

    import csv

    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 40
    atm_by_t = {
        float(r["maturity"]): float(r["err_median_pct"])
        for r in rows
        if float(r["strike"]) == 100.0
    }
    atm_short = atm_by_t[0.01]
    print("K=100 median err% by maturity: "
          + " ".join(f"T={t}:{e:.3f}" for t, e in sorted(atm_by_t.items()))
          + f" [{elapsed:.0f}s]")
    assert atm_short < 1.5
    assert atm_short == min(atm_by_t.values())
    assert all(int(r["n_valid"]) == 200 for r in rows if float(r["strike"]) == 100.0)
    assert elapsed < 1200.0
