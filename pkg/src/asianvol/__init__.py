"""Arithmetic Asian options under stochastic volatility: Monte Carlo
pricing with variance reduction, implied-vol extraction, and
short-maturity ATM level/skew asymptotics."""

from .backend import BACKEND
from .black import (
    BsQuote,
    IvBoundError,
    bs_price,
    bs_vega,
    geometric_asian_price,
    implied_vol,
    norm_cdf,
)
from .models import (
    ConstantVol,
    FractionalBergomi,
    LocalVol,
    MarketSetup,
    ModelSpec,
    Sabr,
    SkewKernel,
    cev_local_vol,
    skew_kernel,
    spot_vol,
)
from .paths import (
    ForwardState,
    GaussianDriver,
    PathBundle,
    Shocks,
    TimeGrid,
    averages,
    forward_diagnostics,
    joint_covariance,
    sample_joint_gaussian,
    simulate_paths,
)
from .mc import (
    ConfigurationError,
    McConfig,
    McEstimate,
    cv_coefficient,
    mc_moments,
    price_asian,
    price_asian_multi,
)
from .asymptotics import (
    AsymptoticQuote,
    ExtrapolationError,
    atm_level,
    atm_skew_closed,
    atm_skew_general,
    local_vol_smile,
    price_proxy,
    rough_skew_constant,
)
from .lab import (
    ExperimentPlan,
    IvPoint,
    SkewEstimate,
    build_model,
    estimate_atm_iv,
    estimate_skew_fd,
    fd_slope,
    load_plan,
    run_experiment,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BsQuote",
    "IvBoundError",
    "bs_price",
    "bs_vega",
    "geometric_asian_price",
    "implied_vol",
    "norm_cdf",
    "ConstantVol",
    "FractionalBergomi",
    "LocalVol",
    "MarketSetup",
    "ModelSpec",
    "Sabr",
    "SkewKernel",
    "cev_local_vol",
    "skew_kernel",
    "spot_vol",
    "ForwardState",
    "GaussianDriver",
    "PathBundle",
    "Shocks",
    "TimeGrid",
    "averages",
    "forward_diagnostics",
    "joint_covariance",
    "sample_joint_gaussian",
    "simulate_paths",
    "ConfigurationError",
    "McConfig",
    "McEstimate",
    "cv_coefficient",
    "mc_moments",
    "price_asian",
    "price_asian_multi",
    "AsymptoticQuote",
    "ExtrapolationError",
    "atm_level",
    "atm_skew_closed",
    "atm_skew_general",
    "local_vol_smile",
    "price_proxy",
    "rough_skew_constant",
    "ExperimentPlan",
    "IvPoint",
    "SkewEstimate",
    "build_model",
    "estimate_atm_iv",
    "estimate_skew_fd",
    "fd_slope",
    "load_plan",
    "run_experiment",
    "write_csv",
    "__version__",
]
