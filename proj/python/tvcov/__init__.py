"""Time-varying high-dimensional covariance estimation."""

from ._core import (
    DataError,
    Error,
    NumericError,
    ParameterError,
    backtest,
    boundary_weights,
    epanechnikov,
    estimate,
    gmv_weights,
    interior_region,
    monte_carlo,
    rate_delta,
    rate_omega,
    run_cli,
    simulate,
    soft_threshold,
)

__all__ = [
    "DataError",
    "Error",
    "NumericError",
    "ParameterError",
    "backtest",
    "boundary_weights",
    "epanechnikov",
    "estimate",
    "gmv_weights",
    "interior_region",
    "monte_carlo",
    "rate_delta",
    "rate_omega",
    "run_cli",
    "simulate",
    "soft_threshold",
]
__version__ = "0.1.0"
