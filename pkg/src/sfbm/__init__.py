"""Simulation and inference for small-noise slow-fast systems driven by
fractional Brownian motion.

Layout: exact fBm synthesis and filter constants (`fbm`), the slow-fast
Euler-Maruyama simulator (`simulate`), built-in reference models (`models`),
averaged dynamics and fluctuation covariances (`averaging`), Hurst estimation
(`hurst`), drift estimation and asymptotic variances (`drift`), and the Monte
Carlo harness (`experiment`).
"""

from .averaging import (
    AveragedSystem,
    FundamentalMatrixCache,
    OdeSolution,
    fluctuation_covariance,
    fundamental_matrix,
    invariant_average,
    solve_averaged_ode,
    theta_sensitivity,
)
from .drift import (
    ContrastEvaluation,
    DriftEstimate,
    MinimumContrastDrift,
    TrajectoryFitDrift,
    VarianceComparison,
    XiMatrix,
    build_xi,
    estimate_mce,
    estimate_tfe,
    mce_contrast,
    mce_variance,
    tfe_contrast,
    tfe_variance,
    tfe_variance_limit,
    variance_comparison,
)
from ._optim import (
    MultistartResult,
    OptimizationError,
    OptimizerConfig,
    minimize_box,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    emit,
    load_config,
    run_experiment,
    summarize,
    theoretical_sds,
    validate_config,
)
from .fbm import (
    FbmPath,
    fbm_covariance,
    rho,
    rho_tilde,
    sample_fbm,
    sigma1_sq,
    sigma2_sq,
    sigma_factor,
    sigma_star_sq,
    sigma_star_star_sq,
    theoretical_sd_h1,
    theoretical_sd_h2,
)
from .hurst import (
    FilteredQVHurst,
    HurstEstimate,
    ScaleRatioHurst,
    estimate_h1,
    estimate_h2,
    normalized_qv,
    phi,
    phi_inverse,
    second_order_filter,
)
from .models import (
    constant_sigma_averaged,
    constant_sigma_model,
    get_averaged,
    get_model,
    variable_sigma_averaged,
    variable_sigma_model,
)
from .simulate import (
    ObservationSeries,
    SimConfig,
    SimulationError,
    SlowFastModel,
    euler_maruyama,
    read_observations,
    subsample,
    write_observations,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedSystem",
    "ContrastEvaluation",
    "DriftEstimate",
    "ExperimentConfig",
    "ExperimentResult",
    "FbmPath",
    "FilteredQVHurst",
    "FundamentalMatrixCache",
    "HurstEstimate",
    "MinimumContrastDrift",
    "MultistartResult",
    "ObservationSeries",
    "OdeSolution",
    "OptimizationError",
    "OptimizerConfig",
    "ScaleRatioHurst",
    "SimConfig",
    "SimulationError",
    "SlowFastModel",
    "TrajectoryFitDrift",
    "VarianceComparison",
    "XiMatrix",
    "build_xi",
    "constant_sigma_averaged",
    "constant_sigma_model",
    "emit",
    "estimate_h1",
    "estimate_h2",
    "estimate_mce",
    "estimate_tfe",
    "euler_maruyama",
    "fbm_covariance",
    "fluctuation_covariance",
    "fundamental_matrix",
    "get_averaged",
    "get_model",
    "invariant_average",
    "load_config",
    "mce_contrast",
    "mce_variance",
    "minimize_box",
    "normalized_qv",
    "phi",
    "phi_inverse",
    "read_observations",
    "rho",
    "rho_tilde",
    "run_experiment",
    "sample_fbm",
    "second_order_filter",
    "sigma1_sq",
    "sigma2_sq",
    "sigma_factor",
    "sigma_star_sq",
    "sigma_star_star_sq",
    "solve_averaged_ode",
    "subsample",
    "summarize",
    "tfe_contrast",
    "tfe_variance",
    "tfe_variance_limit",
    "theoretical_sd_h1",
    "theoretical_sd_h2",
    "theoretical_sds",
    "theta_sensitivity",
    "validate_config",
    "variable_sigma_averaged",
    "variable_sigma_model",
    "variance_comparison",
    "write_observations",
]
