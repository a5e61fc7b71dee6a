"""Numerical rough-path toolkit: Young and controlled rough integration,
rough lifts of fractional Brownian motion, variation seminorms, greedy
stopping times, and empirical stability analysis for Gaussian-driven
differential equations."""

__version__ = "0.1.0"

from .greedy import GreedySequence, greedy_times, greedy_times_augmented, verify_count_bounds
from .norms import (
    ControlValues,
    NormConfig,
    check_control,
    holder_seminorm,
    p_variation,
    rough_seminorm,
    young_loeve_constant,
)
from .paths import (
    BracketPath,
    GridError,
    RoughLift,
    SampledPath,
    TimeGrid,
    bracket,
    chen_defect,
    lift_piecewise_linear,
    sample_fbm,
)
from .rough import (
    ControlledPath,
    RoughLinearSystem,
    change_of_variables_check,
    controlled_seminorm,
    rough_integral,
    solution_matrix,
    solve_linear_rde,
    verify_supnorm_bound,
)
from .stability import (
    GammaAccumulator,
    SpectralData,
    StabilityFunctionals,
    StabilityReport,
    angular_log_decomposition,
    criterion_general,
    criterion_linear_young,
    check_gronwall,
    discrete_gronwall,
    lambda_A,
    local_radius,
    lyapunov_estimates,
    lyapunov_exponent,
    mc_expectation,
    run_stability_experiment,
)
from .young import BlowupError, YoungSystem, apriori_bound, check_apriori, default_h, solve_yde, young_integral

__all__ = [
    "BlowupError",
    "BracketPath",
    "ControlValues",
    "ControlledPath",
    "GammaAccumulator",
    "GreedySequence",
    "GridError",
    "NormConfig",
    "RoughLift",
    "RoughLinearSystem",
    "SampledPath",
    "SpectralData",
    "StabilityFunctionals",
    "StabilityReport",
    "TimeGrid",
    "YoungSystem",
    "angular_log_decomposition",
    "apriori_bound",
    "bracket",
    "change_of_variables_check",
    "check_apriori",
    "check_control",
    "check_gronwall",
    "chen_defect",
    "controlled_seminorm",
    "criterion_general",
    "criterion_linear_young",
    "default_h",
    "discrete_gronwall",
    "greedy_times",
    "greedy_times_augmented",
    "holder_seminorm",
    "lambda_A",
    "lift_piecewise_linear",
    "local_radius",
    "lyapunov_estimates",
    "lyapunov_exponent",
    "mc_expectation",
    "p_variation",
    "rough_integral",
    "rough_seminorm",
    "run_stability_experiment",
    "sample_fbm",
    "solution_matrix",
    "solve_linear_rde",
    "solve_yde",
    "verify_count_bounds",
    "verify_supnorm_bound",
    "young_integral",
    "young_loeve_constant",
]
