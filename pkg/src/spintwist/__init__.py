"""Collective-spin squeezing and adaptive multi-ensemble phase estimation."""

__version__ = "0.1.0"

from .analytic import (
    RecursionState,
    TwistedGaussianMoments,
    chi_pattern,
    chi_star_unrotated,
    s2_pattern,
    solve_state1,
    solve_state3,
    tg_moments,
    tg_recursion,
    weakly_ng_optimum,
)
from .estimator import (
    EnsembleSpec,
    EstimationResult,
    MonteCarloConfig,
    ProtocolSpec,
    allocate_ensembles,
    build_protocol,
    conditional_outcome_dist,
    error_exact,
    error_monte_carlo,
    error_operator,
    optimize_last_ensemble,
)
from .fitting import PowerLawFit, SigmoidExpFit, nu_vs_sigma, powerlaw_fit, sigmoid_exp_fit
from .moments import (
    MomentSet,
    compute_moments,
    kurtosis,
    min_variance_angle,
    min_xi2,
    rotated_xibar2,
    wineland_xi2,
)
from .robustness import (
    FeedbackNoise,
    NumberDistribution,
    contrast_adjusted_xi2,
    feedback_error,
    number_fluctuation_xi2,
)
from .schedule import (
    ScalingExponents,
    TwistSchedule,
    build_schedule,
    kurtosis_sweep,
    prepare_state,
    table_exponents,
)
from .spinstate import (
    CollectiveState,
    apply_rotation,
    apply_twist,
    coherent_x,
    gss,
    husimi_q,
    measurement_distribution,
)
