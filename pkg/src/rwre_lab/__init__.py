"""Random walk in random environment: exact quenched moments and Monte Carlo limit-law checks."""

__version__ = "0.1.0"

from .environment import (
    Environment,
    LadderDecomposition,
    OmegaDistribution,
    StabilityParams,
    ladder_locations,
    log_pi,
    rho,
    sample_environment,
    sample_Q_blocks,
    solve_s,
    speed,
    w_sum,
    w_tail,
)
from .errors import (
    ConfigurationError,
    InsufficientContextError,
    NoRootError,
    NumericalError,
    PartialResultError,
    RunawayBlockError,
    RWREError,
)
from .moments import (
    BlockMoments,
    ReflectionPolicy,
    block_moments,
    conditioned_environment,
    expected_crossing,
    expected_success_time,
    laplace_bounds,
    m_extremes,
    oracle_moments,
    success_probability,
    v_k,
    variance_crossing,
)
from .walk import (
    WalkConfig,
    simulate_excursions,
    simulate_hitting_time,
    simulate_position,
)
from .limit_laws import (
    EmpiricalCDF,
    StableSpec,
    hill_estimator,
    ks_distance,
    normal_cdf,
    shifted_exp_cdf,
    stable_cdf,
    two_sample_ks,
)
from .subsequence import (
    EventReport,
    ScaleLadder,
    detect_exponential_event,
    detect_gaussian_event,
)
from .experiments import run_experiment, verify_block_exponential, verify_variance_stable
