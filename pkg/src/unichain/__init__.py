"""Analysis of finite unichain Markov reward processes.

Stationary distributions, mean first passage times, bias vectors (by a
direct Poisson-equation solve and by a mean-first-passage-time formula),
Kemeny's constant, stationary-distribution perturbation bounds, and a
seeded Monte Carlo engine that validates the finite-horizon
concentration behavior of accumulated rewards.
"""

__version__ = "0.1.0"

from .bias import (
    BiasVector,
    bias_from_passage,
    bias_span,
    check_diameter_bound,
    poisson_residual,
    poisson_solve,
    to_canonical,
    to_centered,
)
from .errors import (
    ConstancyViolation,
    DimensionMismatch,
    InfeasibleRequest,
    NegativeEntry,
    NotSquare,
    NotUnichain,
    ParseError,
    PropertyViolation,
    RewardOutOfRange,
    RowSumViolation,
    SingularSystem,
    TooLarge,
    UnichainError,
)
from .mcsim import (
    Lemma1Outcome,
    TrajectoryStats,
    lemma1_check,
    lemma1_violation_rate,
    rho_convergence_check,
    simulate,
    simulate_batch,
    simulate_hitting_time,
)
from .model import (
    ChainModel,
    MrpModel,
    StateStructure,
    classify_states,
    generate_perturbation,
    generate_random_unichain,
    load_model,
    save_model,
    validate_chain,
)
from .passage import (
    KemenyResult,
    PassageMatrix,
    diameter,
    first_passage_matrix,
    kemeny,
    return_time_check,
)
from .perturb import (
    PerturbationReport,
    average_reward_deviation,
    bias_span_bound,
    build_report,
    cho_meyer_bound,
    corollary_subset_bound,
    hunter_bound,
    matrix_inf_norm,
)
from .solve import (
    LimitingDistribution,
    StationaryDistribution,
    average_reward,
    limiting_distribution,
    stationary,
)

__all__ = [name for name in dir() if not name.startswith("_")]
