"""Privacy of step inputs to LTI systems under Gaussian measurement noise."""

from .bound import BoundResult, EmptyTauRange, a_tilde, bound, bound_oracle, s_matrices, s_matrix
from .directions import (
    DirectionResult,
    ZeroDirection,
    fully_private_directions,
    input_observability,
    most_private_direction,
    verify_zero_direction,
)
from .lti import ShapeError, StepScenario, SystemModel, Unstable, simulate_noiseless, simulate_noisy, steady_state
from .montecarlo import TrialReport, ml_change_time, run_trials
from .numerics import (
    TOL,
    EigenDecomposition,
    NotPositiveDefinite,
    NotSymmetric,
    NumericalError,
    Singular,
    cholesky,
    rank_and_nullspace,
    solve_linear,
    sym_eig,
)
from .tradeoff import (
    AlreadyFullyPrivate,
    Infeasible,
    SteadyStateProgram,
    TradeoffReport,
    mu_for_budget,
    solve_nominal,
    solve_private,
    tradeoff_report,
)

__version__ = "0.1.0"
