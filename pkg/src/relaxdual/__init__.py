"""Distributed optimization with a coupling constraint via relaxed dual decomposition."""

from .coordinator import AgentState, RoundLog, StepSize, init, run, validate_stepsize
from .errors import (
    ConfigError,
    ConnectivityFailure,
    DimensionMismatch,
    InvalidSize,
    NegativeSlack,
    NonConvergence,
    RelaxDualError,
    TooLarge,
)
from .graph import DirectedEdgeIndex, Graph, complete, erdos_renyi, is_connected, ring
from .local_solver import LocalSolution, SolverSettings, inner_min, solve_relaxed_local
from .oracle import OracleResult, check_m_bound, solve_dual_centralized, solve_grid
from .problem import (
    CoupledProblem,
    FunctionLocal,
    LocalProblem,
    QuadBoxLinearLocal,
    eval_cost,
    eval_coupling,
    eval_relaxed_cost,
    paper_instance,
    slater_check,
)

__version__ = "0.1.0"
