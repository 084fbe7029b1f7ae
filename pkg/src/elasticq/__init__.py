"""Capacity planning for a fixed server block plus auto-scaled instances.

Exact stationary analysis of a finite-capacity FCFS system whose dynamic
servers power on with a setup delay and off instantly, a dense elimination
oracle for validation, cost-driven selection of the instance count, and a
cross-validating discrete-event simulator.
"""

from .model import (
    NumericalFaultError,
    OracleSizeError,
    ParamsMismatchError,
    PerformanceMetrics,
    StateDomainError,
    StateSpace,
    StationaryDistribution,
    SystemParams,
    ValidationError,
    build_state_space,
    setup_count,
)
from .optimizer import (
    CostSpec,
    KScan,
    OptimizationResult,
    argmin_k,
    cost,
    linear_cost,
    select_k_threshold,
)
from .simulator import (
    ComparisonReport,
    DistributionSpec,
    SimConfig,
    SimulationResult,
    compare,
    simulate,
    simulate_once,
)
from .solver import (
    RecursionCoefficients,
    SolveReport,
    boundary_mass,
    compute_metrics,
    dense_oracle,
    max_balance_residual,
    solve,
    solve_level,
    solve_level0,
)

__version__ = "0.1.0"

__all__ = [
    "ComparisonReport",
    "CostSpec",
    "DistributionSpec",
    "KScan",
    "NumericalFaultError",
    "OptimizationResult",
    "OracleSizeError",
    "ParamsMismatchError",
    "PerformanceMetrics",
    "RecursionCoefficients",
    "SimConfig",
    "SimulationResult",
    "SolveReport",
    "StateDomainError",
    "StateSpace",
    "StationaryDistribution",
    "SystemParams",
    "ValidationError",
    "argmin_k",
    "boundary_mass",
    "build_state_space",
    "compare",
    "compute_metrics",
    "cost",
    "dense_oracle",
    "linear_cost",
    "max_balance_residual",
    "select_k_threshold",
    "setup_count",
    "simulate",
    "simulate_once",
    "solve",
    "solve_level",
    "solve_level0",
]
