"""Age-optimal joint sampling and routing over heterogeneous, intermittently
available communication routes under an average energy budget.

The solver computes the threshold-structured optimal policy by nested
bisection around a discretization-free fixed point; the evaluator and the
Monte Carlo simulator provide two independent ways to measure any policy.
"""

from .mdp import Multipliers
from .model import (
    FixedDelay,
    GammaDelay,
    LogNormalDelay,
    NetworkSpec,
    RouteSpec,
    SpecError,
    availability_states,
    load_config,
    make_spec,
    marginal_from_moments,
    sample_delays,
    spec_from_dict,
    validate,
)
from .policy import ThresholdPolicy, build_policy, mix
from .reavi import ReavTable, SolverTolerances, reavi_fixed_point
from .evaluation import RenewalRates, renewal_rates, route_transition_matrix
from .sim import Trace, compare, simulate
from .solver import InfeasibleError, Solution, lambda_upper, solve

__version__ = "0.1.0"

__all__ = [
    "FixedDelay",
    "GammaDelay",
    "InfeasibleError",
    "LogNormalDelay",
    "Multipliers",
    "NetworkSpec",
    "ReavTable",
    "RenewalRates",
    "RouteSpec",
    "Solution",
    "SolverTolerances",
    "SpecError",
    "ThresholdPolicy",
    "Trace",
    "availability_states",
    "build_policy",
    "compare",
    "lambda_upper",
    "load_config",
    "make_spec",
    "marginal_from_moments",
    "mix",
    "renewal_rates",
    "reavi_fixed_point",
    "route_transition_matrix",
    "sample_delays",
    "simulate",
    "solve",
    "spec_from_dict",
    "validate",
]
