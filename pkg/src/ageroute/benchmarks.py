"""Comparison policies: minimum-mean and minimum-variance routing, each with
zero-wait or age-optimal sampling.

All four ignore the energy budget (they are solved at c = 0).  The zero-wait
mean-priority policy has a closed-form long-run age; the "-optimal" variants
reuse the fixed-point and bisection machinery with the routing minimization
replaced by the forced selector.
"""

from __future__ import annotations

import math

from .mdp import Multipliers
from .model import NetworkSpec, availability_states, available_routes
from .policy import StateRule, ThresholdPolicy
from .reavi import SolverTolerances
from .solver import bisect_lambda

BENCHMARK_NAMES = ("mad-opt", "mad-zw", "mdv-opt", "mdv-zw")


def min_mean_route(l) -> int:
    """Largest available canonical index = smallest mean among available."""
    return available_routes(l)[-1]


def min_variance_route(spec: NetworkSpec, l) -> int:
    """Smallest-variance available route; ties to smaller mean, then smaller id."""
    return min(
        available_routes(l),
        key=lambda r: (spec.route(r).variance, spec.route(r).mean, r),
    )


def mad_zw_decide(y: float, l, spec: NetworkSpec) -> tuple[int, float]:
    """Minimum-average-delay routing with zero wait."""
    return min_mean_route(l), 0.0


def mad_zw_age(spec: NetworkSpec) -> float:
    """Closed-form long-run age of min-mean routing with zero wait."""
    priority = list(range(spec.n, 0, -1))  # largest index first
    return _priority_zw_age(spec, priority)


def mdv_zw_age(spec: NetworkSpec) -> float:
    """Closed-form long-run age of min-variance routing with zero wait."""
    return _priority_zw_age(spec, _variance_priority(spec))


def _variance_priority(spec: NetworkSpec) -> list[int]:
    return sorted(
        range(1, spec.n + 1),
        key=lambda r: (spec.route(r).variance, spec.route(r).mean, r),
    )


def _priority_zw_age(spec: NetworkSpec, priority: list[int]) -> float:
    """Zero-wait age when the first available route in `priority` is used.

    Cycle lengths are the chosen route's delays, so the rate is the
    usage-probability-weighted mean delay plus the delay-weighted second
    moment correction.
    """
    mean_delay = 0.0
    second = 0.0
    stay_off = 1.0
    for r in priority:
        route = spec.route(r)
        use = route.p * stay_off
        mean_delay += use * route.mean
        second += use * 0.5 * (route.mean**2 + route.variance)
        stay_off *= 1.0 - route.p
    if mean_delay <= 0.0:
        raise ValueError("zero-wait age undefined: no route is ever used")
    return mean_delay + second / mean_delay


def _forced_policy(spec: NetworkSpec, selector, m: Multipliers) -> ThresholdPolicy:
    rules = {}
    for l, _ in availability_states(spec):
        r = selector(l)
        beta = m.lam - spec.route(r).mean  # c = 0 for benchmarks
        rules[l] = StateRule((), (r,), (beta,))
    pins = tuple(0 if r.p == 1.0 else (1 if r.p == 0.0 else None) for r in spec.routes)
    return ThresholdPolicy(m=m, rules=rules, pairwise={}, pins=pins)


def zero_wait_policy(spec: NetworkSpec, kind: str = "mad-zw") -> ThresholdPolicy:
    """Zero-wait benchmark as a degenerate threshold policy (beta = 0)."""
    if kind == "mad-zw":
        selector = min_mean_route
    elif kind == "mdv-zw":
        selector = lambda l: min_variance_route(spec, l)
    else:
        raise ValueError(f"unknown zero-wait benchmark {kind!r}")
    rules = {}
    for l, _ in availability_states(spec):
        rules[l] = StateRule((), (selector(l),), (0.0,))
    pins = tuple(0 if r.p == 1.0 else (1 if r.p == 0.0 else None) for r in spec.routes)
    return ThresholdPolicy(m=Multipliers(0.0, 0.0), rules=rules, pairwise={}, pins=pins)


def fixed_route_optimal_wait(
    kind: str,
    spec: NetworkSpec,
    tol: SolverTolerances | None = None,
) -> tuple[ThresholdPolicy, float]:
    """Forced-selector solve: same bisection, routing argmin replaced.

    `kind` is "min-mean" or "min-variance".  The zero-wait age of the same
    selector is a valid upper bisection bound (zero wait is admissible under
    forced routing); the usual persistent-route bound is not, since the forced
    selector cannot fall back to a persistent route.
    """
    if kind == "min-mean":
        selector = min_mean_route
        lam_hi = mad_zw_age(spec)
    elif kind == "min-variance":
        selector = lambda l: min_variance_route(spec, l)
        lam_hi = mdv_zw_age(spec)
    else:
        raise ValueError(f"unknown selector {kind!r}")
    if tol is None:
        tol = SolverTolerances.for_bound(lam_hi)
    lam, _table = bisect_lambda(spec, 0.0, tol, selector=selector, lam_hi=lam_hi)
    return _forced_policy(spec, selector, Multipliers(lam, 0.0)), lam


def build_benchmark(
    name: str,
    spec: NetworkSpec,
    tol: SolverTolerances | None = None,
) -> tuple[ThresholdPolicy, float | None]:
    """(policy, analytic long-run age if available) for a benchmark name."""
    if name == "mad-zw":
        return zero_wait_policy(spec, "mad-zw"), mad_zw_age(spec)
    if name == "mdv-zw":
        return zero_wait_policy(spec, "mdv-zw"), mdv_zw_age(spec)
    if name == "mad-opt":
        pol, lam = fixed_route_optimal_wait("min-mean", spec, tol)
        return pol, lam
    if name == "mdv-opt":
        pol, lam = fixed_route_optimal_wait("min-variance", spec, tol)
        return pol, lam
    raise ValueError(f"unknown benchmark {name!r}; choose from {BENCHMARK_NAMES}")
