"""Nested bisection: Dinkelbach root in lam inside, energy multiplier c outside.

The inner loop bisects lam on [0, lam_upper] using the sign of the fixed-point
average cost h(lam, c); the outer loop bisects c until the deterministic
energy evaluation of the conditionally optimal policy brackets the budget,
then mixes the two boundary policies to hit it exactly.  Everything is
deterministic: identical spec and tolerances give identical output.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from . import evaluation
from .mdp import Multipliers
from .model import NetworkSpec, validate
from .policy import MixedPolicy, ThresholdPolicy, build_policy, mix
from .reavi import ReavTable, Selector, SolverTolerances, reavi_fixed_point

# Waiting times beyond this are treated as "never": budgets that would need
# longer idling than this to satisfy are reported infeasible.
_MAX_WAIT = 1e12

_C_DOUBLINGS = 60  # growth cap for the upper energy multiplier


class BracketError(ArithmeticError):
    """The Dinkelbach root is not bracketed by [0, lam_upper]."""


class InfeasibleError(ValueError):
    """The energy budget cannot be met by any admissible policy."""


@dataclass
class Solution:
    """Output of the constrained solve.

    lam is the mixed policy's long-run average age (for a binding constraint,
    the mixing-probability-weighted combination of the two boundary roots);
    policy_plus is used with probability mix_prob, policy_minus otherwise.
    When the budget is slack the two policies coincide and mix_prob is 1.
    """

    lam: float
    c: float
    mix_prob: float
    policy_minus: ThresholdPolicy
    policy_plus: ThresholdPolicy
    lam_upper: float
    table: ReavTable
    trace: list[dict] = field(default_factory=list)
    fixed_point_iterations: int = 0
    wall_time: float = 0.0

    @property
    def constrained(self) -> bool:
        return self.c > 0.0

    def policy(self, rng=None) -> ThresholdPolicy | MixedPolicy:
        if self.mix_prob >= 1.0 or self.policy_plus is self.policy_minus:
            return self.policy_plus
        return mix(self.policy_minus, self.policy_plus, self.mix_prob, rng)

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "c": self.c,
            "mix_prob": self.mix_prob,
            "lam_upper": self.lam_upper,
            "policy_plus": self.policy_plus.to_dict(),
            "policy_minus": self.policy_minus.to_dict(),
            "trace": self.trace,
            "fixed_point_iterations": self.fixed_point_iterations,
            "wall_time": self.wall_time,
        }


def constant_wait_age(mean: float, variance: float, wait: float) -> float:
    """Long-run age of a single always-on route with a constant wait."""
    return 1.5 * mean + 0.5 * wait + variance / (2.0 * (mean + wait))


def budget_wait(route, C_s: float, E_max: float) -> float:
    """Constant wait that brings one route's energy rate down to the budget."""
    if E_max == math.inf:
        return 0.0
    return max((C_s + route.G * route.mean) / E_max - route.mean, 0.0)


def lambda_upper(spec: NetworkSpec) -> float:
    """Upper bound on the optimal age: best constant-wait persistent route."""
    best = math.inf
    for rid in spec.persistent_routes:
        r = spec.route(rid)
        w = budget_wait(r, spec.C_s, spec.E_max)
        best = min(best, constant_wait_age(r.mean, r.variance, w))
    return best


def check_feasible(spec: NetworkSpec) -> None:
    """Raise InfeasibleError when no persistent route can meet the budget.

    Any positive budget is met by waiting long enough, so this only rejects
    budgets that would require waits beyond the _MAX_WAIT horizon.
    """
    if spec.E_max == math.inf:
        return
    needed = min(budget_wait(spec.route(k), spec.C_s, spec.E_max) for k in spec.persistent_routes)
    if needed > _MAX_WAIT:
        raise InfeasibleError(
            f"energy budget {spec.E_max:g} needs waits beyond {_MAX_WAIT:g} time units"
        )


def bisect_lambda(
    spec: NetworkSpec,
    c: float,
    tol: SolverTolerances,
    selector: Selector | None = None,
    lam_hi: float | None = None,
) -> tuple[float, ReavTable]:
    """Dinkelbach root of h(., c): h > 0 raises the lower end, h < 0 the upper.

    Endpoint signs are verified first; a root sitting exactly on an endpoint
    (h within the fixed-point resolution) is accepted, anything further out is
    a bracket violation.
    """
    hi = lambda_upper(spec) if lam_hi is None else lam_hi
    slack = 100.0 * tol.eps_fp
    iters = 0

    t_lo = reavi_fixed_point(Multipliers(0.0, c), spec, tol, selector)
    iters += t_lo.iterations
    if t_lo.h <= 0.0:
        if t_lo.h >= -slack:
            t_lo.iterations = iters
            return 0.0, t_lo
        raise BracketError(f"h(0, c={c:g}) = {t_lo.h:.3e} <= 0: root below zero")

    t_hi = reavi_fixed_point(Multipliers(hi, c), spec, tol, selector)
    iters += t_hi.iterations
    if t_hi.h >= 0.0:
        if t_hi.h <= slack:
            t_hi.iterations = iters
            return hi, t_hi
        raise BracketError(
            f"h(lam_upper={hi:g}, c={c:g}) = {t_hi.h:.3e} >= 0: bound violated"
        )

    lo_end, hi_end = 0.0, hi
    while hi_end - lo_end > tol.eps_lambda:
        mid = 0.5 * (lo_end + hi_end)
        t_mid = reavi_fixed_point(Multipliers(mid, c), spec, tol, selector)
        iters += t_mid.iterations
        if t_mid.h > 0.0:
            lo_end = mid
        else:
            hi_end = mid
    lam = 0.5 * (lo_end + hi_end)
    table = reavi_fixed_point(Multipliers(lam, c), spec, tol, selector)
    table.iterations += iters
    return lam, table


def evaluate_energy(policy, spec: NetworkSpec) -> float:
    """Deterministic long-run energy rate of a policy (renewal-reward ratio)."""
    return evaluation.renewal_rates(policy, spec).energy_rate


def solve(spec: NetworkSpec, tol: SolverTolerances | None = None) -> Solution:
    """Full constrained solve (outer bisection on c, inner on lam).

    Returns the unconstrained solution when E_max is infinite or already slack
    at c = 0; otherwise bisects c between the last violating and satisfying
    values and mixes the two boundary policies to meet the budget exactly.
    """
    spec = validate(spec)
    lam_u = lambda_upper(spec)
    if tol is None:
        tol = SolverTolerances.for_bound(lam_u)
    started = time.perf_counter()
    iters = 0
    trace: list[dict] = []

    def solve_at(c: float) -> tuple[float, ThresholdPolicy, float]:
        nonlocal iters
        lam_c, table = bisect_lambda(spec, c, tol, lam_hi=lam_u)
        iters += table.iterations
        pol = build_policy(Multipliers(lam_c, c), spec, table)
        energy = math.nan
        if not spec.unconstrained:
            energy = evaluation.renewal_rates(pol, spec).energy_rate
        trace.append({"c": c, "lam": lam_c, "energy": energy})
        return lam_c, pol, energy

    lam0, table0 = bisect_lambda(spec, 0.0, tol, lam_hi=lam_u)
    iters += table0.iterations
    pol0 = build_policy(Multipliers(lam0, 0.0), spec, table0)
    if spec.unconstrained:
        trace.append({"c": 0.0, "lam": lam0, "energy": math.nan})
        return Solution(
            lam=lam0, c=0.0, mix_prob=1.0, policy_minus=pol0, policy_plus=pol0,
            lam_upper=lam_u, table=table0, trace=trace,
            fixed_point_iterations=iters, wall_time=time.perf_counter() - started,
        )

    check_feasible(spec)
    e0 = evaluation.renewal_rates(pol0, spec).energy_rate
    trace.append({"c": 0.0, "lam": lam0, "energy": e0})
    if e0 <= spec.E_max:
        return Solution(
            lam=lam0, c=0.0, mix_prob=1.0, policy_minus=pol0, policy_plus=pol0,
            lam_upper=lam_u, table=table0, trace=trace,
            fixed_point_iterations=iters, wall_time=time.perf_counter() - started,
        )

    # Grow the upper multiplier until the budget is satisfied.
    c_lo, lam_lo, pol_lo, e_lo = 0.0, lam0, pol0, e0
    c_hi = 1.0
    lam_hi_val, pol_hi, e_hi = solve_at(c_hi)
    doublings = 0
    while e_hi > spec.E_max:
        doublings += 1
        if doublings > _C_DOUBLINGS:
            raise InfeasibleError(
                f"budget {spec.E_max:g} unmet even at c = {c_hi:g}"
            )
        c_lo, lam_lo, pol_lo, e_lo = c_hi, lam_hi_val, pol_hi, e_hi
        c_hi *= 2.0
        lam_hi_val, pol_hi, e_hi = solve_at(c_hi)

    while c_hi - c_lo > tol.eps_c:
        c_mid = 0.5 * (c_lo + c_hi)
        lam_mid, pol_mid, e_mid = solve_at(c_mid)
        if e_mid >= spec.E_max:
            c_lo, lam_lo, pol_lo, e_lo = c_mid, lam_mid, pol_mid, e_mid
        else:
            c_hi, lam_hi_val, pol_hi, e_hi = c_mid, lam_mid, pol_mid, e_mid

    if e_hi == e_lo:
        q = 1.0
    else:
        q = (spec.E_max - e_lo) / (e_hi - e_lo)
        q = min(max(q, 0.0), 1.0)
    lam_star = q * lam_hi_val + (1.0 - q) * lam_lo
    final_table = reavi_fixed_point(Multipliers(lam_hi_val, c_hi), spec, tol)
    return Solution(
        lam=lam_star, c=c_hi, mix_prob=q,
        policy_minus=pol_lo, policy_plus=pol_hi,
        lam_upper=lam_u, table=final_table, trace=trace,
        fixed_point_iterations=iters, wall_time=time.perf_counter() - started,
    )
