"""Fixed-point engine for the relative expected action values.

For a fixed multiplier pair the continuous-state optimality equation collapses
onto one scalar per route, G(r), plus the average-cost scalar h.  Each sweep
needs E_{Y ~ Q_q}[min_r A(Y, r)] for every route q: the minimum is a step
function of Y whose breakpoints (pairwise crossings and water-filling kinks)
are known in closed form, so each panel integrand is a plain quadratic and the
expectation reduces to exact partial moments of the delay marginals.  No state
grid and no quadrature tolerance enter the fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .mdp import ActionCoeffs, Multipliers, action_coeffs, energy_offset
from .model import (
    DelayMarginal,
    NetworkSpec,
    availability_states,
    available_routes,
)
from .policy import StateRule, build_thresholds, pairwise_table

Selector = Callable[[tuple[int, ...]], int]  # forced-routing rule, or None


@dataclass
class SolverTolerances:
    """Numerical knobs for the nested solve; all strictly positive."""

    eps_lambda: float
    eps_c: float = 1e-4
    eps_fp: float = 1e-8
    quad_rel_tol: float = 1e-8
    tail_tol: float = 1e-10
    max_iters: int = 20000

    def __post_init__(self):
        for name in ("eps_lambda", "eps_c", "eps_fp", "quad_rel_tol", "tail_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @classmethod
    def for_bound(cls, lam_upper: float) -> "SolverTolerances":
        """Defaults scaled to the instance: eps_lambda = 1e-4 * lam_upper etc."""
        return cls(eps_lambda=1e-4 * lam_upper, eps_fp=1e-8 * lam_upper)


@dataclass
class ReavTable:
    """Converged relative expected action values G(r) and average cost h."""

    G: dict[int, float]
    h: float
    m: Multipliers
    iterations: int
    residual: float


class FixedPointError(ArithmeticError):
    """Fixed-point sweep failed to converge; carries the residual trajectory."""

    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


def _gmap(g_table) -> Mapping[int, float]:
    return g_table.G if hasattr(g_table, "G") else g_table


def inner_min(
    y: float,
    l: Sequence[int],
    m: Multipliers,
    spec: NetworkSpec,
    g_table,
) -> tuple[float, int]:
    """Minimum action value over the available routes; ties to the larger index."""
    coeffs = action_coeffs(m, spec, _gmap(g_table))
    best_v, best_r = math.inf, -1
    for r in available_routes(l):
        v = coeffs.value(y, r)
        if v < best_v or (v == best_v and r > best_r):
            best_v, best_r = v, r
    return best_v, best_r


def _state_rules(
    m: Multipliers,
    spec: NetworkSpec,
    g: Mapping[int, float],
    coeffs: ActionCoeffs,
    selector: Selector | None,
) -> list[tuple[tuple[int, ...], float, StateRule]]:
    """Lower-envelope segments of min_r A(., r) for every availability state."""
    states = availability_states(spec)
    ce = energy_offset(m, spec.E_max)
    out = []
    if selector is None:
        pw = pairwise_table(m, spec, g, coeffs)
        for l, pl in states:
            out.append((l, pl, build_thresholds(l, m, spec, g, pw, coeffs)))
    else:
        for l, pl in states:
            r = selector(l)
            if l[r - 1] != 0:
                raise ValueError(f"selector chose unavailable route {r} in state {l}")
            beta = m.lam + ce - spec.route(r).mean
            out.append((l, pl, StateRule((), (r,), (beta,))))
    return out


def _envelope_expectation(
    marginal: DelayMarginal,
    rule: StateRule,
    coeffs: ActionCoeffs,
) -> float:
    """E[min_r A(Y, r)] for Y ~ marginal, exactly, panel by panel.

    Panels are the rule's threshold segments further split at the active
    route's wait kink, so each integrand is a quadratic polynomial whose
    expectation is a combination of the marginal's partial moments.
    """
    edges = [0.0, *rule.taus, math.inf]
    total = 0.0
    mean = marginal.mean
    m2_total = mean * mean + marginal.variance
    cum = {0.0: (0.0, 0.0, 0.0)}

    def moments(lo: float, hi: float) -> tuple[float, float, float]:
        lo_m = cum.setdefault(lo, marginal.cum_moments(lo)) if lo > 0.0 else (0.0, 0.0, 0.0)
        if hi == math.inf:
            hi_m = (1.0, mean, m2_total)
        else:
            hi_m = cum.setdefault(hi, marginal.cum_moments(hi))
        return hi_m[0] - lo_m[0], hi_m[1] - lo_m[1], hi_m[2] - lo_m[2]

    for k, rid in enumerate(rule.rids):
        lo, hi = edges[k], edges[k + 1]
        i = rid - 1
        b = coeffs.kink[i]
        mu = coeffs.slope[i]
        c = coeffs.const[i]
        pieces = []
        if b > lo:
            pieces.append((lo, min(b, hi), True))
            if b < hi:
                pieces.append((b, hi, False))
        else:
            pieces.append((lo, hi, False))
        for plo, phi, waiting in pieces:
            if phi <= plo:
                continue
            m0, m1, m2 = moments(plo, phi)
            if waiting:
                total += (c - 0.5 * b * b) * m0 + (b + mu) * m1 - 0.5 * m2
            else:
                total += c * m0 + mu * m1
    return total


def expected_min(
    q: int,
    m: Multipliers,
    spec: NetworkSpec,
    g_table,
    selector: Selector | None = None,
) -> float:
    """E_{Y~Q_q, l~p}[min over available r of A(Y, r)] for the given table."""
    g = _gmap(g_table)
    coeffs = action_coeffs(m, spec, g)
    rules = _state_rules(m, spec, g, coeffs, selector)
    marginal = spec.route(q).delay
    return sum(pl * _envelope_expectation(marginal, rule, coeffs) for _, pl, rule in rules)


def _h_value(
    rules: list[tuple[tuple[int, ...], float, StateRule]],
    coeffs: ActionCoeffs,
) -> float:
    """h = E_l[min_r A(0, r)], the optimality-equation anchor at y = 0."""
    total = 0.0
    for _, pl, rule in rules:
        r = rule.rids[0]
        total += pl * coeffs.value(0.0, r)
    return total


def reavi_fixed_point(
    m: Multipliers,
    spec: NetworkSpec,
    tol: SolverTolerances,
    selector: Selector | None = None,
) -> ReavTable:
    """Iterate G(q) <- -h + E[min_r A(Y, r)] until h stabilizes.

    Synchronous (Jacobi) sweeps: every G(q) update in one iteration reads the
    previous table, so the result is independent of route order.  Raises
    FixedPointError with the residual trajectory on non-convergence.
    """
    rids = [r.rid for r in spec.routes]
    g = {rid: 0.0 for rid in rids}
    coeffs = action_coeffs(m, spec, g)
    rules = _state_rules(m, spec, g, coeffs, selector)
    h = _h_value(rules, coeffs)
    residuals: list[float] = []
    for it in range(1, tol.max_iters + 1):
        h_old = h
        sweeps = {
            q: -h_old + sum(
                pl * _envelope_expectation(spec.route(q).delay, rule, coeffs)
                for _, pl, rule in rules
            )
            for q in rids
        }
        g = sweeps
        coeffs = action_coeffs(m, spec, g)
        rules = _state_rules(m, spec, g, coeffs, selector)
        h = _h_value(rules, coeffs)
        res = abs(h - h_old)
        residuals.append(res)
        if res < tol.eps_fp:
            return ReavTable(G=g, h=h, m=m, iterations=it, residual=res)
    raise FixedPointError(
        f"no fixed point after {tol.max_iters} iterations at lam={m.lam:.6g}, "
        f"c={m.c:.6g}; last residual {residuals[-1]:.3e}",
        residuals,
    )
