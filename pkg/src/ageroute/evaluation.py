"""Deterministic policy evaluation via the induced route chain.

Once a route is chosen, the next delay and availability draw depend only on
that route, so "route used this epoch" is a finite Markov chain.  Long-run AoI
and energy rates are renewal-reward ratios of per-epoch expectations, each an
exact partial-moment integral of a piecewise-quadratic function of the
observed delay.  No simulation and no discretization enter here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import NetworkSpec, availability_states
from .policy import ConstantWaitPolicy, MixedPolicy, ThresholdPolicy

_EDGE_EPS = 1e-14  # transition masses below this do not count as edges


@dataclass
class RenewalRates:
    """Long-run rates of a stationary policy plus the chain that produced them."""

    aoi_rate: float
    energy_rate: float
    cycle_mean: float
    route_stationary: dict[int, float]
    transition_matrix: np.ndarray
    reducible: bool = False


@dataclass
class _Parts:
    """Per-chain aggregates: stationary-weighted numerators and denominator."""

    aoi_num: float
    energy_num: float
    duration: float
    stationary: np.ndarray
    transition: np.ndarray
    reducible: bool


def route_transition_matrix(policy, spec: NetworkSpec) -> np.ndarray:
    """P[q, r]: probability the next epoch uses route r+1 given q+1 delivered."""
    n = spec.n
    out = np.zeros((n, n))
    states = availability_states(spec)
    for q in range(1, n + 1):
        marginal = spec.route(q).delay
        for l, pl in states:
            for lo, hi, rid, _ in _segments(policy, l, spec):
                mass = _moments(marginal, lo, hi)[0]
                out[q - 1, rid - 1] += pl * mass
    return out


def renewal_rates(policy, spec: NetworkSpec) -> RenewalRates:
    """Exact long-run AoI and energy rates for threshold/constant/mixed policies."""
    if isinstance(policy, MixedPolicy):
        plus = _policy_parts(policy.policy_plus, spec)
        minus = _policy_parts(policy.policy_minus, spec)
        q = policy.q_plus
        dur = q * plus.duration + (1.0 - q) * minus.duration
        return RenewalRates(
            aoi_rate=(q * plus.aoi_num + (1.0 - q) * minus.aoi_num) / dur,
            energy_rate=(q * plus.energy_num + (1.0 - q) * minus.energy_num) / dur,
            cycle_mean=dur,
            route_stationary=_stationary_dict(
                q * plus.stationary + (1.0 - q) * minus.stationary
            ),
            transition_matrix=q * plus.transition + (1.0 - q) * minus.transition,
            reducible=plus.reducible or minus.reducible,
        )
    parts = _policy_parts(policy, spec)
    return RenewalRates(
        aoi_rate=parts.aoi_num / parts.duration,
        energy_rate=parts.energy_num / parts.duration,
        cycle_mean=parts.duration,
        route_stationary=_stationary_dict(parts.stationary),
        transition_matrix=parts.transition,
        reducible=parts.reducible,
    )


def _stationary_dict(pi: np.ndarray) -> dict[int, float]:
    return {i + 1: float(v) for i, v in enumerate(pi)}


def _segments(policy, l, spec: NetworkSpec):
    """(lo, hi, route, beta) pieces of the policy's decision on state l."""
    if isinstance(policy, ConstantWaitPolicy):
        # Constant wait is not a water-filling rule; callers treat beta=None
        # as "wait policy.wait regardless of y".
        return [(0.0, math.inf, policy.rid, None)]
    rule = policy.rule_for(l)
    edges = [0.0, *rule.taus, math.inf]
    return [
        (edges[k], edges[k + 1], rule.rids[k], rule.betas[k])
        for k in range(len(rule.rids))
    ]


def _moments(marginal, lo: float, hi: float) -> tuple[float, float, float]:
    if hi == math.inf:
        tot = (1.0, marginal.mean, marginal.mean**2 + marginal.variance)
    else:
        tot = marginal.cum_moments(hi)
    if lo <= 0.0:
        return tot
    c = marginal.cum_moments(lo)
    return tot[0] - c[0], tot[1] - c[1], tot[2] - c[2]


def _policy_parts(policy, spec: NetworkSpec) -> _Parts:
    n = spec.n
    states = availability_states(spec)
    # Per previous-route expectations of cycle area, energy and duration.
    area = np.zeros(n)
    energy = np.zeros(n)
    duration = np.zeros(n)
    transition = np.zeros((n, n))
    init_mass = np.zeros(n)

    const_wait = policy.wait if isinstance(policy, ConstantWaitPolicy) else None

    for q in range(1, n + 1):
        marginal = spec.route(q).delay
        iq = q - 1
        for l, pl in states:
            for lo, hi, rid, beta in _segments(policy, l, spec):
                nxt = spec.route(rid)
                mu, var = nxt.mean, nxt.variance
                m2sum = mu * mu + var
                e_rate = spec.C_s + nxt.G * mu
                if const_wait is not None:
                    m0, m1, _ = _moments(marginal, lo, hi)
                    w = const_wait
                    area[iq] += pl * 0.5 * (
                        (2.0 * m1 + w * m0) * w + (2.0 * m1 + 2.0 * w * m0) * mu + m2sum * m0
                    )
                    duration[iq] += pl * (w + mu) * m0
                    energy[iq] += pl * e_rate * m0
                    transition[iq, rid - 1] += pl * m0
                    continue
                pieces = []
                if beta > lo:
                    pieces.append((lo, min(beta, hi), True))
                    if beta < hi:
                        pieces.append((beta, hi, False))
                else:
                    pieces.append((lo, hi, False))
                for plo, phi, waiting in pieces:
                    if phi <= plo:
                        continue
                    m0, m1, m2 = _moments(marginal, plo, phi)
                    transition[iq, rid - 1] += pl * m0
                    energy[iq] += pl * e_rate * m0
                    if waiting:
                        # z = beta - y: area integrand (beta^2 - y^2 + 2 beta mu + mu^2 + var)/2
                        area[iq] += pl * 0.5 * (
                            (beta * beta + 2.0 * beta * mu + m2sum) * m0 - m2
                        )
                        duration[iq] += pl * ((beta + mu) * m0 - m1)
                    else:
                        area[iq] += pl * 0.5 * (2.0 * mu * m1 + m2sum * m0)
                        duration[iq] += pl * mu * m0

    for l, pl in states:
        if const_wait is not None:
            rid = policy.rid
        else:
            rid = policy.rule_for(l).decide(0.0)[0]
        init_mass[rid - 1] += pl

    pi, reducible = _stationary(transition, init_mass)
    return _Parts(
        aoi_num=float(pi @ area),
        energy_num=float(pi @ energy),
        duration=float(pi @ duration),
        stationary=pi,
        transition=transition,
        reducible=reducible,
    )


def _stationary(P: np.ndarray, init_mass: np.ndarray) -> tuple[np.ndarray, bool]:
    """Stationary distribution of the route chain.

    When several recurrent classes are reachable from the initial routes the
    long-run rate is trajectory-dependent; we then restrict to the class
    reached from the modal initial route and set the reducible flag.
    """
    n = P.shape[0]
    reach = P > _EDGE_EPS
    closure = reach | np.eye(n, dtype=bool)
    for _ in range(n):
        closure = closure @ closure
    comp_of: dict[int, frozenset[int]] = {}
    comps = []
    for i in range(n):
        if i in comp_of:
            continue
        members = frozenset(j for j in range(n) if closure[i, j] and closure[j, i])
        comps.append(members)
        for j in members:
            comp_of[j] = members
    recurrent = [
        c for c in comps
        if not any(reach[i, j] for i in c for j in range(n) if j not in c)
    ]
    support = [i for i in range(n) if init_mass[i] > 0.0]
    reachable = [
        c for c in recurrent if any(closure[s, j] for s in support for j in c)
    ]
    reducible = len(reachable) != 1
    if not reachable:  # numerically isolated start: fall back to its component
        reachable = [comp_of[int(np.argmax(init_mass))]]
    start = int(np.argmax(init_mass))
    from_start = [c for c in reachable if any(closure[start, j] for j in c)]
    target = sorted(from_start or reachable, key=min)[0]
    idx = sorted(target)

    sub = P[np.ix_(idx, idx)]
    k = len(idx)
    if k == 1:
        pi_sub = np.array([1.0])
    else:
        a = sub.T - np.eye(k)
        a[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        try:
            pi_sub = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            pi_sub = np.linalg.lstsq(a, b, rcond=None)[0]
    pi = np.zeros(n)
    pi[idx] = np.clip(pi_sub, 0.0, None)
    pi /= pi.sum()
    return pi, bool(reducible)
