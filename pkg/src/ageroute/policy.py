"""Threshold extraction and executable policies.

The difference A(y, a) - A(y, b) between two routes' action values is piecewise
quadratic in y with kinks only at the two water-filling breakpoints, and is
non-decreasing whenever mu_a >= mu_b.  Each pairwise handover threshold is
therefore the root of a quadratic or linear piece and is computed in closed
form; no iterative tolerance enters the thresholds.  Per availability state,
the route-threshold loop walks the lower envelope: start from the argmin at
y = 0, repeatedly jump to the earliest crossing with a higher-index route.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .mdp import ActionCoeffs, Multipliers, action_coeffs, energy_offset
from .model import NetworkSpec, availability_states, available_routes

_WIDTH_TOL = 1e-12  # threshold separations below this are treated as ties


def _gmap(g_table) -> Mapping[int, float]:
    return g_table.G if hasattr(g_table, "G") else g_table


def pairwise_threshold(
    a: int,
    b: int,
    m: Multipliers,
    spec: NetworkSpec,
    g_table,
    coeffs: ActionCoeffs | None = None,
) -> float | None:
    """Crossing y where A(y, a) = A(y, b), or None when b dominates from y = 0.

    Requires a < b in canonical order (mu_a >= mu_b).  The crossing exists iff
    route a is weakly preferred at y = 0; with equal means the difference is
    eventually constant and may never cross, which also returns None.
    """
    if not a < b:
        raise ValueError(f"pairwise threshold needs a < b, got ({a}, {b})")
    if coeffs is None:
        coeffs = action_coeffs(m, spec, _gmap(g_table))
    ia, ib = a - 1, b - 1
    ba, bb = coeffs.kink[ia], coeffs.kink[ib]
    dslope = coeffs.slope[ia] - coeffs.slope[ib]  # mu_a - mu_b >= 0
    dconst = coeffs.const[ia] - coeffs.const[ib]

    d0 = coeffs.value(0.0, a) - coeffs.value(0.0, b)
    if d0 > 0.0:
        return None
    if d0 == 0.0:
        return 0.0

    # Pieces of D(y): constant below min kink, quadratic between, linear above.
    lo = max(ba, 0.0)
    hi = max(bb, 0.0)
    if hi > lo:
        # 0.5 y^2 + c1 y + c0 on [lo, hi), non-decreasing there.
        c1 = dslope - bb
        c0 = 0.5 * bb * bb + dconst
        disc = c1 * c1 - 2.0 * c0
        if disc >= 0.0:
            root = -c1 + math.sqrt(disc)  # larger root: right of the vertex
            if lo <= root <= hi:
                return root
    if dslope > 0.0:
        root = -dconst / dslope
        return max(root, hi)
    return None


def pairwise_table(
    m: Multipliers,
    spec: NetworkSpec,
    g_table,
    coeffs: ActionCoeffs | None = None,
) -> dict[tuple[int, int], float | None]:
    """All tau_{a,b} for a < b; missing crossings are stored as None."""
    if coeffs is None:
        coeffs = action_coeffs(m, spec, _gmap(g_table))
    out: dict[tuple[int, int], float | None] = {}
    for a in range(1, spec.n + 1):
        for b in range(a + 1, spec.n + 1):
            out[(a, b)] = pairwise_threshold(a, b, m, spec, g_table, coeffs)
    return out


@dataclass(frozen=True)
class StateRule:
    """Step-function routing plus waiting levels for one availability state.

    Route rids[k] is used for y in [taus[k-1], taus[k]) with wait
    (betas[k] - y)^+; taus has one fewer entry than rids.
    """

    taus: tuple[float, ...]
    rids: tuple[int, ...]
    betas: tuple[float, ...]

    def decide(self, y: float) -> tuple[int, float]:
        k = 0
        taus = self.taus
        while k < len(taus) and y >= taus[k]:
            k += 1
        return self.rids[k], max(self.betas[k] - y, 0.0)


def build_thresholds(
    l: Sequence[int],
    m: Multipliers,
    spec: NetworkSpec,
    g_table,
    pairwise: Mapping[tuple[int, int], float | None],
    coeffs: ActionCoeffs | None = None,
) -> StateRule:
    """Route-threshold construction for one availability state.

    Starts from the argmin of A(0, .) over the available routes (ties to the
    larger index, i.e. smaller mean) and repeatedly hands over at the earliest
    crossing with a higher-index available route; crossings that do not exist
    are treated as +inf.
    """
    if coeffs is None:
        coeffs = action_coeffs(m, spec, _gmap(g_table))
    avail = available_routes(l)
    a = min(avail, key=lambda r: (coeffs.value(0.0, r), -r))
    rids = [a]
    taus: list[float] = []
    top = avail[-1]
    while a != top:
        cands = [(pairwise[(a, r)], r) for r in avail if r > a and pairwise[(a, r)] is not None]
        if not cands:
            break
        tau = min(t for t, _ in cands)
        nxt = max(r for t, r in cands if t <= tau + _WIDTH_TOL)
        if taus and tau <= taus[-1] + _WIDTH_TOL:
            rids[-1] = nxt  # zero-width segment: the newcomer absorbs it
        elif tau <= _WIDTH_TOL:
            rids = [nxt]
            taus = []
        else:
            taus.append(tau)
            rids.append(nxt)
        a = nxt
    ce = energy_offset(m, spec.E_max)
    betas = tuple(m.lam + ce - spec.route(r).mean for r in rids)
    return StateRule(tuple(taus), tuple(rids), betas)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Joint sampling-and-routing policy: per-state thresholds, fully static.

    `pins[k]` is 0 for always-on routes, 1 for never-on ones and None for
    intermittent routes; decide() uses it to normalize user-supplied
    availability vectors onto the enumerated states.
    """

    m: Multipliers
    rules: dict[tuple[int, ...], StateRule]
    pairwise: dict[tuple[int, int], float | None]
    pins: tuple[int | None, ...]

    @property
    def n(self) -> int:
        return len(self.pins)

    def normalize_state(self, l: Sequence[int]) -> tuple[int, ...]:
        return tuple(
            pin if pin is not None else int(bool(bit)) for pin, bit in zip(self.pins, l)
        )

    def rule_for(self, l: Sequence[int]) -> StateRule:
        return self.rules[self.normalize_state(l)]

    def decide(self, y: float, l: Sequence[int]) -> tuple[int, float]:
        """(route, wait) for observed delay y under availability l."""
        return self.rule_for(l).decide(y)

    def to_dict(self) -> dict:
        return {
            "lam": self.m.lam,
            "c": self.m.c,
            "states": [
                {
                    "l": list(l),
                    "taus": list(rule.taus),
                    "routes": list(rule.rids),
                    "betas": list(rule.betas),
                }
                for l, rule in sorted(self.rules.items())
            ],
            "pairwise": [
                {"a": a, "b": b, "tau": tau} for (a, b), tau in sorted(self.pairwise.items())
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def build_policy(m: Multipliers, spec: NetworkSpec, g_table) -> ThresholdPolicy:
    """Materialize the threshold policy for every reachable availability state."""
    g = _gmap(g_table)
    coeffs = action_coeffs(m, spec, g)
    pw = pairwise_table(m, spec, g, coeffs)
    rules = {
        l: build_thresholds(l, m, spec, g, pw, coeffs) for l, _ in availability_states(spec)
    }
    pins = tuple(
        0 if r.p == 1.0 else (1 if r.p == 0.0 else None) for r in spec.routes
    )
    return ThresholdPolicy(m=m, rules=rules, pairwise=pw, pins=pins)


@dataclass(frozen=True)
class ConstantWaitPolicy:
    """Always use one route and wait a fixed time; the Lemma-style baseline."""

    rid: int
    wait: float
    n: int

    def decide(self, y: float, l: Sequence[int]) -> tuple[int, float]:
        if l[self.rid - 1] != 0:
            raise ValueError(f"route {self.rid} unavailable in state {tuple(l)}")
        return self.rid, self.wait


class MixedPolicy:
    """Bernoulli mixture of two stationary policies, drawn once per trajectory."""

    def __init__(self, policy_minus, policy_plus, q_plus: float, rng=None):
        if not 0.0 <= q_plus <= 1.0:
            raise ValueError(f"mixing probability must be in [0, 1], got {q_plus}")
        self.policy_minus = policy_minus
        self.policy_plus = policy_plus
        self.q_plus = q_plus
        self._rng = rng if rng is not None else np.random.default_rng()

    def pick(self, rng=None):
        """One Bernoulli draw: the stationary policy to run a trajectory with."""
        r = rng if rng is not None else self._rng
        return self.policy_plus if r.random() < self.q_plus else self.policy_minus

    def decide(self, y: float, l: Sequence[int]):
        raise TypeError("mixed policy decides per trajectory; call pick() first")


def mix(policy_minus, policy_plus, q: float, rng=None) -> MixedPolicy:
    """Randomize between two boundary policies; plus-side chosen w.p. q."""
    if q == 0.0:
        return MixedPolicy(policy_minus, policy_plus, 0.0, rng)
    if q == 1.0:
        return MixedPolicy(policy_minus, policy_plus, 1.0, rng)
    return MixedPolicy(policy_minus, policy_plus, q, rng)
