import json
import math

import numpy as np
import pytest

from ageroute.mdp import Multipliers, action_value, optimal_wait
from ageroute.model import (
    FixedDelay,
    availability_states,
    available_routes,
    make_spec,
    marginal_from_moments as make_marginal,
)
from ageroute.policy import (
    build_policy,
    build_thresholds,
    mix,
    pairwise_table,
    pairwise_threshold,
)
from ageroute.reavi import SolverTolerances, inner_min, reavi_fixed_point
from ageroute.solver import solve

TOL = SolverTolerances(eps_lambda=1e-4, eps_fp=1e-10)


@pytest.fixture(scope="module")
def fig8_solution(fig8_spec):
    return solve(fig8_spec)


def grid_crossing(a, b, m, spec, g, y_hi=30.0, n=300_000):
    """Dense-grid sign-change scan of A(y,a) - A(y,b); None if no crossing."""
    ys = np.linspace(0.0, y_hi, n)
    diff = np.array(
        [action_value(float(y), a, m, spec, g) - action_value(float(y), b, m, spec, g)
         for y in ys]
    )
    if diff[0] > 0:
        return None
    sign = diff > 0
    idx = np.argmax(sign)
    if not sign.any():
        return None
    return float(ys[idx])


# --- pairwise thresholds ----------------------------------------------------


def test_pairwise_rejects_equal_routes(fig8_spec):
    with pytest.raises(ValueError):
        pairwise_threshold(2, 2, Multipliers(3.0, 0.0), fig8_spec, {1: 0, 2: 0, 3: 0})


def test_pairwise_crossings_match_grid_scan(fig8_spec, fig8_solution):
    m = fig8_solution.policy_plus.m
    g = fig8_solution.table.G
    t12 = pairwise_threshold(1, 2, m, fig8_spec, g)
    t23 = pairwise_threshold(2, 3, m, fig8_spec, g)
    assert t12 is not None and t23 is not None and t12 < t23
    for (a, b), tau in ((1, 2), t12), ((2, 3), t23):
        approx = grid_crossing(a, b, m, fig8_spec, g)
        assert approx == pytest.approx(tau, abs=2e-4)
    # crossing really is a root of the action-value difference
    for (a, b), tau in ((1, 2), t12), ((2, 3), t23):
        da = action_value(tau, a, m, fig8_spec, g)
        db = action_value(tau, b, m, fig8_spec, g)
        assert da == pytest.approx(db, abs=1e-9)


def test_pairwise_none_when_dominated(fig8_spec):
    # Push route 1's relative value up until route 2 wins everywhere from 0.
    m = Multipliers(3.0, 0.0)
    g = {1: 50.0, 2: 0.0, 3: 0.0}
    assert pairwise_threshold(1, 2, m, fig8_spec, g) is None
    assert grid_crossing(1, 2, m, fig8_spec, g) is None


def test_pairwise_table_size(fig8_spec, fig8_solution):
    pw = pairwise_table(fig8_solution.policy_plus.m, fig8_spec, fig8_solution.table.G)
    n = fig8_spec.n
    assert len(pw) == n * (n - 1) // 2


# --- threshold construction -------------------------------------------------


def test_build_thresholds_singleton(det_spec):
    m = Multipliers(1.5, 0.0)
    rule = build_thresholds((0,), m, det_spec, {1: 0.0}, {})
    assert rule.rids == (1,) and rule.taus == ()


def test_fig8_full_state_uses_all_routes(fig8_spec, fig8_solution):
    rule = fig8_solution.policy_plus.rules[(0, 0, 0)]
    assert rule.rids == (1, 2, 3)
    assert len(rule.taus) == 2


def test_route_one_never_wins_is_skipped(fig8_spec):
    m = Multipliers(3.0, 0.0)
    g = {1: 50.0, 2: 0.0, 3: 50.0}
    pw = pairwise_table(m, fig8_spec, g)
    rule = build_thresholds((0, 0, 0), m, fig8_spec, g, pw)
    assert rule.rids[0] == 2


def test_two_route_dominated_route_unused():
    # Route 1 much worse on every axis: the solved policy uses route 2 alone.
    spec = make_spec([
        (make_marginal("lognormal", 3.0, 3.0), 1.0, 0.0),
        (make_marginal("gamma", 0.5, 0.5), 1.0, 0.0),
    ])
    sol = solve(spec)
    rule = sol.policy_plus.rules[(0, 0)]
    assert rule.rids == (2,) and rule.taus == ()


def test_threshold_invariants(fig8_solution, fig8_spec):
    pol = fig8_solution.policy_plus
    n = fig8_spec.n
    existing = [t for t in pol.pairwise.values() if t is not None]
    assert len(set(existing)) <= n * (n - 1) // 2
    for l, rule in pol.rules.items():
        k = len(rule.taus)
        assert k <= len(available_routes(l)) - 1
        assert list(rule.rids) == sorted(rule.rids)
        assert list(rule.betas) == sorted(rule.betas)
        assert len(set(rule.betas)) == len(rule.betas)  # strictly increasing
        for beta, tau in zip(rule.betas, rule.taus):
            assert beta < tau


# --- decide -----------------------------------------------------------------


def test_decide_first_segment(fig8_solution):
    pol = fig8_solution.policy_plus
    rule = pol.rules[(0, 0, 0)]
    rid, _ = pol.decide(0.5 * rule.taus[0], (0, 0, 0))
    assert rid == rule.rids[0]


def test_decide_zero_wait_subinterval(fig8_solution):
    pol = fig8_solution.policy_plus
    rule = pol.rules[(0, 0, 0)]
    y = 0.5 * (rule.betas[0] + rule.taus[0])  # inside [beta_1, tau_1)
    rid, wait = pol.decide(y, (0, 0, 0))
    assert rid == rule.rids[0] and wait == 0.0


def test_decide_matches_argmin_everywhere(fig8_spec, fig8_solution):
    pol = fig8_solution.policy_plus
    m = pol.m
    g = fig8_solution.table.G
    rng = np.random.default_rng(5)
    states = [l for l, _ in availability_states(fig8_spec)]
    for _ in range(10_000):
        y = float(rng.uniform(0.0, 12.0))
        l = states[rng.integers(len(states))]
        rid, wait = pol.decide(y, l)
        val, brute = inner_min(y, l, m, fig8_spec, g)
        if rid != brute:  # co-optimal within float resolution of the crossing
            assert action_value(y, rid, m, fig8_spec, g) == pytest.approx(val, abs=1e-9)
        assert wait == pytest.approx(
            optimal_wait(y, fig8_spec.route(rid), m, fig8_spec.E_max), abs=1e-9
        )


def test_decide_route_nondecreasing_in_y(fig8_solution, fig8_spec):
    pol = fig8_solution.policy_plus
    for l, _ in availability_states(fig8_spec):
        rids = [pol.decide(float(y), l)[0] for y in np.linspace(0.0, 15.0, 1000)]
        assert all(b >= a for a, b in zip(rids, rids[1:]))


def test_decide_normalizes_persistent_bits(fig8_solution):
    pol = fig8_solution.policy_plus
    assert pol.decide(1.0, (0, 0, 0)) == pol.decide(1.0, (1, 1, 1))  # all persistent


# --- special case: all routes on, no budget ----------------------------------


def test_always_available_wait_rule(fig8_solution, fig8_spec):
    # With p = 1 and no budget the wait is (lam - mu_r - y)^+ everywhere.
    pol = fig8_solution.policy_plus
    lam = pol.m.lam
    assert len(pol.rules) == 1
    rule = pol.rules[(0, 0, 0)]
    assert len(rule.taus) <= fig8_spec.n - 1
    for y in np.linspace(0.0, 6.0, 200):
        rid, wait = pol.decide(float(y), (0, 0, 0))
        assert wait == pytest.approx(
            max(lam - fig8_spec.route(rid).mean - y, 0.0), abs=1e-12
        )


# --- mixing -----------------------------------------------------------------


def test_mix_degenerate_cases(det_spec):
    sol = solve(det_spec)
    pol = sol.policy_plus
    assert mix(pol, pol, 0.0).pick(np.random.default_rng(0)) is pol
    assert mix(pol, pol, 1.0).pick(np.random.default_rng(0)) is pol


def test_mix_frequency(det_spec):
    a = build_policy(Multipliers(1.2, 0.0), det_spec, {1: 0.0})
    b = build_policy(Multipliers(1.8, 0.0), det_spec, {1: 0.0})
    mixture = mix(a, b, 0.5, np.random.default_rng(123))
    picks = sum(mixture.pick() is b for _ in range(10_000))
    assert abs(picks / 10_000 - 0.5) < 3 * 0.5 / math.sqrt(10_000)


def test_mix_rejects_bad_probability(det_spec):
    sol = solve(det_spec)
    with pytest.raises(ValueError):
        mix(sol.policy_minus, sol.policy_plus, 1.5)


# --- serialization ----------------------------------------------------------


def test_policy_json_round_trip(fig8_solution):
    payload = json.loads(fig8_solution.policy_plus.to_json())
    assert payload["lam"] == fig8_solution.policy_plus.m.lam
    state = payload["states"][0]
    assert state["routes"] == [1, 2, 3]
    assert len(state["taus"]) == 2
    assert len(payload["pairwise"]) == 3
