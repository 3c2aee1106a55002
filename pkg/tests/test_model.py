import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ageroute.model import (
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
    marginal_quadrature,
    partial_moments,
    sample_delays,
    spec_from_dict,
    spec_to_dict,
    validate,
)

FAMILIES = [
    LogNormalDelay(0.3, 0.8),
    GammaDelay(2.0, 1.5),
    GammaDelay(0.16, 7.5),  # heavy near-zero singularity
    FixedDelay(1.0),
]


# --- validation -------------------------------------------------------------


def test_minimal_instance_valid():
    spec = make_spec([(FixedDelay(1.0), 1.0, 0.0)])
    assert spec.n == 1 and spec.unconstrained


def test_no_persistent_route_rejected():
    with pytest.raises(SpecError, match="no persistent route"):
        make_spec([(FixedDelay(1.0), 0.5, 0.0), (FixedDelay(2.0), 0.5, 0.0)])


def test_empty_routes_rejected():
    with pytest.raises(SpecError, match="empty"):
        validate(NetworkSpec(routes=()))


def test_canonical_reorder_records_permutation():
    spec = make_spec([(FixedDelay(1.0), 1.0, 0.0), (FixedDelay(3.0), 1.0, 0.0)])
    assert [r.mean for r in spec.routes] == [3.0, 1.0]
    assert spec.source_order == (1, 0)
    assert [r.rid for r in spec.routes] == [1, 2]


def test_mean_tie_broken_by_variance():
    a = marginal_from_moments("gamma", 2.0, 3.0)
    b = marginal_from_moments("lognormal", 2.0, 1.0)
    spec = make_spec([(a, 1.0, 0.0), (b, 1.0, 0.0)])
    assert spec.routes[0].variance < spec.routes[1].variance


def test_bad_correlation_rejected():
    r = [(FixedDelay(1.0), 1.0, 0.0), (FixedDelay(2.0), 1.0, 0.0)]
    with pytest.raises(SpecError, match="symmetric"):
        make_spec(r, correlation=[[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(SpecError, match="diagonal"):
        make_spec(r, correlation=[[0.9, 0.0], [0.0, 1.0]])
    with pytest.raises(SpecError, match="semidefinite"):
        make_spec(r, correlation=[[1.0, -2.0], [-2.0, 1.0]])


def test_invalid_budget_rejected():
    with pytest.raises(SpecError, match="E_max"):
        make_spec([(FixedDelay(1.0), 1.0, 0.0)], E_max=0.0)


# --- moments ----------------------------------------------------------------


def test_family_moment_formulas():
    ln = LogNormalDelay(0.5, 0.7)
    assert ln.mean == pytest.approx(math.exp(0.5 + 0.7**2 / 2))
    assert ln.variance == pytest.approx(
        (math.exp(0.7**2) - 1) * math.exp(2 * 0.5 + 0.7**2)
    )
    g = GammaDelay(2.0, 1.5)
    assert g.mean == 3.0 and g.variance == pytest.approx(4.5)
    d = FixedDelay(2.0)
    assert d.mean == 2.0 and d.variance == 0.0


@given(mean=st.floats(0.2, 8.0), std=st.floats(0.1, 6.0),
       fam=st.sampled_from(["lognormal", "gamma"]))
@settings(max_examples=60, deadline=None)
def test_from_moments_round_trip(mean, std, fam):
    m = marginal_from_moments(fam, mean, std)
    assert m.mean == pytest.approx(mean, rel=1e-9)
    assert math.sqrt(m.variance) == pytest.approx(std, rel=1e-9)


@pytest.mark.parametrize("marginal", FAMILIES[:3])
def test_empirical_moments_match(marginal):
    rng = np.random.default_rng(42)
    draws = marginal.sample(rng, 1_000_000)
    se_mean = math.sqrt(marginal.variance / draws.size)
    assert abs(draws.mean() - marginal.mean) < 4 * se_mean
    m4 = stats.moment(draws, 4)
    se_var = math.sqrt(max(m4 - marginal.variance**2, 0.0) / draws.size)
    assert abs(draws.var(ddof=1) - marginal.variance) < 4 * se_var


@pytest.mark.parametrize("marginal", FAMILIES)
def test_quadrature_reproduces_moments(marginal):
    assert marginal_quadrature(marginal, lambda y: 1.0) == pytest.approx(1.0, rel=1e-6)
    assert marginal_quadrature(marginal, lambda y: y) == pytest.approx(
        marginal.mean, rel=1e-6
    )
    assert marginal_quadrature(marginal, lambda y: y * y) == pytest.approx(
        marginal.mean**2 + marginal.variance, rel=1e-6
    )


def test_quadrature_examples():
    g = GammaDelay(2.0, 1.5)
    assert marginal_quadrature(g, lambda y: y) == pytest.approx(3.0, rel=1e-8)
    d = FixedDelay(1.0)
    assert marginal_quadrature(d, lambda y: max(2.0 - y, 0.0)) == 1.0


@pytest.mark.parametrize("marginal", FAMILIES[:3])
def test_partial_moments_match_quadrature(marginal):
    # tail_tol tightened beyond the default: the y^2 tail above the default
    # truncation point is itself of order 1e-6 for the heavy log-normal.
    cuts = [0.0, 0.4, marginal.mean, 3.0 * marginal.mean, math.inf]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        m0, m1, m2 = partial_moments(marginal, lo, hi)
        for k, got in enumerate((m0, m1, m2)):
            want = marginal_quadrature(
                marginal,
                lambda y: y**k if lo <= y < hi else 0.0,
                breakpoints=[lo, hi],
                tail_tol=1e-14,
            )
            assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_partial_moments_point_mass_half_open():
    d = FixedDelay(2.0)
    assert partial_moments(d, 0.0, 2.0) == (0.0, 0.0, 0.0)
    assert partial_moments(d, 2.0, math.inf) == (1.0, 2.0, 4.0)


# --- availability -----------------------------------------------------------


def test_availability_single_persistent():
    spec = make_spec([(FixedDelay(1.0), 1.0, 0.0)])
    assert availability_states(spec) == [((0,), 1.0)]


def test_availability_two_routes():
    spec = make_spec([(FixedDelay(2.0), 1.0, 0.0), (FixedDelay(1.0), 0.5, 0.0)])
    got = dict(availability_states(spec))
    assert got == {(0, 0): 0.5, (0, 1): 0.5}


def test_availability_three_routes():
    spec = make_spec([
        (FixedDelay(3.0), 1.0, 0.0),
        (FixedDelay(2.0), 0.3, 0.0),
        (FixedDelay(1.0), 0.6, 0.0),
    ])
    got = {l: p for l, p in availability_states(spec)}
    assert got[(0, 0, 0)] == pytest.approx(0.18)
    assert got[(0, 0, 1)] == pytest.approx(0.12)
    assert got[(0, 1, 0)] == pytest.approx(0.42)
    assert got[(0, 1, 1)] == pytest.approx(0.28)


@given(ps=st.lists(st.floats(0.01, 0.99), min_size=1, max_size=11))
@settings(max_examples=40, deadline=None)
def test_availability_probabilities_sum_to_one(ps):
    routes = [(FixedDelay(float(len(ps) + 1)), 1.0, 0.0)]
    routes += [(FixedDelay(float(len(ps) - i)), p, 0.0) for i, p in enumerate(ps)]
    spec = make_spec(routes)
    states = availability_states(spec)
    assert abs(sum(p for _, p in states) - 1.0) < 1e-12
    assert all(p >= 0.0 for _, p in states)


def test_zero_probability_route_pinned_off():
    spec = make_spec([(FixedDelay(2.0), 1.0, 0.0), (FixedDelay(1.0), 0.0, 0.0)])
    states = availability_states(spec)
    assert states == [((0, 1), 1.0)]


# --- sampling ---------------------------------------------------------------


def test_independent_sampling_uncorrelated():
    spec = make_spec([
        (marginal_from_moments("lognormal", 2.0, 1.0), 1.0, 0.0),
        (marginal_from_moments("lognormal", 1.0, 0.5), 1.0, 0.0),
    ])
    y = sample_delays(spec, np.random.default_rng(0), size=100_000)
    rho = stats.spearmanr(y[:, 0], y[:, 1]).statistic
    assert abs(rho) < 0.02


def test_copula_induces_rank_correlation():
    spec = make_spec(
        [
            (marginal_from_moments("lognormal", 2.0, 1.0), 1.0, 0.0),
            (marginal_from_moments("lognormal", 1.0, 0.5), 1.0, 0.0),
        ],
        correlation=[[1.0, 0.9], [0.9, 1.0]],
    )
    y = sample_delays(spec, np.random.default_rng(0), size=100_000)
    assert stats.spearmanr(y[:, 0], y[:, 1]).statistic > 0.8


def test_copula_preserves_marginals():
    spec = make_spec(
        [
            (marginal_from_moments("gamma", 2.0, 2.0), 1.0, 0.0),
            (marginal_from_moments("lognormal", 1.0, 0.5), 1.0, 0.0),
        ],
        correlation=[[1.0, 0.7], [0.7, 1.0]],
    )
    y = sample_delays(spec, np.random.default_rng(1), size=200_000)
    for j, r in enumerate(spec.routes):
        se = math.sqrt(r.variance / y.shape[0])
        assert abs(y[:, j].mean() - r.mean) < 3 * se


# --- config round trip ------------------------------------------------------


def test_config_round_trip(tmp_path):
    spec = make_spec(
        [
            (marginal_from_moments("lognormal", 2.4, 0.7), 1.0, 1.0),
            (marginal_from_moments("gamma", 1.2, 3.0), 0.4, 2.0),
        ],
        C_s=2.0,
        E_max=5.0,
    )
    d = spec_to_dict(spec)
    back = spec_from_dict(d)
    assert [r.mean for r in back.routes] == pytest.approx([r.mean for r in spec.routes])
    assert back.E_max == 5.0 and back.C_s == 2.0

    path = tmp_path / "cfg.json"
    path.write_text(__import__("json").dumps(d))
    again = load_config(path)
    assert again.n == 2


def test_shipped_configs_load(config_dir):
    for cfg in sorted(config_dir.glob("*.json")):
        spec = load_config(cfg)
        assert spec.n >= 1


def test_infinite_budget_spellings():
    base = {"routes": [{"family": "deterministic", "value": 1.0, "p": 1.0}]}
    assert spec_from_dict({**base, "E_max": "inf"}).unconstrained
    assert spec_from_dict({**base, "E_max": None}).unconstrained
    assert spec_from_dict(base).unconstrained
