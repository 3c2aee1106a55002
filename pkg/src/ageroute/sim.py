"""Discrete-event simulator of the sampling/routing update loop.

The AoI sawtooth is piecewise linear, so per-cycle areas are exact closed
forms and no time grid is involved: each epoch adds (2y + z + y')(z + y')/2 of
age-area and z + y' of elapsed time.  Delay vectors are pre-drawn jointly
(Gaussian copula when a correlation matrix is present) and only the chosen
component is ever read, which makes common-random-number comparisons across
policies exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .model import NetworkSpec, availability_states, sample_delays
from .policy import MixedPolicy, ThresholdPolicy

_MIN_BATCHES = 30


@dataclass
class Trace:
    """Aggregates of one simulated trajectory with batch-means confidence.

    The *_ci fields are 95% half-widths (Student t over the batch ratios);
    the *_se fields are the underlying batch-means standard errors.
    """

    aoi: float
    aoi_ci: float
    energy_rate: float
    energy_ci: float
    epochs: int
    total_time: float
    samples: int
    batches: int
    aoi_se: float = math.inf
    energy_se: float = math.inf
    seed: int | None = None
    records: dict[str, np.ndarray] | None = field(default=None, repr=False)


@dataclass
class CompareRow:
    name: str
    aoi: float
    aoi_ci: float
    energy_rate: float
    energy_ci: float


def simulate(
    policy,
    spec: NetworkSpec,
    epochs: int,
    seed: int | None = None,
    record: bool = False,
) -> Trace:
    """Run the update loop for a number of epochs and aggregate exactly.

    The initial age and previously observed delay are zero; a mixed policy is
    resolved by a single Bernoulli draw before any stream is generated.
    """
    if epochs < 1:
        raise ValueError("need at least one epoch")
    rng = np.random.default_rng(seed)
    if isinstance(policy, MixedPolicy):
        policy = policy.pick(rng)
    l_idx, delays = _draw_streams(spec, rng, epochs)
    trace = _run(policy, spec, l_idx, delays, record)
    trace.seed = seed
    return trace


def simulate_mixture(
    spec: NetworkSpec,
    policy_minus,
    policy_plus,
    q_plus: float,
    epochs: int,
    seed: int | None = None,
) -> Trace:
    """Ensemble estimate for a trajectory-level mixture.

    Each trajectory runs one boundary policy forever, so the ensemble rate is
    the probability-weighted combination of the two boundary rates; both are
    simulated on the same streams and combined, which removes the Bernoulli
    sampling noise entirely.
    """
    rng = np.random.default_rng(seed)
    l_idx, delays = _draw_streams(spec, rng, epochs)
    t_minus = _run(policy_minus, spec, l_idx, delays, False)
    t_plus = _run(policy_plus, spec, l_idx, delays, False)
    w = q_plus
    return Trace(
        aoi=w * t_plus.aoi + (1 - w) * t_minus.aoi,
        aoi_ci=w * t_plus.aoi_ci + (1 - w) * t_minus.aoi_ci,
        energy_rate=w * t_plus.energy_rate + (1 - w) * t_minus.energy_rate,
        energy_ci=w * t_plus.energy_ci + (1 - w) * t_minus.energy_ci,
        epochs=epochs,
        total_time=w * t_plus.total_time + (1 - w) * t_minus.total_time,
        samples=epochs,
        batches=t_plus.batches,
        aoi_se=w * t_plus.aoi_se + (1 - w) * t_minus.aoi_se,
        energy_se=w * t_plus.energy_se + (1 - w) * t_minus.energy_se,
        seed=seed,
    )


def compare(
    spec: NetworkSpec,
    policies,
    epochs: int,
    seed: int | None = None,
) -> list[CompareRow]:
    """Common-random-number comparison: one shared stream, every policy replayed.

    `policies` is a sequence of (name, policy) pairs; mixed policies draw
    their trajectory Bernoulli from a per-policy substream so the shared
    delay/availability stream is untouched.
    """
    rng = np.random.default_rng(seed)
    l_idx, delays = _draw_streams(spec, rng, epochs)
    rows = []
    for k, (name, pol) in enumerate(policies):
        if isinstance(pol, MixedPolicy):
            pol = pol.pick(np.random.default_rng([0 if seed is None else seed, k]))
        t = _run(pol, spec, l_idx, delays, False)
        rows.append(CompareRow(name, t.aoi, t.aoi_ci, t.energy_rate, t.energy_ci))
    return rows


def _draw_streams(spec: NetworkSpec, rng: np.random.Generator, epochs: int):
    states = availability_states(spec)
    probs = np.array([p for _, p in states])
    probs = probs / probs.sum()
    l_idx = rng.choice(len(states), size=epochs, p=probs)
    delays = sample_delays(spec, rng, size=epochs)
    return l_idx, np.atleast_2d(delays)


def _run(policy, spec, l_idx, delays, record) -> Trace:
    epochs = len(l_idx)
    states = availability_states(spec)
    state_tuples = [l for l, _ in states]

    fast = isinstance(policy, ThresholdPolicy)
    if fast:
        taus_by = []
        rids_by = []
        betas_by = []
        for l in state_tuples:
            rule = policy.rule_for(l)
            taus_by.append(list(rule.taus))
            rids_by.append([r - 1 for r in rule.rids])
            betas_by.append(list(rule.betas))

    cost_s = spec.C_s
    g_rate = [r.G for r in spec.routes]
    ycols = [delays[:, j].tolist() for j in range(spec.n)]
    l_list = l_idx.tolist()

    n_batches = min(_MIN_BATCHES, epochs)
    bounds = [epochs * (b + 1) // n_batches for b in range(n_batches)]
    batch_area, batch_energy, batch_time = [], [], []

    if record:
        rec_s = np.empty(epochs)
        rec_d = np.empty(epochs)
        rec_r = np.empty(epochs, dtype=np.int64)
        rec_z = np.empty(epochs)
        rec_y = np.empty(epochs)

    area = energy = elapsed = 0.0
    a_mark = e_mark = t_mark = 0.0
    clock = 0.0
    y = 0.0
    b = 0
    next_bound = bounds[0]

    for i in range(epochs):
        s = l_list[i]
        if fast:
            taus = taus_by[s]
            k = 0
            while k < len(taus) and y >= taus[k]:
                k += 1
            r0 = rids_by[s][k]
            z = betas_by[s][k] - y
            if z < 0.0:
                z = 0.0
        else:
            rid, z = policy.decide(y, state_tuples[s])
            r0 = rid - 1
        y_next = ycols[r0][i]
        cycle = z + y_next
        area += (2.0 * y + cycle) * cycle * 0.5
        energy += cost_s + g_rate[r0] * y_next
        elapsed += cycle
        if record:
            rec_s[i] = clock + z
            rec_d[i] = clock + z + y_next
            rec_r[i] = r0 + 1
            rec_z[i] = z
            rec_y[i] = y_next
        clock += cycle
        y = y_next
        if i + 1 == next_bound:
            batch_area.append(area - a_mark)
            batch_energy.append(energy - e_mark)
            batch_time.append(elapsed - t_mark)
            a_mark, e_mark, t_mark = area, energy, elapsed
            b += 1
            if b < n_batches:
                next_bound = bounds[b]

    aoi = area / elapsed
    erate = energy / elapsed
    aoi_ci, energy_ci, aoi_se, energy_se = _batch_ci(batch_area, batch_energy, batch_time)
    records = None
    if record:
        records = {
            "S": rec_s, "D": rec_d, "route": rec_r, "Z": rec_z, "Y": rec_y,
            "l_idx": np.asarray(l_idx),
        }
    return Trace(
        aoi=aoi, aoi_ci=aoi_ci, energy_rate=erate, energy_ci=energy_ci,
        epochs=epochs, total_time=elapsed, samples=epochs,
        batches=len(batch_time), aoi_se=aoi_se, energy_se=energy_se,
        records=records,
    )


def _batch_ci(batch_area, batch_energy, batch_time):
    nb = len(batch_time)
    if nb < 2:
        return math.inf, math.inf, math.inf, math.inf
    t = np.asarray(batch_time)
    ratios_a = np.asarray(batch_area) / t
    ratios_e = np.asarray(batch_energy) / t
    crit = sstats.t.ppf(0.975, nb - 1)
    se_a = ratios_a.std(ddof=1) / math.sqrt(nb)
    se_e = ratios_e.std(ddof=1) / math.sqrt(nb)
    return crit * se_a, crit * se_e, se_a, se_e
