"""Problem-instance data model: routes, delay laws, availability, energy.

A network instance is a list of routes, each with a marginal transmission-delay
distribution, an availability probability p (p = 1: persistent, 0 < p < 1:
intermittent, p = 0: never usable), and a per-unit-time transmission energy
rate G.  Instances are validated and canonicalized so that route 1 has the
largest mean delay (ties broken by ascending variance, then input position);
every downstream threshold result assumes this ordering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special


class SpecError(ValueError):
    """Raised for an invalid or inconsistent network specification."""


_SQRT2 = math.sqrt(2.0)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


# ---------------------------------------------------------------------------
# Delay marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogNormalDelay:
    """Log-normal delay: ln Y ~ Normal(log_mean, log_sd**2)."""

    log_mean: float
    log_sd: float

    family = "lognormal"

    def __post_init__(self):
        if not (self.log_sd > 0.0 and math.isfinite(self.log_mean)):
            raise SpecError(f"lognormal needs log_sd > 0, got {self}")

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean + 0.5 * self.log_sd**2)

    @property
    def variance(self) -> float:
        return (math.exp(self.log_sd**2) - 1.0) * math.exp(2 * self.log_mean + self.log_sd**2)

    def pdf(self, y: float) -> float:
        if y <= 0.0:
            return 0.0
        z = (math.log(y) - self.log_mean) / self.log_sd
        return math.exp(-0.5 * z * z) / (y * self.log_sd * math.sqrt(2 * math.pi))

    def cdf(self, y: float) -> float:
        if y <= 0.0:
            return 0.0
        return _norm_cdf((math.log(y) - self.log_mean) / self.log_sd)

    def sf(self, y: float) -> float:
        return 1.0 - self.cdf(y)

    def ppf(self, u: float) -> float:
        return math.exp(self.log_mean + self.log_sd * special.ndtri(u))

    def cum_moments(self, x: float) -> tuple[float, float, float]:
        """(P(Y < x), E[Y; Y < x], E[Y^2; Y < x]) via shifted normal CDFs."""
        if x <= 0.0:
            return 0.0, 0.0, 0.0
        z = (math.log(x) - self.log_mean) / self.log_sd
        m0 = _norm_cdf(z)
        m1 = self.mean * _norm_cdf(z - self.log_sd)
        m2 = (self.mean**2 + self.variance) * _norm_cdf(z - 2.0 * self.log_sd)
        return m0, m1, m2

    def sample(self, rng: np.random.Generator, size=None):
        return rng.lognormal(self.log_mean, self.log_sd, size)

    def ppf_vec(self, u: np.ndarray) -> np.ndarray:
        return np.exp(self.log_mean + self.log_sd * special.ndtri(u))


@dataclass(frozen=True)
class GammaDelay:
    """Gamma delay with shape/scale parameterization (mean = shape*scale)."""

    shape: float
    scale: float

    family = "gamma"

    def __post_init__(self):
        if not (self.shape > 0.0 and self.scale > 0.0):
            raise SpecError(f"gamma needs shape, scale > 0, got {self}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2

    def pdf(self, y: float) -> float:
        if y <= 0.0:
            return 0.0
        k, th = self.shape, self.scale
        return math.exp((k - 1.0) * math.log(y) - y / th - math.lgamma(k) - k * math.log(th))

    def cdf(self, y: float) -> float:
        if y <= 0.0:
            return 0.0
        return float(special.gammainc(self.shape, y / self.scale))

    def sf(self, y: float) -> float:
        if y <= 0.0:
            return 1.0
        return float(special.gammaincc(self.shape, y / self.scale))

    def ppf(self, u: float) -> float:
        return float(special.gammaincinv(self.shape, u)) * self.scale

    def cum_moments(self, x: float) -> tuple[float, float, float]:
        """Partial moments via the incomplete-gamma recurrence."""
        if x <= 0.0:
            return 0.0, 0.0, 0.0
        k, th = self.shape, self.scale
        t = x / th
        m0 = float(special.gammainc(k, t))
        m1 = k * th * float(special.gammainc(k + 1.0, t))
        m2 = k * (k + 1.0) * th**2 * float(special.gammainc(k + 2.0, t))
        return m0, m1, m2

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, self.scale, size)

    def ppf_vec(self, u: np.ndarray) -> np.ndarray:
        return special.gammaincinv(self.shape, u) * self.scale


@dataclass(frozen=True)
class FixedDelay:
    """Degenerate delay: point mass at `value` (zero variance)."""

    value: float

    family = "deterministic"

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise SpecError(f"deterministic delay needs value >= 0, got {self}")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def variance(self) -> float:
        return 0.0

    def pdf(self, y: float) -> float:
        raise SpecError("point mass has no density; use cum_moments/partial expectations")

    def cdf(self, y: float) -> float:
        return 1.0 if y >= self.value else 0.0

    def sf(self, y: float) -> float:
        return 0.0 if y >= self.value else 1.0

    def ppf(self, u: float) -> float:
        return self.value

    def cum_moments(self, x: float) -> tuple[float, float, float]:
        # Half-open convention [0, x): the atom counts once iff value < x.
        if self.value < x:
            return 1.0, self.value, self.value**2
        return 0.0, 0.0, 0.0

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def ppf_vec(self, u: np.ndarray) -> np.ndarray:
        return np.full_like(u, self.value)


DelayMarginal = LogNormalDelay | GammaDelay | FixedDelay


def partial_moments(marginal: DelayMarginal, lo: float, hi: float) -> tuple[float, float, float]:
    """(mass, first, second) moments of Y restricted to [lo, hi); hi may be inf."""
    if hi == math.inf:
        c_lo = marginal.cum_moments(lo)
        tot = (1.0, marginal.mean, marginal.mean**2 + marginal.variance)
        return tuple(t - c for t, c in zip(tot, c_lo))
    c_lo = marginal.cum_moments(lo)
    c_hi = marginal.cum_moments(hi)
    return tuple(h - l for h, l in zip(c_hi, c_lo))


def marginal_from_moments(family: str, mean: float, std: float) -> DelayMarginal:
    """Build a marginal from (mean, std); std == 0 degenerates to a point mass."""
    if mean <= 0.0 and not (family == "deterministic" and mean == 0.0):
        raise SpecError(f"mean must be > 0, got {mean}")
    if std < 0.0:
        raise SpecError(f"std must be >= 0, got {std}")
    if std == 0.0 or family == "deterministic":
        if std != 0.0:
            raise SpecError("deterministic family takes std = 0")
        return FixedDelay(mean)
    if family == "lognormal":
        s2 = math.log1p((std / mean) ** 2)
        return LogNormalDelay(math.log(mean) - 0.5 * s2, math.sqrt(s2))
    if family == "gamma":
        return GammaDelay((mean / std) ** 2, std**2 / mean)
    raise SpecError(f"unknown delay family {family!r}")


# ---------------------------------------------------------------------------
# Routes and network spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RouteSpec:
    """One route: marginal delay law, availability probability, energy rate."""

    rid: int
    delay: DelayMarginal
    p: float
    G: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise SpecError(f"route {self.rid}: availability p must be in [0, 1], got {self.p}")
        if self.G < 0.0:
            raise SpecError(f"route {self.rid}: energy rate G must be >= 0, got {self.G}")

    @property
    def mean(self) -> float:
        return self.delay.mean

    @property
    def variance(self) -> float:
        return self.delay.variance

    @property
    def persistent(self) -> bool:
        return self.p == 1.0


@dataclass(frozen=True)
class NetworkSpec:
    """Validated problem instance, routes in canonical mean-descending order.

    `source_order[k]` is the position (0-based) the canonical route k+1 held in
    the user-supplied list, so callers can map results back to their own ids.
    """

    routes: tuple[RouteSpec, ...]
    C_s: float = 0.0
    E_max: float = math.inf
    correlation: np.ndarray | None = field(default=None, compare=False)
    source_order: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return len(self.routes)

    def route(self, rid: int) -> RouteSpec:
        return self.routes[rid - 1]

    @property
    def persistent_routes(self) -> tuple[int, ...]:
        return tuple(r.rid for r in self.routes if r.persistent)

    @property
    def unconstrained(self) -> bool:
        return self.E_max == math.inf


def validate(spec: NetworkSpec) -> NetworkSpec:
    """Check invariants and return the canonicalized (mean-descending) spec."""
    if not spec.routes:
        raise SpecError("route list is empty")
    if not any(r.p == 1.0 for r in spec.routes):
        raise SpecError("no persistent route: at least one route must have p = 1")
    if not (spec.C_s >= 0.0 and math.isfinite(spec.C_s)):
        raise SpecError(f"C_s must be finite and >= 0, got {spec.C_s}")
    if not spec.E_max > 0.0:
        raise SpecError(f"E_max must be in (0, inf], got {spec.E_max}")
    for r in spec.routes:
        if not (math.isfinite(r.mean) and math.isfinite(r.variance)):
            raise SpecError(f"route {r.rid}: non-finite delay moments")

    # Canonical order: mean descending, ties by ascending variance then input position.
    order = sorted(
        range(len(spec.routes)),
        key=lambda i: (-spec.routes[i].mean, spec.routes[i].variance, i),
    )
    routes = tuple(replace(spec.routes[pos], rid=k + 1) for k, pos in enumerate(order))

    corr = spec.correlation
    if corr is not None:
        corr = np.asarray(corr, dtype=float)
        n = len(routes)
        if corr.shape != (n, n):
            raise SpecError(f"correlation must be {n}x{n}, got {corr.shape}")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise SpecError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise SpecError("correlation matrix diagonal must be 1")
        if np.linalg.eigvalsh(corr).min() < -1e-10:
            raise SpecError("correlation matrix is not positive semidefinite")
        corr = corr[np.ix_(order, order)]

    return NetworkSpec(
        routes=routes,
        C_s=spec.C_s,
        E_max=spec.E_max,
        correlation=corr,
        source_order=tuple(order),
    )


def make_spec(
    routes: Sequence[RouteSpec | tuple],
    C_s: float = 0.0,
    E_max: float = math.inf,
    correlation=None,
) -> NetworkSpec:
    """Convenience constructor: accepts RouteSpec or (marginal, p, G) tuples."""
    built = []
    for i, r in enumerate(routes):
        if isinstance(r, RouteSpec):
            built.append(replace(r, rid=i + 1))
        else:
            marginal, p, g = r
            built.append(RouteSpec(i + 1, marginal, p, g))
    return validate(NetworkSpec(tuple(built), C_s, E_max, correlation))


# ---------------------------------------------------------------------------
# Availability
# ---------------------------------------------------------------------------


def availability_states(spec: NetworkSpec) -> list[tuple[tuple[int, ...], float]]:
    """All reachable availability vectors l (0 = on) with their probabilities.

    Persistent routes are pinned on and p = 0 routes pinned off, so only the
    strictly intermittent routes are enumerated; probabilities sum to 1.
    """
    wobbly = [r for r in spec.routes if 0.0 < r.p < 1.0]
    states: list[tuple[tuple[int, ...], float]] = []
    for mask in range(1 << len(wobbly)):
        l = [0 if r.p == 1.0 else 1 for r in spec.routes]
        prob = 1.0
        for j, r in enumerate(wobbly):
            off = (mask >> j) & 1
            l[r.rid - 1] = off
            prob *= (1.0 - r.p) if off else r.p
        states.append((tuple(l), prob))
    return states


def available_routes(l: Sequence[int]) -> tuple[int, ...]:
    """Canonical route ids that are on (l_k = 0) in availability vector l."""
    rids = tuple(k + 1 for k, bit in enumerate(l) if bit == 0)
    if not rids:
        raise SpecError(f"availability state {tuple(l)} has no usable route")
    return rids


# ---------------------------------------------------------------------------
# Quadrature and sampling
# ---------------------------------------------------------------------------


class QuadratureError(ArithmeticError):
    """Quadrature failed to meet the requested relative tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


def marginal_quadrature(
    marginal: DelayMarginal,
    f: Callable[[float], float],
    breakpoints: Sequence[float] = (),
    rel_tol: float = 1e-8,
    tail_tol: float = 1e-10,
) -> float:
    """Integrate E[f(Y)] for Y ~ marginal, splitting at the given kinks.

    The integration range is truncated where the survival function drops below
    `tail_tol`; log-normal integrands are transformed to log-space so the heavy
    tail is resolved.  Raises QuadratureError if the achieved error estimate
    exceeds rel_tol relative to the result.
    """
    if isinstance(marginal, FixedDelay):
        return f(marginal.value)

    hi = marginal.ppf(1.0 - tail_tol)
    pts = sorted({float(b) for b in breakpoints if 0.0 < b < hi})
    edges = [0.0, *pts, hi]

    if isinstance(marginal, LogNormalDelay):
        mu, sd = marginal.log_mean, marginal.log_sd
        norm = sd * math.sqrt(2.0 * math.pi)

        def integrand(u: float) -> float:
            return f(math.exp(u)) * math.exp(-0.5 * ((u - mu) / sd) ** 2) / norm

        # Map edges to log-space; the lower end is the matching quantile.
        lo_u = mu + sd * special.ndtri(tail_tol)
        e_u = [lo_u] + [math.log(e) for e in edges[1:]]
        panels = list(zip(e_u[:-1], e_u[1:]))
    else:

        def integrand(y: float) -> float:
            return f(y) * marginal.pdf(y)

        panels = list(zip(edges[:-1], edges[1:]))

    total = 0.0
    err = 0.0
    for a, b in panels:
        if b <= a:
            continue
        val, e = integrate.quad(integrand, a, b, limit=200)
        total += val
        err += e
    if err > rel_tol * max(abs(total), 1.0) * 10.0:
        raise QuadratureError(
            f"quadrature error {err:.3e} exceeds tolerance for result {total:.6e}",
            total,
            err,
        )
    return total


def sample_delays(spec: NetworkSpec, rng: np.random.Generator, size: int | None = None):
    """Draw joint delay vectors; a Gaussian copula induces the correlation.

    Returns shape (n,) for size=None, else (size, n).  The solver never reads
    the joint law; only the simulator realizes these draws.
    """
    m = 1 if size is None else size
    n = spec.n
    if spec.correlation is None:
        out = np.empty((m, n))
        for j, r in enumerate(spec.routes):
            out[:, j] = r.delay.sample(rng, m)
    else:
        chol = _copula_cholesky(spec.correlation)
        z = rng.standard_normal((m, n)) @ chol.T
        u = special.ndtr(z)
        out = np.empty((m, n))
        for j, r in enumerate(spec.routes):
            out[:, j] = r.delay.ppf_vec(u[:, j])
    return out[0] if size is None else out


def _copula_cholesky(corr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        # PSD but singular (e.g. perfect correlation): clip tiny negatives.
        w, v = np.linalg.eigh(corr)
        w = np.clip(w, 0.0, None)
        return v @ np.diag(np.sqrt(w))


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------


def _marginal_from_dict(d: dict, where: str) -> DelayMarginal:
    fam = d.get("family")
    if fam is None:
        raise SpecError(f"{where}: missing 'family'")
    if "mean" in d or "std" in d:
        try:
            return marginal_from_moments(fam, float(d["mean"]), float(d["std"]))
        except KeyError as exc:
            raise SpecError(f"{where}: mean/std parameterization needs both") from exc
    if fam == "lognormal":
        return LogNormalDelay(float(d["log_mean"]), float(d["log_sd"]))
    if fam == "gamma":
        return GammaDelay(float(d["shape"]), float(d["scale"]))
    if fam == "deterministic":
        return FixedDelay(float(d["value"]))
    raise SpecError(f"{where}: unknown family {fam!r}")


def spec_from_dict(d: dict) -> NetworkSpec:
    """Build and validate a NetworkSpec from a parsed config dictionary."""
    try:
        raw_routes = d["routes"]
    except KeyError as exc:
        raise SpecError("config missing 'routes'") from exc
    routes = []
    for i, rd in enumerate(raw_routes):
        marginal = _marginal_from_dict(rd, f"routes[{i}]")
        routes.append(RouteSpec(i + 1, marginal, float(rd.get("p", 1.0)), float(rd.get("G", 0.0))))
    e_max = d.get("E_max", None)
    if e_max is None or (isinstance(e_max, str) and e_max.lower() in ("inf", "infinity")):
        e_max = math.inf
    corr = d.get("correlation", None)
    return make_spec(routes, C_s=float(d.get("C_s", 0.0)), E_max=float(e_max), correlation=corr)


def spec_to_dict(spec: NetworkSpec) -> dict:
    routes = []
    for r in spec.routes:
        rd: dict = {"family": r.delay.family, "p": r.p, "G": r.G}
        if isinstance(r.delay, LogNormalDelay):
            rd.update(log_mean=r.delay.log_mean, log_sd=r.delay.log_sd)
        elif isinstance(r.delay, GammaDelay):
            rd.update(shape=r.delay.shape, scale=r.delay.scale)
        else:
            rd.update(value=r.delay.value)
        routes.append(rd)
    return {
        "routes": routes,
        "C_s": spec.C_s,
        "E_max": "inf" if spec.E_max == math.inf else spec.E_max,
        "correlation": None if spec.correlation is None else spec.correlation.tolist(),
    }


def load_config(path) -> NetworkSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))
