"""SMDP primitives for a fixed multiplier pair (lam, c).

For a chosen route r the optimal wait has the water-filling form
(lam + c*E_max - mu_r - y)^+, and substituting it into the stage cost gives an
action value that is piecewise quadratic in the observed delay y:

    A(y, r) = -((B_r - y)^+)^2 / 2 + mu_r * y + C_r + G(r)

with B_r = lam + c*E_max - mu_r and C_r collecting the y-independent terms.
Everything downstream (fixed point, thresholds, evaluation) works off these
coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .model import NetworkSpec, RouteSpec


@dataclass(frozen=True)
class Multipliers:
    """Dinkelbach parameter lam (age units) and energy multiplier c >= 0."""

    lam: float
    c: float = 0.0

    def __post_init__(self):
        if self.lam < 0.0 or self.c < 0.0:
            raise ValueError(f"multipliers must be nonnegative, got {self}")


def energy_offset(m: Multipliers, E_max: float) -> float:
    """c * E_max, with the unconstrained convention c = 0, c*inf := 0."""
    if E_max == math.inf:
        if m.c != 0.0:
            raise ValueError("c must be 0 when E_max is infinite")
        return 0.0
    return m.c * E_max


def wait_kink(route: RouteSpec, m: Multipliers, E_max: float) -> float:
    """The y above which the optimal wait clamps to zero: lam + c*E_max - mu_r."""
    return m.lam + energy_offset(m, E_max) - route.mean


def optimal_wait(y: float, route: RouteSpec, m: Multipliers, E_max: float) -> float:
    """Water-filling wait (lam + c*E_max - mu_r - y)^+ for route r at delay y."""
    return max(wait_kink(route, m, E_max) - y, 0.0)


def stage_cost(
    y: float,
    route: RouteSpec,
    z: float,
    m: Multipliers,
    E_max: float,
    C_s: float,
) -> float:
    """One-step cost g(y, z, r; lam, c); independent of the availability state."""
    ce = energy_offset(m, E_max)
    mu, var = route.mean, route.variance
    return (
        0.5 * z * z
        + (y + mu - m.lam - ce) * z
        + (y + m.c * route.G - ce - m.lam) * mu
        + 0.5 * (mu * mu + var)
        + m.c * C_s
    )


@dataclass(frozen=True)
class ActionCoeffs:
    """Per-route coefficients of A(y, r) = -((B-y)^+)^2/2 + mu*y + C."""

    kink: tuple[float, ...]  # B_r
    slope: tuple[float, ...]  # mu_r
    const: tuple[float, ...]  # C_r, including the ReaV term G(r)

    def value(self, y: float, rid: int) -> float:
        i = rid - 1
        gap = self.kink[i] - y
        quad = -0.5 * gap * gap if gap > 0.0 else 0.0
        return quad + self.slope[i] * y + self.const[i]


def action_coeffs(m: Multipliers, spec: NetworkSpec, g_table: Mapping[int, float]) -> ActionCoeffs:
    ce = energy_offset(m, spec.E_max)
    kink, slope, const = [], [], []
    for r in spec.routes:
        mu, var = r.mean, r.variance
        kink.append(m.lam + ce - mu)
        slope.append(mu)
        const.append(
            (m.c * r.G - ce - m.lam) * mu
            + 0.5 * (mu * mu + var)
            + m.c * spec.C_s
            + g_table[r.rid]
        )
    return ActionCoeffs(tuple(kink), tuple(slope), tuple(const))


def action_value(
    y: float,
    rid: int,
    m: Multipliers,
    spec: NetworkSpec,
    g_table: Mapping[int, float],
) -> float:
    """One-step look-ahead value A(y, r) = g(y, z*(y; r), r) + G(r)."""
    return action_coeffs(m, spec, g_table).value(y, rid)


def action_value_derivative(y: float, route: RouteSpec, m: Multipliers, E_max: float) -> float:
    """dA/dy: (lam + c*E_max - y) below the wait kink, mu_r at and above it.

    Right-continuous at the kink, consistent with the wait clamp being active
    for y >= B_r; use is_wait_kink to detect the boundary case.
    """
    b = wait_kink(route, m, E_max)
    if y < b:
        return m.lam + energy_offset(m, E_max) - y
    return route.mean


def is_wait_kink(y: float, route: RouteSpec, m: Multipliers, E_max: float) -> bool:
    """True when y sits exactly on the derivative breakpoint of A(y, r)."""
    return y == wait_kink(route, m, E_max)
