"""Closed-form design-constraint checks, pole classification and root-locus sweeps.

The inner observer loop admits exact stability and non-oscillation bounds on
the product alpha * g_dob; this module evaluates them, classifies poles of any
discrete transfer function against the unit circle, and sweeps the closed
outer loop over alpha or g_dob to trace pole branches and locate the value at
which a branch first leaves the unit circle.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .loops import (
    DobConfig,
    MeasurementKind,
    OuterGains,
    PlantParams,
    make_inner_loop,
    make_outer_loop,
    make_pd,
)
from .zalg import RationalTF, poly_roots

__all__ = [
    "BindingConstraint",
    "StabilityVerdict",
    "PoleClassification",
    "LocusBranch",
    "position_non_osc_bound",
    "constraint_check",
    "classify_poles",
    "config_for_sweep",
    "root_locus",
    "bisect_threshold",
]

# Poles within this distance of the unit circle count as NOT inside (conservative).
UNIT_CIRCLE_TOL = 1e-9


class BindingConstraint(enum.Enum):
    NONE = "none"
    STABILITY_LIMIT = "stability_limit"           # alpha*g_dob < 2/Ts
    VELOCITY_NON_OSC = "velocity_non_oscillatory"  # alpha*g_dob < 1/Ts
    POSITION_NON_OSC = "position_non_oscillatory"  # closed-form real-pole bound


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of the closed-form constraint checks for one configuration.

    ``margin`` is the signed distance (rad/s) from alpha*g_dob to the binding
    bound: positive inside, zero marginal, negative violated.
    """

    stable: bool
    non_oscillatory: bool
    binding_constraint: BindingConstraint
    margin: float


@dataclass(frozen=True)
class PoleClassification:
    max_mag: float
    all_in_unit: bool
    all_real_in_0_1: bool


@dataclass(frozen=True)
class LocusBranch:
    """Pole trajectories of the closed outer loop along a parameter sweep."""

    param: str
    param_values: tuple
    pole_sets: tuple            # one tuple of complex poles per value, branch-matched
    max_mags: tuple
    exit_value: float | None    # first inside-to-outside unit-circle crossing


def position_non_osc_bound(g_v: float, Ts: float) -> float:
    """Largest alpha*g_dob keeping both position-loop poles real inside (0, 1)."""
    gvTs = g_v * Ts
    return 6.0 / Ts + (8.0 - math.sqrt(32.0 * (2.0 + gvTs) * (1.0 + gvTs))) / (g_v * Ts * Ts)


def constraint_check(cfg: DobConfig) -> StabilityVerdict:
    """Evaluate the closed-form stability / non-oscillation bounds for cfg.

    Acceleration measurement is unconditionally stable and non-oscillatory
    (the single pole 1/(1 + alpha*g_dob*Ts) stays in (0, 1)). Velocity and
    position measurements lose stability at alpha*g_dob = 2/Ts; monotone
    response additionally requires alpha*g_dob < 1/Ts (velocity) or the
    closed-form position bound. Boundary values count as violated.
    """
    x = cfg.alpha_g
    if cfg.kind is MeasurementKind.ACCELERATION:
        return StabilityVerdict(True, True, BindingConstraint.NONE, math.inf)

    stability_bound = 2.0 / cfg.Ts
    if cfg.kind is MeasurementKind.VELOCITY:
        non_osc_bound = 1.0 / cfg.Ts
        non_osc_kind = BindingConstraint.VELOCITY_NON_OSC
    else:
        non_osc_bound = position_non_osc_bound(cfg.g_v, cfg.Ts)
        non_osc_kind = BindingConstraint.POSITION_NON_OSC

    stable = x < stability_bound
    non_osc = x < non_osc_bound
    if not stable:
        return StabilityVerdict(False, False, BindingConstraint.STABILITY_LIMIT,
                                stability_bound - x)
    return StabilityVerdict(True, non_osc, non_osc_kind, non_osc_bound - x)


def classify_poles(tf: RationalTF) -> PoleClassification:
    """Locate the denominator roots of a discrete TF against the unit circle.

    Poles within UNIT_CIRCLE_TOL of the circle are classified as not inside.
    ``all_real_in_0_1`` demands every pole real (tiny imaginary part allowed)
    and strictly between 0 and 1.
    """
    if not tf.is_discrete:
        raise ValueError("discrete transfer function required")
    if tf.den.degree < 1:
        return PoleClassification(0.0, True, True)
    roots = poly_roots(tf.den).roots
    max_mag = max(abs(p) for p in roots)
    all_in = all(abs(p) < 1.0 - UNIT_CIRCLE_TOL for p in roots)
    all_real = all(
        abs(p.imag) <= UNIT_CIRCLE_TOL * max(1.0, abs(p))
        and 0.0 < p.real < 1.0 - UNIT_CIRCLE_TOL
        for p in roots
    )
    return PoleClassification(max_mag, all_in, all_real)


def config_for_sweep(base: DobConfig, param: str, value: float) -> DobConfig:
    """Rebuild a config at one sweep point.

    ``alpha`` is swept through the nominal inertia (the usual tuning knob),
    leaving true plant values and the nominal thrust coefficient untouched;
    ``g_dob`` is replaced directly.
    """
    if param == "alpha":
        plant = base.plant
        new_plant = PlantParams(
            J_m=plant.J_m,
            K_t=plant.K_t,
            J_mn=value * plant.J_m * plant.K_t / plant.K_tn,
            K_tn=plant.K_tn,
        )
        return replace(base, plant=new_plant)
    if param == "g_dob":
        return replace(base, g_dob=value)
    raise ValueError(f"unknown sweep parameter {param!r}")


def _outer_poles(cfg: DobConfig, gains: OuterGains) -> tuple:
    inner = make_inner_loop(cfg)
    outer = make_outer_loop(inner, make_pd(gains, cfg.Ts))
    char = outer.L.den + outer.L.num
    return poly_roots(char).roots


def _match_branches(prev: tuple, new: tuple) -> tuple:
    """Greedy nearest-neighbour ordering of ``new`` against ``prev``."""
    remaining = list(new)
    ordered = []
    for p in prev:
        j = min(range(len(remaining)), key=lambda k: abs(remaining[k] - p))
        ordered.append(remaining.pop(j))
    return tuple(ordered)


def bisect_threshold(predicate, lo: float, hi: float, rel_tol: float = 1e-6) -> float:
    """Bisection boundary of a monotone predicate: True at lo, False at hi."""
    if not predicate(lo) or predicate(hi):
        raise ValueError("predicate must hold at lo and fail at hi")
    while hi - lo > rel_tol * abs(hi):
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def root_locus(
    base_cfg: DobConfig,
    gains: OuterGains,
    param: str,
    values,
) -> LocusBranch:
    """Closed outer-loop pole branches over an increasing parameter grid.

    For each value the outer loop is rebuilt and the characteristic roots
    extracted; consecutive pole sets are branch-matched by nearest neighbour.
    ``exit_value`` refines, by bisection to 1e-6 relative, the first parameter
    value at which the largest pole magnitude crosses the unit circle from
    inside to outside; it is None when no such crossing occurs on the grid.
    """
    values = [float(v) for v in values]
    if len(values) < 2:
        raise ValueError("need at least 2 sweep values")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be strictly increasing")

    pole_sets = []
    for v in values:
        poles = _outer_poles(config_for_sweep(base_cfg, param, v), gains)
        if pole_sets:
            poles = _match_branches(pole_sets[-1], poles)
        pole_sets.append(tuple(poles))
    max_mags = tuple(max(abs(p) for p in ps) for ps in pole_sets)

    exit_value = None
    for (v0, m0), (v1, m1) in zip(zip(values, max_mags), zip(values[1:], max_mags[1:])):
        if m0 < 1.0 <= m1:
            exit_value = bisect_threshold(
                lambda v: max(abs(p) for p in _outer_poles(config_for_sweep(base_cfg, param, v), gains)) < 1.0,
                v0,
                v1,
            )
            break

    return LocusBranch(
        param=param,
        param_values=tuple(values),
        pole_sets=tuple(pole_sets),
        max_mags=max_mags,
        exit_value=exit_value,
    )
