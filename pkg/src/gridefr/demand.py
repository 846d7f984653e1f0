"""Stochastic household demand with voltage sensitivity, aggregated per customer cluster.

Each appliance runs a seeded two-state (off/on) usage chain whose turn-on
rate follows a time-of-day propensity curve, with month and weekday
modifiers. Active/reactive power at nominal voltage come from nameplate
ratings; voltage behaviour is a ZIP mix converted to an equivalent
exponential exponent by derivative matching at V = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .grid import CdcProfile

WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
WEEKEND = ("sat", "sun")


@dataclass(frozen=True)
class ApplianceSpec:
    """Nameplate and usage statistics for one appliance type."""

    name: str
    rated_w: float
    zip_p: tuple[float, float, float]  # (Z, I, P) for active power, sums to 1
    zip_q: tuple[float, float, float]
    power_factor: float = 1.0
    propensity: tuple[float, ...] = tuple([1.0] * 24)  # turn-on weight per hour bin
    mean_on_h: Optional[float] = 1.0  # None: never switches off once on
    starts_per_day: float = 1.0  # expected activations at propensity 1
    month_weights: tuple[float, ...] = tuple([1.0] * 12)
    weekend_factor: float = 1.0
    always_on: bool = False

    def __post_init__(self):
        for label, coeffs in (("zip_p", self.zip_p), ("zip_q", self.zip_q)):
            if abs(sum(coeffs) - 1.0) > 1e-9:
                raise ValueError(f"{self.name}: {label} coefficients must sum to 1, got {coeffs}")
        if any(not (0 <= p <= 1) for p in self.propensity):
            raise ValueError(f"{self.name}: propensity values must lie in [0, 1]")

    @property
    def n_p(self) -> float:
        return zip_exponent(self.zip_p)

    @property
    def n_q(self) -> float:
        return zip_exponent(self.zip_q)

    @property
    def q_var(self) -> float:
        pf = min(max(self.power_factor, 1e-6), 1.0)
        return self.rated_w * np.sqrt(1.0 / pf**2 - 1.0)


@dataclass(frozen=True)
class HouseholdProfile:
    """One household-day: totals, per-appliance states, and derived exponents."""

    p_kw: np.ndarray
    q_kvar: np.ndarray
    on: np.ndarray  # bool, appliances x timesteps
    n_p: np.ndarray
    n_q: np.ndarray
    appliance_names: tuple[str, ...] = ()

    @property
    def steps(self) -> int:
        return len(self.p_kw)


@dataclass(frozen=True)
class ExogenousProfile:
    """Non-voltage-responsive demand block (EV, heat pump, industrial/commercial)."""

    kind: str  # EV | HP | industrial-commercial
    mw: np.ndarray
    voltage_responsive: bool = False

    def __post_init__(self):
        mw = np.asarray(self.mw, dtype=float)
        if np.any(mw < 0):
            raise ValueError(f"{self.kind}: negative power")
        mw.setflags(write=False)
        object.__setattr__(self, "mw", mw)

    @property
    def daily_energy_mwh(self) -> float:
        return float(np.sum(self.mw)) * 24.0 / len(self.mw)


def zip_exponent(zip_coeffs: Sequence[float], v: float = 1.0) -> float:
    """Exponent n such that P0*V^n matches the ZIP polynomial's value and slope at V = 1.

    For coefficients (Z, I, P) with Z + I + P = 1 this is n = 2Z + I. The
    ``v`` argument only gates the validity range; the match point is V = 1.
    """
    if not (0.9 <= v <= 1.1):
        raise ValueError(f"voltage {v} outside the supported [0.9, 1.1] band")
    z, i, p = zip_coeffs
    total = z + i + p
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"ZIP coefficients must sum to 1, got {total}")
    return (2.0 * z + i) / total


def _hour_bins(propensity: Sequence[float], steps: int) -> np.ndarray:
    """Resample a propensity curve onto the study resolution by bin lookup."""
    curve = np.asarray(propensity, dtype=float)
    idx = (np.arange(steps) * len(curve)) // steps
    return curve[idx]


def synth_household(
    seed: int,
    occupants: int,
    day: str,
    month: int,
    catalog: Iterable[ApplianceSpec],
    steps_per_day: int = 24,
) -> HouseholdProfile:
    """Simulate one household-day of appliance activity.

    Deterministic for a fixed argument tuple: the RNG is derived from
    ``seed`` alone and appliances are processed in catalog order.
    """
    catalog = tuple(catalog)
    if not catalog:
        raise ValueError("appliance catalog is empty")
    if occupants < 1:
        raise ValueError("occupants must be >= 1")
    day = day.lower()
    if day not in WEEKDAYS:
        raise ValueError(f"unknown day {day!r}")
    if not (1 <= month <= 12):
        raise ValueError(f"month {month} outside 1..12")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD3A1]))
    steps = steps_per_day
    dt_h = 24.0 / steps
    occupant_factor = min(0.6 + 0.2 * occupants, 1.8)

    on = np.zeros((len(catalog), steps), dtype=bool)
    for a_idx, spec in enumerate(catalog):
        u_on = rng.random(steps)
        u_off = rng.random(steps)
        if spec.always_on:
            on[a_idx, :] = True
            continue
        prop = _hour_bins(spec.propensity, steps)
        day_factor = spec.weekend_factor if day in WEEKEND else 1.0
        rate = spec.starts_per_day * spec.month_weights[month - 1] * day_factor * occupant_factor
        # Turn-on probability per step, normalized so the expected number of
        # activations over the day equals the configured rate.
        weight_sum = float(np.sum(prop))
        p_on = rate * prop / weight_sum if weight_sum > 0 else np.zeros(steps)
        np.clip(p_on, 0.0, 1.0, out=p_on)
        if spec.mean_on_h is None:
            p_off = 0.0
        else:
            p_off = min(1.0, dt_h / max(spec.mean_on_h, 1e-9))
        state = False
        for t in range(steps):
            if state:
                state = u_off[t] >= p_off
            if not state:
                state = u_on[t] < p_on[t]
            on[a_idx, t] = state

    rated_kw = np.array([a.rated_w for a in catalog]) / 1000.0
    rated_kvar = np.array([a.q_var for a in catalog]) / 1000.0
    n_p_app = np.array([a.n_p for a in catalog])
    n_q_app = np.array([a.n_q for a in catalog])

    # Cycles shorter than a step (kettle, oven) occupy a fraction of it, so
    # grid-facing power is nameplate derated by the duty within the step.
    duty = np.array(
        [
            1.0 if a.mean_on_h is None else min(1.0, a.mean_on_h / dt_h)
            for a in catalog
        ]
    )
    rated_kw = rated_kw * duty
    rated_kvar = rated_kvar * duty

    p = on.T @ rated_kw
    q = on.T @ rated_kvar
    with np.errstate(invalid="ignore"):
        n_p = np.where(p > 0, (on.T @ (rated_kw * n_p_app)) / np.where(p > 0, p, 1.0), 0.0)
        n_q = np.where(q > 0, (on.T @ (rated_kvar * n_q_app)) / np.where(q > 0, q, 1.0), 0.0)

    return HouseholdProfile(
        p_kw=p, q_kvar=q, on=on, n_p=n_p, n_q=n_q, appliance_names=tuple(a.name for a in catalog)
    )


def aggregate_cdc(
    profiles: Iterable[HouseholdProfile], cdc_id: str = "cdc0", households: Optional[int] = None
) -> CdcProfile:
    """Sum household demand and power-weight the voltage exponents.

    The aggregate exponent is the consumption-weighted mean of member
    exponents, which matches the slope of the summed exponential models at
    V = 1 exactly. Timesteps with zero total get exponent 0 by convention.
    """
    profiles = tuple(profiles)
    if not profiles:
        raise ValueError("no household profiles to aggregate")
    steps = profiles[0].steps
    if any(p.steps != steps for p in profiles):
        raise ValueError("household profiles are on different timestep grids")

    p = np.sum([h.p_kw for h in profiles], axis=0)
    q = np.sum([h.q_kvar for h in profiles], axis=0)
    wp = np.sum([h.p_kw * h.n_p for h in profiles], axis=0)
    wq = np.sum([h.q_kvar * h.n_q for h in profiles], axis=0)
    n_p = np.where(p > 0, wp / np.where(p > 0, p, 1.0), 0.0)
    n_q = np.where(q > 0, wq / np.where(q > 0, q, 1.0), 0.0)

    return CdcProfile(
        cdc_id=cdc_id,
        p_kw=p,
        q_kvar=q,
        n_p=n_p,
        n_q=n_q,
        households=households if households is not None else len(profiles),
    )


def build_exogenous(
    mode: str,
    base: Iterable[ExogenousProfile],
    scale: float = 1.0,
    reference_shape: Optional[np.ndarray] = None,
    max_shift_factor: float = 3.0,
) -> tuple[ExogenousProfile, ...]:
    """Scale EV/HP blocks and, in smart mode, shift their energy off-peak.

    Non-smart profiles are reshaped onto ``reference_shape`` (the cluster
    demand shape) so they peak with it. Smart mode runs a greedy arbitrage:
    daily energy is re-allocated towards the lowest-``reference_shape``
    hours under a per-hour cap of ``max_shift_factor`` times the profile's
    flat level, conserving daily energy; hours with equal signal keep the
    original split, so a flat signal is a fixed point.
    """
    if mode not in ("smart", "non-smart"):
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    for prof in base:
        mw = np.asarray(prof.mw, dtype=float) * scale
        steps = len(mw)
        energy = float(np.sum(mw))
        if energy <= 0:
            out.append(ExogenousProfile(prof.kind, mw))
            continue
        if reference_shape is None:
            signal = np.ones(steps)
        else:
            signal = np.asarray(reference_shape, dtype=float)
            if len(signal) != steps:
                raise ValueError("reference shape length mismatch")

        if mode == "non-smart":
            total = float(np.sum(signal))
            shape = signal / total if total > 0 else np.full(steps, 1.0 / steps)
            out.append(ExogenousProfile(prof.kind, energy * shape))
            continue

        cap = max_shift_factor * energy / steps
        shifted = np.zeros(steps)
        remaining = energy
        # Fill cheapest signal levels first; within a level, keep the
        # original distribution (clipped to cap) so ties do not reshuffle.
        for level in np.unique(signal):
            group = np.flatnonzero(signal == level)
            if remaining <= 1e-15:
                break
            want = mw[group]
            want_sum = float(np.sum(want))
            group_cap = cap * len(group)
            take = min(remaining, group_cap)
            if take >= group_cap - 1e-15:
                shifted[group] = cap
            elif want_sum <= 1e-15:
                shifted[group] = take / len(group)
            else:
                alloc = want * (take / want_sum)
                # redistribute any clipped excess inside the group
                for _ in range(steps):
                    over = np.clip(alloc - cap, 0.0, None)
                    excess = float(np.sum(over))
                    if excess <= 1e-12:
                        break
                    alloc = np.minimum(alloc, cap)
                    room = cap - alloc
                    room_sum = float(np.sum(room))
                    if room_sum <= 1e-15:
                        break
                    alloc = alloc + room * (excess / room_sum)
                shifted[group] = alloc
            remaining -= float(np.sum(shifted[group]))
        if remaining > 1e-9 * energy:
            # caps exhausted in cheap hours; spill the rest pro rata
            headroom = np.clip(cap - shifted, 0.0, None)
            total_head = float(np.sum(headroom))
            if total_head > 0:
                shifted += headroom * (remaining / total_head)
        out.append(ExogenousProfile(prof.kind, shifted))
    return tuple(out)
