"""Economic and environmental metrics over committed schedules.

Everything here is pure aggregation: the rolling scheduler hands back one
committed record per hour, and these functions turn paired runs (with and
without voltage-control capability) into cost, payback, curtailment,
emission, and demand-index figures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .efr import PecRating
from .grid import FrequencyParams, GeneratorClass
from .scenarios import CommittedStep

HOURS_PER_YEAR = 8760.0


def operation_cost(
    steps: Sequence[CommittedStep],
    generators: Sequence[GeneratorClass],
    freq: FrequencyParams,
    dt_h: float = 1.0,
) -> float:
    """Realized cost of the committed hours: startup, no-load, marginal, shed."""
    total = 0.0
    for step in steps:
        for g in generators:
            total += step.values.get(f"nsg[{g.name}][0]", 0.0) * g.startup_cost
            total += step.values.get(f"nup[{g.name}][0]", 0.0) * dt_h * g.no_load_cost
            total += step.values.get(f"pg[{g.name}][0]", 0.0) * dt_h * g.marginal_cost
        total += step.values.get("ls[0]", 0.0) * dt_h * freq.load_shed_cost
    return total


def payback(savings: float, capex: float, maintenance: float = 0.0) -> float:
    """Simple undiscounted payback in years; infinite when net savings vanish."""
    net = savings - maintenance
    if net <= 0.0:
        return math.inf
    return capex / net


def wind_curtailment(
    steps: Sequence[CommittedStep], dt_h: float = 1.0
) -> tuple[float, float, float]:
    """(% of available wind curtailed, curtailed TWh, accommodated TWh).

    Percentage is NaN when the period had no wind at all.
    """
    curtailed = sum(s.values.get("wc[0]", 0.0) for s in steps) * dt_h
    available = sum(s.values.get("wind-available[0]", 0.0) for s in steps) * dt_h
    if available <= 0.0:
        return math.nan, 0.0, 0.0
    to_twh = 1e-6
    return (
        100.0 * curtailed / available,
        curtailed * to_twh,
        (available - curtailed) * to_twh,
    )


def co2_intensity(
    steps: Sequence[CommittedStep],
    generators: Sequence[GeneratorClass],
    dt_h: float = 1.0,
) -> float:
    """Fleet emissions over served demand, g/kWh; NaN when nothing was served."""
    emitted_kg = 0.0
    served_mwh = 0.0
    for step in steps:
        for g in generators:
            emitted_kg += (
                step.values.get(f"pg[{g.name}][0]", 0.0) * dt_h * g.emissions_kg_per_mwh
            )
        served = step.values.get("demand-total[0]", 0.0) - step.values.get("ls[0]", 0.0)
        served_mwh += served * dt_h
    if served_mwh <= 0.0:
        return math.nan
    # kg/MWh and g/kWh coincide numerically
    return emitted_kg / served_mwh


def c_pvc(p_pvc: float, bounds: tuple[float, float]) -> float:
    """Position of the voltage-controlled block inside its consumption envelope."""
    lo, hi = bounds
    if hi == lo:
        return math.nan
    if hi < lo:
        raise ValueError(f"envelope inverted: [{lo}, {hi}]")
    if p_pvc < lo - 1e-9 or p_pvc > hi + 1e-9:
        warnings.warn(
            f"consumption {p_pvc:.3f} MW outside envelope [{lo:.3f}, {hi:.3f}]; clamping",
            stacklevel=2,
        )
    return min(max((p_pvc - lo) / (hi - lo), 0.0), 1.0)


def pvc_envelope(base_mw: float, n_p: float, v_min: float = 0.95, v_max: float = 1.05) -> tuple[float, float]:
    """Consumption range of the block across its voltage window.

    Network and converter loss changes are neglected: the envelope scales
    nominal demand by the voltage window raised to the aggregate exponent.
    """
    return base_mw * v_min**n_p, base_mw * v_max**n_p


@dataclass(frozen=True)
class ValuationReport:
    """Paired-run valuation: a capability case against its zero-capability baseline."""

    scenario: str
    pvc_fraction: float
    hours: float
    operation_cost_gbp: float  # annualized
    baseline_cost_gbp: float  # annualized
    savings_gbp: float  # annualized
    capex_gbp: dict[str, float]  # by converter price band
    maintenance_gbp: float  # per year
    payback_years: dict[str, float]  # by converter price band
    curtailment_pct: float
    curtailed_twh: float
    recovered_twh: float
    co2_g_per_kwh: float
    c_pvc_series: tuple[float, ...] = field(default_factory=tuple)

    def rows(self) -> list[tuple[str, str, float, float]]:
        """Long-format (figure, series, x, y) rows for plotting."""
        out = [
            ("cost", self.scenario, self.pvc_fraction, self.operation_cost_gbp),
            ("savings", self.scenario, self.pvc_fraction, self.savings_gbp),
            ("curtailment", self.scenario, self.pvc_fraction, self.curtailment_pct),
            ("co2", self.scenario, self.pvc_fraction, self.co2_g_per_kwh),
        ]
        for band, years in self.payback_years.items():
            out.append((f"payback-{band}", self.scenario, self.pvc_fraction, years))
        for t, v in enumerate(self.c_pvc_series):
            out.append(("c-pvc", self.scenario, float(t), v))
        return out

    def summary(self) -> str:
        pay = ", ".join(
            f"{band} {years:.2f} yr" if math.isfinite(years) else f"{band} never"
            for band, years in self.payback_years.items()
        )
        lines = [
            f"scenario {self.scenario}, capability fraction {self.pvc_fraction:.0%}",
            f"annual operation cost £{self.operation_cost_gbp:,.0f}"
            f" (baseline £{self.baseline_cost_gbp:,.0f})",
            f"annual savings £{self.savings_gbp:,.0f}",
            f"payback: {pay}",
            f"wind curtailment {self.curtailment_pct:.2f}%"
            f" ({self.curtailed_twh:.4f} TWh lost, {self.recovered_twh:.4f} TWh used)",
            f"carbon intensity {self.co2_g_per_kwh:.1f} g/kWh",
        ]
        return "\n".join(lines)


def build_report(
    scenario: str,
    pvc_fraction: float,
    steps: Sequence[CommittedStep],
    baseline_steps: Sequence[CommittedStep],
    generators: Sequence[GeneratorClass],
    freq: FrequencyParams,
    rating: Optional[PecRating] = None,
    envelope_mw=None,
    dt_h: float = 1.0,
) -> ValuationReport:
    """Assemble the paired-run report, annualizing observed hours to a year."""
    if len(steps) != len(baseline_steps):
        raise ValueError("paired runs must cover the same hours")
    if not steps:
        raise ValueError("empty schedule")
    hours = len(steps) * dt_h
    scale = HOURS_PER_YEAR / hours
    cost = operation_cost(steps, generators, freq, dt_h) * scale
    base_cost = operation_cost(baseline_steps, generators, freq, dt_h) * scale
    savings = base_cost - cost
    if rating is not None:
        frac = pvc_fraction
        capex = {
            "low": rating.capex_low_gbp * frac,
            "typical": rating.capex_typical_gbp * frac,
            "high": rating.capex_high_gbp * frac,
        }
        maintenance = rating.maintenance_gbp_per_year * frac
    else:
        capex, maintenance = {}, 0.0
    pay = {band: payback(savings, cx, maintenance) for band, cx in capex.items()}
    pct, lost, used = wind_curtailment(steps, dt_h)
    series: tuple[float, ...] = ()
    if envelope_mw is not None:
        # Bounds may be scalars or per-hour arrays; arrays cycle like the
        # demand block does, so week-long runs reuse the daily envelope.
        lo = np.atleast_1d(np.asarray(envelope_mw[0], dtype=float))
        hi = np.atleast_1d(np.asarray(envelope_mw[1], dtype=float))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            series = tuple(
                c_pvc(
                    s.values.get("pvc-actual[0]", 0.0),
                    (float(lo[s.hour % len(lo)]), float(hi[s.hour % len(hi)])),
                )
                for s in steps
            )
    return ValuationReport(
        scenario=scenario,
        pvc_fraction=pvc_fraction,
        hours=hours,
        operation_cost_gbp=cost,
        baseline_cost_gbp=base_cost,
        savings_gbp=savings,
        capex_gbp=capex,
        maintenance_gbp=maintenance,
        payback_years=pay,
        curtailment_pct=pct,
        curtailed_twh=lost,
        recovered_twh=used,
        co2_g_per_kwh=co2_intensity(steps, generators, dt_h),
        c_pvc_series=series,
    )
