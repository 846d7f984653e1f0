"""Fast demand-response capability from point-of-load voltage control.

Stage-one outputs: how much consumption a feeder can shed within the
response window by dropping customer-cluster voltages to the statutory
floor, the weaker equivalent achievable from the substation tap changer
alone, converter sizing for every cluster, and the scaling of regional
profiles to system level.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .grid import ON_LOAD, CdcProfile, FeederNetwork, SynthesisParams
from .powerflow import PowerFlowError, PowerFlowSolution, TapState, regulate_feeder, solve_feeder

QUANTILES = (5.0, 50.0, 95.0)


@dataclass(frozen=True)
class EfrProfile:
    """Per-timestep response capability, with seasonal spread summaries."""

    pvc_mw: np.ndarray
    vcs_mw: np.ndarray
    delta_pct: np.ndarray  # nan where pvc is zero
    seasons: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("pvc_mw", "vcs_mw", "delta_pct"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.pvc_mw) != len(self.vcs_mw) or len(self.pvc_mw) != len(self.delta_pct):
            raise ValueError("profile arrays must share one length")
        if self.seasons and len(self.seasons) != len(self.pvc_mw):
            raise ValueError("season labels must match the timestep count")

    def seasonal_summary(self) -> dict[str, dict[str, tuple[float, float, float]]]:
        """5th/50th/95th percentile of capability, grouped by season label."""
        labels = self.seasons if self.seasons else ("all",) * len(self.pvc_mw)
        keys = np.asarray(labels)
        out = {}
        for season in dict.fromkeys(labels):  # insertion order, no duplicates
            mask = keys == season
            out[season] = {
                "pvc": tuple(np.percentile(self.pvc_mw[mask], QUANTILES)),
                "vcs": tuple(np.percentile(self.vcs_mw[mask], QUANTILES)),
            }
        return out


@dataclass(frozen=True)
class PecEntry:
    """Converter sizing for one customer cluster."""

    cdc_id: str
    s_c_kva: float
    v_c: float  # series voltage processed, p.u.
    i_l: float  # cluster-side load current at the set-point, kVA per p.u. volt
    pf_prime: float
    rating_kva: int


@dataclass(frozen=True)
class PecRating:
    """Cluster-by-cluster converter table with study-level totals."""

    entries: tuple[PecEntry, ...]
    replication: float
    total_gva: float
    capex_low_gbp: float
    capex_typical_gbp: float
    capex_high_gbp: float
    maintenance_gbp_per_year: float


def efr_pvc(
    baseline: PowerFlowSolution,
    clamped: PowerFlowSolution,
    profiles: Sequence[CdcProfile],
    t: int,
    v_min: float = 0.95,
    include_losses: bool = True,
) -> float:
    """Response capability in MW from dropping every cluster to ``v_min``.

    Assembled from the per-cluster demand reduction at the baseline supply
    voltages, minus the network-loss change and the converter losses; the
    brute-force equivalent is the difference of the two source injections.
    Values that the loss terms drive negative are floored at zero (no
    usable response).
    """
    if not (baseline.converged and clamped.converged):
        raise PowerFlowError("capability needs converged baseline and clamped solutions")
    reduction = 0.0
    for prof in profiles:
        nid = prof.cdc_id
        if nid not in baseline.v:
            continue
        p0 = float(prof.p_kw[t])
        n_p = float(prof.n_p[t])
        reduction += p0 * (baseline.v[nid] ** n_p - v_min**n_p)
    kw = reduction
    if include_losses:
        delta_ll = clamped.line_loss_kw - baseline.line_loss_kw
        kw -= delta_ll + sum(clamped.pec_loss_kw.values())
    return max(kw, 0.0) / 1000.0


def efr_vcs(
    network: FeederNetwork,
    profiles: Sequence[CdcProfile],
    t: int,
    taps: Optional[TapState] = None,
    v_min: float = 0.95,
    step: float = 0.005,
    include_losses: bool = True,
    mv_loads: Optional[Mapping[str, tuple[float, float]]] = None,
    loss_fraction: float = 0.02,
    tol: float = 1e-12,
) -> float:
    """Response capability in MW from stepping the head tap changer down.

    The tap walks down in discrete steps while every node voltage stays at
    or above ``v_min``; the search stops one step before the first
    violation. Feeders whose weakest node already sits at the floor return
    zero. Without an on-load transformer at the head, the source voltage
    itself is stepped.
    """
    if taps is None:
        taps = TapState.nominal(network)
    kwargs = dict(mv_loads=mv_loads, loss_fraction=loss_fraction, tol=tol)
    source_id = network.source().id
    head = next(
        (tr for tr in network.transformers if tr.mode == ON_LOAD and tr.branch[0] == source_id),
        None,
    )

    def solve_at(k: int) -> PowerFlowSolution:
        if head is None:
            return solve_feeder(network, profiles, t, taps=taps, v_source=1.0 - k * step, **kwargs)
        tap = taps.tap_for(head.name) - k * step
        if tap < min(head.positions) - 1e-9:
            raise PowerFlowError("tap range exhausted")
        return solve_feeder(network, profiles, t, taps=taps.with_tap(head.name, tap), **kwargs)

    baseline = solve_at(0)
    best = baseline
    for k in range(1, 200):
        try:
            sol = solve_at(k)
        except PowerFlowError:
            break
        if min(sol.v.values()) < v_min - 1e-12:
            break
        best = sol

    kw = baseline.total_load_kw - best.total_load_kw
    if include_losses:
        kw -= best.line_loss_kw - baseline.line_loss_kw
    return max(kw, 0.0) / 1000.0


def delta_efr(vcs_mw: float, pvc_mw: float) -> float:
    """Shortfall of substation control relative to point-of-load control, %."""
    if pvc_mw == 0:
        return math.nan
    return 100.0 * (vcs_mw - pvc_mw) / pvc_mw


def pec_rating(
    cdc_id: str,
    p0_kw: float,
    q0_kvar: float,
    n_p: float,
    n_q: float,
    v_b_prime: float,
    v_min: float = 0.95,
    v_max: float = 1.05,
    fully_controllable: bool = False,
) -> PecEntry:
    """Size one cluster's converter from its worst-case operating point.

    The converter carries the series voltage between the feeder side and
    the held set-point at the set-point load current, padded by the load
    power factor. Fully controllable operation must also hold the upper
    set-point, so both are evaluated and the larger sizing wins. Ratings
    round up to whole kVA.
    """
    if v_b_prime < v_min:
        raise ValueError(f"feeder-side voltage {v_b_prime} below the {v_min} floor")

    def size_at(v_t: float):
        p_t = p0_kw * v_t**n_p
        q_t = q0_kvar * v_t**n_q
        s_t = float(np.hypot(p_t, q_t))
        i_l = s_t / v_t
        pf = p_t / s_t if s_t > 0 else 1.0
        v_c = abs(v_b_prime - v_t)
        return v_c * i_l * (1.0 + pf), v_c, i_l, pf

    candidates = [size_at(v_min)]
    if fully_controllable:
        candidates.append(size_at(v_max))
    s_c, v_c, i_l, pf = max(candidates, key=lambda c: c[0])
    return PecEntry(
        cdc_id=cdc_id,
        s_c_kva=s_c,
        v_c=v_c,
        i_l=i_l,
        pf_prime=pf,
        rating_kva=int(math.ceil(s_c - 1e-12)) if s_c > 0 else 0,
    )


def rating_table(
    entries: Sequence[PecEntry], params: SynthesisParams, replication: float = 1.0
) -> PecRating:
    """Aggregate converter entries into study totals and investment bands.

    Converter prices are quoted per kW and applied to kVA ratings one to
    one (near-unity converter power factor). ``replication`` scales this
    feeder's clusters up to the study population.
    """
    total_kva = sum(e.rating_kva for e in entries) * replication
    low, typical, high = params.converter_price_per_kw
    to_gbp = 1.0 / params.dollars_per_pound
    return PecRating(
        entries=tuple(entries),
        replication=replication,
        total_gva=total_kva / 1e6,
        capex_low_gbp=total_kva * low * to_gbp,
        capex_typical_gbp=total_kva * typical * to_gbp,
        capex_high_gbp=total_kva * high * to_gbp,
        maintenance_gbp_per_year=total_kva * params.maintenance_per_kw_year * to_gbp,
    )


def capability_at(
    network: FeederNetwork,
    profiles: Sequence[CdcProfile],
    t: int,
    taps: Optional[TapState] = None,
    regulate: bool = True,
    v_min: float = 0.95,
    include_losses: bool = True,
    mv_loads: Optional[Mapping[str, tuple[float, float]]] = None,
    loss_fraction: float = 0.02,
    tol: float = 1e-12,
) -> tuple[float, float, float, PowerFlowSolution]:
    """Both capability routes at one timestep: (pvc_mw, vcs_mw, delta_pct, baseline)."""
    kwargs = dict(mv_loads=mv_loads, loss_fraction=loss_fraction, tol=tol)
    if regulate:
        taps, baseline = regulate_feeder(network, profiles, t, taps=taps, **kwargs)
    else:
        taps = taps if taps is not None else TapState.nominal(network)
        baseline = solve_feeder(network, profiles, t, taps=taps, **kwargs)
    clamped = solve_feeder(network, profiles, t, taps=taps, pvc=v_min, **kwargs)
    pvc = efr_pvc(baseline, clamped, profiles, t, v_min, include_losses)
    vcs = efr_vcs(
        network, profiles, t, taps=taps, v_min=v_min, include_losses=include_losses, **kwargs
    )
    return pvc, vcs, delta_efr(vcs, pvc), baseline


def build_profile(
    network: FeederNetwork,
    profiles: Sequence[CdcProfile],
    timesteps: Optional[Sequence[int]] = None,
    seasons: Sequence[str] = (),
    workers: Optional[int] = None,
    **kwargs,
) -> EfrProfile:
    """Evaluate capability over a time range; timesteps run independently.

    Results are collected in timestep order regardless of worker count, so
    the worker setting (or the GRIDEFR_WORKERS environment variable) never
    changes the output.
    """
    if timesteps is None:
        timesteps = range(len(profiles[0].p_kw))
    timesteps = list(timesteps)
    if workers is None:
        workers = int(os.environ.get("GRIDEFR_WORKERS", "1"))

    def point(t: int):
        pvc, vcs, delta, _ = capability_at(network, profiles, t, **kwargs)
        return pvc, vcs, delta

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(point, timesteps))
    else:
        rows = [point(t) for t in timesteps]
    pvc, vcs, delta = (np.array(col) for col in zip(*rows))
    return EfrProfile(pvc_mw=pvc, vcs_mw=vcs, delta_pct=delta, seasons=tuple(seasons))


def scale_to_gb(regional: EfrProfile, sf: float, correction: float = 1.0) -> EfrProfile:
    """Scale a regional capability profile to the study population."""
    if sf <= 0 or correction <= 0:
        raise ValueError("scale factors must be positive")
    k = sf * correction
    return EfrProfile(
        pvc_mw=regional.pvc_mw * k,
        vcs_mw=regional.vcs_mw * k,
        delta_pct=np.array(regional.delta_pct),
        seasons=regional.seasons,
    )
