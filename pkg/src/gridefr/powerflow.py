"""Radial feeder power flow with voltage-dependent loads and point-of-load converters.

Backward/forward current sweep on the branch tree, complex arithmetic
throughout. Loads follow the exponential model P = P0 * |V|^n_p,
Q = Q0 * |V|^n_q at the supply voltage, except where a point-of-load
converter pins its cluster to a fixed output voltage; the converter then
draws a series loss proportional to the apparent power it processes.
Impedances and voltages are per-unit on ``network.base_mva``; the public
interface speaks kW/kvar.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .grid import CDC, MV_LOAD, ON_LOAD, FeederNetwork, CdcProfile

V_COLLAPSE = 0.3  # below this magnitude the sweep has lost physical meaning

# Loading bands (kVA, per customer-cluster equivalent) and the voltage boost
# added to the regulation target, so remote customers stay inside limits as
# the feeder loads up.
LDC_BANDS = ((10.0, 0.0), (15.0, 0.01), (20.0, 0.015), (float("inf"), 0.02))

# Fixed off-load tap offset applied per season.
SEASONAL_OFFSETS = {"winter": 0.05, "spring": 0.025, "summer": 0.025, "autumn": 0.025}


class PowerFlowError(RuntimeError):
    """Sweep failed: voltage collapse or no convergence within the cap."""


@dataclass(frozen=True)
class TapState:
    """Tap multipliers per transformer, keyed by transformer name."""

    positions: tuple[tuple[str, float], ...] = ()

    def tap_for(self, name: str, default: float = 1.0) -> float:
        for key, value in self.positions:
            if key == name:
                return value
        return default

    def with_tap(self, name: str, tap: float) -> "TapState":
        rest = tuple(p for p in self.positions if p[0] != name)
        return TapState(rest + ((name, float(tap)),))

    @classmethod
    def nominal(cls, network: FeederNetwork) -> "TapState":
        return cls(tuple((tr.name, 1.0) for tr in network.transformers))


@dataclass(frozen=True)
class PowerFlowSolution:
    """Converged operating point of one feeder at one timestep."""

    v: dict[str, float]  # voltage magnitude, p.u.
    angle: dict[str, float]  # voltage angle, rad
    branch_current: dict[tuple[str, str], float]  # magnitude, p.u.
    branch_loss_kw: dict[tuple[str, str], float]
    source_kw: float
    source_kvar: float
    line_loss_kw: float
    cdc_load_kw: dict[str, float]  # consumption at the point of load
    cdc_load_kvar: dict[str, float]
    pec_loss_kw: dict[str, float]  # converter series loss, zero when inactive
    clamped: dict[str, bool]
    iterations: int
    converged: bool

    @property
    def min_load_voltage(self) -> float:
        return min(self.v[c] for c in self.cdc_load_kw)

    @property
    def total_load_kw(self) -> float:
        return sum(self.cdc_load_kw.values())


def _topology(network: FeederNetwork):
    """Topological node order and child-branch lists (network pre-validated)."""
    children: dict[str, list] = {n.id: [] for n in network.nodes}
    for br in network.branches:
        children[br.from_node].append(br)
    order = []
    stack = [network.source().id]
    while stack:
        nid = stack.pop()
        order.append(nid)
        for br in children[nid]:
            stack.append(br.to_node)
    return order, children


def solve_feeder(
    network: FeederNetwork,
    profiles: Sequence[CdcProfile],
    t: int,
    taps: Optional[TapState] = None,
    v_source: float = 1.0,
    pvc: Optional[Union[float, Mapping[str, float]]] = None,
    mv_loads: Optional[Mapping[str, tuple[float, float]]] = None,
    loss_fraction: float = 0.02,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> PowerFlowSolution:
    """Solve one timestep by backward/forward sweep from a flat start.

    ``pvc`` activates point-of-load converters: a float applies one output
    set-point to every cluster, a mapping selects clusters individually. A
    converted cluster consumes P0 * V_set^n_p and Q0 * V_set^n_q regardless
    of its feeder-side voltage, plus an active-power converter loss of
    ``loss_fraction`` times the apparent power processed.

    ``tol`` bounds the voltage change between sweeps; tighten it (1e-12)
    when two solutions are going to be differenced. Raises
    ``PowerFlowError`` on collapse or when the iteration cap is hit.
    """
    if taps is None:
        taps = TapState.nominal(network)
    base_kw = network.base_mva * 1000.0

    prof_by_node = {p.cdc_id: p for p in profiles}
    for nid in network.cdc_ids():
        if nid not in prof_by_node:
            raise ValueError(f"no demand profile for cluster node {nid!r}")

    def setpoint(nid: str) -> Optional[float]:
        if pvc is None:
            return None
        if isinstance(pvc, Mapping):
            return pvc.get(nid)
        return float(pvc)

    tap_by_branch = {tr.branch: taps.tap_for(tr.name) for tr in network.transformers}
    order, children = _topology(network)
    parent_branch = {br.to_node: br for br in network.branches}
    kinds = {n.id: n.kind for n in network.nodes}

    mv_loads = mv_loads or {}
    for nid in mv_loads:
        if kinds.get(nid) != MV_LOAD:
            raise ValueError(f"{nid!r} is not a bulk load node")

    def node_power(nid: str, vmag: float):
        """(S p.u., consumption kW, consumption kvar, pec kW, clamped)"""
        kind = kinds[nid]
        if kind == CDC:
            prof = prof_by_node[nid]
            p0, q0 = float(prof.p_kw[t]), float(prof.q_kvar[t])
            n_p, n_q = float(prof.n_p[t]), float(prof.n_q[t])
            v_set = setpoint(nid)
            if v_set is not None:
                p_cons = p0 * v_set**n_p
                q_cons = q0 * v_set**n_q
                pec = loss_fraction * float(np.hypot(p_cons, q_cons))
                return complex(p_cons + pec, q_cons) / base_kw, p_cons, q_cons, pec, True
            p_cons = p0 * vmag**n_p
            q_cons = q0 * vmag**n_q
            return complex(p_cons, q_cons) / base_kw, p_cons, q_cons, 0.0, False
        if kind == MV_LOAD and nid in mv_loads:
            p_kw, q_kvar = mv_loads[nid]
            return complex(p_kw, q_kvar) / base_kw, 0.0, 0.0, 0.0, False
        return 0j, 0.0, 0.0, 0.0, False

    v: dict[str, complex] = {nid: complex(v_source) for nid in order}
    current: dict[tuple[str, str], complex] = {}
    cdc_p: dict[str, float] = {}
    cdc_q: dict[str, float] = {}
    pec: dict[str, float] = {}
    clamped: dict[str, bool] = {}

    def backward() -> complex:
        """Accumulate branch currents leaf-to-source at the current voltages.

        Returns the total current drawn from the source node, referred to
        the source side of any head transformer.
        """
        drawn: dict[str, complex] = {}
        for nid in reversed(order):
            s_pu, p_cons, q_cons, pec_kw, is_clamped = node_power(nid, abs(v[nid]))
            if kinds[nid] == CDC:
                cdc_p[nid], cdc_q[nid] = p_cons, q_cons
                pec[nid] = pec_kw
                clamped[nid] = is_clamped
            i_acc = (s_pu / v[nid]).conjugate() if s_pu != 0 else 0j
            for br in children[nid]:
                # ideal-transformer head: primary current = tap * secondary
                i_acc += tap_by_branch.get(br.key, 1.0) * current[br.key]
            parent = parent_branch.get(nid)
            if parent is not None:
                current[parent.key] = i_acc
            drawn[nid] = i_acc
        return drawn[order[0]]

    converged = False
    iterations = 0
    worst = (0.0, order[0])
    for iterations in range(1, max_iter + 1):
        backward()
        delta, worst = 0.0, (0.0, order[0])
        for nid in order:
            for br in children[nid]:
                tap = tap_by_branch.get(br.key, 1.0)
                new_v = tap * v[nid] - complex(br.r, br.x) * current[br.key]
                if abs(new_v) < V_COLLAPSE:
                    raise PowerFlowError(
                        f"voltage collapse at {br.to_node!r} (|V|={abs(new_v):.3f} p.u.)"
                    )
                step = abs(new_v - v[br.to_node])
                if step > delta:
                    delta, worst = step, (step, br.to_node)
                v[br.to_node] = new_v
        if delta < tol:
            converged = True
            break
    if not converged:
        raise PowerFlowError(
            f"no convergence after {max_iter} sweeps; worst voltage change "
            f"{worst[0]:.3e} p.u. at node {worst[1]!r}"
        )

    # final accumulation at the settled voltages, so reported flows, losses
    # and injection describe one single operating point
    i_src = backward()
    s_src = v[order[0]] * i_src.conjugate() * base_kw

    branch_cur = {}
    branch_loss = {}
    loss_total = 0.0
    for br in network.branches:
        i = current[br.key]
        branch_cur[br.key] = abs(i)
        lkw = (i.real**2 + i.imag**2) * br.r * base_kw
        branch_loss[br.key] = lkw
        loss_total += lkw

    return PowerFlowSolution(
        v={nid: abs(vc) for nid, vc in v.items()},
        angle={nid: cmath.phase(vc) for nid, vc in v.items()},
        branch_current=branch_cur,
        branch_loss_kw=branch_loss,
        source_kw=s_src.real,
        source_kvar=s_src.imag,
        line_loss_kw=loss_total,
        cdc_load_kw=cdc_p,
        cdc_load_kvar=cdc_q,
        pec_loss_kw=pec,
        clamped=clamped,
        iterations=iterations,
        converged=converged,
    )


def ldc_target(loading_kva: float, bands=LDC_BANDS) -> float:
    """Regulation target in p.u. for a given per-cluster-equivalent loading."""
    if loading_kva < 0:
        raise ValueError(f"negative loading {loading_kva}")
    for threshold, boost in bands:
        if loading_kva <= threshold:
            return 1.0 + boost
    return 1.0 + bands[-1][1]


def seasonal_tap(season: str) -> float:
    """Off-load tap offset applied per season (added to the 1.0 ratio)."""
    try:
        return SEASONAL_OFFSETS[season.lower()]
    except KeyError:
        raise ValueError(f"unknown season {season!r}") from None


def apply_oltc(
    loading_kva: float,
    v_secondary: float,
    taps: TapState,
    name: str,
    positions: Sequence[float],
    deadband: float = 0.015,
    step: float = 0.005,
    bands=LDC_BANDS,
) -> TapState:
    """One on-load tap decision against the line-drop-compensated target.

    Moves the named transformer one discrete ``step`` toward the target
    only when the secondary voltage sits outside target +/- ``deadband``,
    clipped to the declared position range. The deadband exceeds the step
    so repeated application cannot hunt.
    """
    target = ldc_target(loading_kva, bands)
    tap = taps.tap_for(name)
    lo, hi = min(positions), max(positions)
    if v_secondary < target - deadband and tap + step <= hi + 1e-9:
        return taps.with_tap(name, tap + step)
    if v_secondary > target + deadband and tap - step >= lo - 1e-9:
        return taps.with_tap(name, tap - step)
    return taps


def regulate_feeder(
    network: FeederNetwork,
    profiles: Sequence[CdcProfile],
    t: int,
    taps: Optional[TapState] = None,
    ldc_scale: Optional[float] = None,
    deadband: float = 0.015,
    step: float = 0.005,
    max_moves: int = 60,
    **solve_kwargs,
) -> tuple[TapState, PowerFlowSolution]:
    """Settle every on-load tap changer, re-solving after each move.

    ``ldc_scale`` converts primary kVA to the per-cluster-equivalent
    loading the boost bands speak; it defaults to the cluster count.
    """
    if taps is None:
        taps = TapState.nominal(network)
    oltcs = [tr for tr in network.transformers if tr.mode == ON_LOAD]
    sol = solve_feeder(network, profiles, t, taps=taps, **solve_kwargs)
    if not oltcs:
        return taps, sol
    if ldc_scale is None:
        ldc_scale = max(len(network.cdc_ids()), 1)

    for _ in range(max_moves):
        loading = float(np.hypot(sol.source_kw, sol.source_kvar)) / ldc_scale
        moved = False
        for tr in oltcs:
            new_taps = apply_oltc(
                loading, sol.v[tr.branch[1]], taps, tr.name, tr.positions, deadband, step
            )
            if new_taps is not taps:
                taps = new_taps
                moved = True
        if not moved:
            break
        sol = solve_feeder(network, profiles, t, taps=taps, **solve_kwargs)
    return taps, sol
