"""Frequency-constrained stochastic unit commitment over a scenario tree.

Commitment is clustered: integer counts of identical units per class, with
startup linking, min-up/min-down counting over tree ancestors, and startup
lead times handled by aliasing each start decision to the ancestor where
it must be taken (so siblings that share that ancestor share the start,
which is exactly non-anticipativity). Frequency security enters as the
rate-of-change floor on inertia, the quasi-steady-state response adequacy
row, and an inner linearization of the nadir surface; an independent
swing-equation integrator verifies committed operating points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import FrequencyParams, GeneratorClass, StorageUnit
from .milp import MilpInstance, MilpSolution, ModelBuilder, solve_milp
from .scenarios import CommittedStep, RollingState, ScenarioTree

NORMAL = "normal"
FULLY_CONTROLLABLE = "fully-controllable"


@dataclass(frozen=True)
class NadirCut:
    """a_h * H + a_g * R_G + a_e * R_E >= rhs"""

    a_h: float
    a_g: float
    a_e: float
    rhs: float


@dataclass(frozen=True)
class NadirCutSet:
    cuts: tuple[NadirCut, ...]
    h_range: tuple[float, float]
    e_range: tuple[float, float]
    grid: tuple[int, int]
    margin: float
    inner: bool = True


def required_pfr(h_mws: float, r_e: float, freq: FrequencyParams) -> float:
    """Exact slow-response requirement for the nadir to stay within limits.

    Solves the nadir equality for R_G given inertia and fast response.
    Infinite when the fast response cannot even be delivered in time
    (nonpositive delivery headroom).
    """
    k_e = freq.t_e / (4.0 * freq.delta_f_max)
    k_g = freq.t_g / (4.0 * freq.delta_f_max)
    a = h_mws / freq.f0 - k_e * r_e
    shortfall = max(freq.p_l_max - r_e, 0.0)
    if shortfall == 0.0:
        return 0.0
    if a <= 0.0:
        return math.inf
    return k_g * shortfall * shortfall / a


def linearize_nadir(
    freq: FrequencyParams,
    h_range: tuple[float, float],
    e_range: Optional[tuple[float, float]] = None,
    grid: tuple[int, int] = (20, 20),
    margin: float = 1e-3,
) -> NadirCutSet:
    """Secant-plane inner approximation of the nadir constraint.

    The required-PFR surface is jointly convex over (inertia, fast
    response) wherever delivery headroom is positive, so the plane through
    the surface values at each grid triangle lies on or above the surface
    inside that triangle. Requiring R_G to clear every such plane (plus
    ``margin``) therefore implies the exact constraint at every point of
    the gridded box: the cut set admits no insecure operating point.
    Conservatism shrinks with grid refinement.
    """
    if grid[0] < 2 or grid[1] < 2:
        raise ValueError("need at least 2 grid points per axis")
    h_lo, h_hi = h_range
    if h_lo <= 0 or h_hi <= h_lo:
        raise ValueError(f"infeasible family: inertia range [{h_lo}, {h_hi}]")
    k_e = freq.t_e / (4.0 * freq.delta_f_max)
    e_lo, e_hi = e_range if e_range is not None else (0.0, freq.p_l_max)
    # keep the whole box inside positive delivery headroom
    e_cap = 0.999 * h_lo / (freq.f0 * k_e) if k_e > 0 else math.inf
    e_hi = min(e_hi, e_cap)
    if e_hi <= e_lo:
        raise ValueError("infeasible family: no fast-response range with delivery headroom")

    hs = np.linspace(h_lo, h_hi, grid[0])
    es = np.linspace(e_lo, e_hi, grid[1])
    f = np.array([[required_pfr(h, e, freq) for e in es] for h in hs])

    cuts = []
    for i in range(grid[0] - 1):
        for j in range(grid[1] - 1):
            lower = ((i, j), (i + 1, j), (i, j + 1))
            upper = ((i + 1, j), (i, j + 1), (i + 1, j + 1))
            for tri in (lower, upper):
                pts = np.array([[hs[a], es[b], 1.0] for a, b in tri])
                vals = np.array([f[a][b] for a, b in tri])
                alpha, beta, gamma = np.linalg.solve(pts, vals)
                cuts.append(
                    NadirCut(a_h=-alpha, a_g=1.0, a_e=-beta, rhs=gamma + margin)
                )
    return NadirCutSet(
        cuts=tuple(cuts),
        h_range=(h_lo, h_hi),
        e_range=(e_lo, e_hi),
        grid=grid,
        margin=margin,
    )


def verify_frequency(
    h_mws: float,
    r_g: float,
    r_e: float,
    freq: FrequencyParams,
    dt: float = 1e-3,
) -> tuple[float, float]:
    """Integrate the post-loss swing equation; return (nadir Hz, initial RoCoF Hz/s).

    Uniform swing model: 2H/f0 * df/dt = -P_loss + EFR(t) + PFR(t), the
    fast response ramping linearly to full over T_e and the slow response
    over T_g. Trapezoidal integration is exact for the piecewise-linear
    imbalance, so only grid placement matters; the ramp knees and the
    zero-crossing of the imbalance are inserted explicitly.
    """
    if h_mws <= 0.0:
        return math.inf, math.inf
    p, t_e, t_g = freq.p_l_max, freq.t_e, freq.t_g
    rocof = p * freq.f0 / (2.0 * h_mws)

    def net(t: np.ndarray) -> np.ndarray:
        return (
            -p
            + r_e * np.minimum(t / t_e, 1.0)
            + r_g * np.minimum(t / t_g, 1.0)
        )

    knots = {t_e, t_g}
    early_slope = r_e / t_e + r_g / t_g
    if early_slope > 0:
        t1 = p / early_slope
        if 0 < t1 <= t_e:
            knots.add(t1)
    if r_g > 0:
        t2 = (p - r_e) * t_g / r_g
        if t_e < t2 <= t_g:
            knots.add(t2)
    times = np.union1d(np.arange(0.0, t_g + dt, dt), sorted(knots))
    times = times[times <= t_g + 1e-12]
    df = freq.f0 / (2.0 * h_mws) * cumulative_trapezoid(net(times), times, initial=0.0)
    nadir = float(max(0.0, -df.min()))
    if -p + r_e + r_g < -1e-9:
        # response never covers the loss; frequency keeps falling past T_g
        return math.inf, rocof
    return nadir, rocof


@dataclass(frozen=True)
class DispatchSchedule:
    """Solved tree: per-node variable values plus solve metadata."""

    status: str
    objective: float
    gap: float
    values: dict[str, float]
    binding: tuple[str, ...]
    certificate: tuple[str, ...] = ()

    def value(self, name: str, default: float = 0.0) -> float:
        return self.values.get(name, default)

    @classmethod
    def from_solution(
        cls, inst: MilpInstance, sol: MilpSolution, binding_tol: float = 1e-7
    ) -> "DispatchSchedule":
        if sol.x is None:
            return cls(sol.status, math.inf, math.inf, {}, (), sol.certificate)
        resid = inst.b_ub - inst.a_ub @ sol.x if inst.a_ub.shape[0] else np.array([])
        scale = np.maximum(1.0, np.abs(inst.b_ub)) if len(resid) else resid
        binding = tuple(
            inst.ub_names[r] for r in np.flatnonzero(np.abs(resid) <= binding_tol * scale)
        )
        values = {n: float(v) for n, v in zip(inst.var_names, sol.x)}
        return cls(sol.status, sol.objective, sol.gap, values, binding, sol.certificate)


def formulate(
    tree: ScenarioTree,
    generators: Sequence[GeneratorClass],
    storage: Sequence[StorageUnit],
    freq: FrequencyParams,
    cuts: NadirCutSet,
    mode: str = NORMAL,
    pvc_fraction: float = 1.0,
    state: Optional[RollingState] = None,
    include_frequency: bool = True,
) -> MilpInstance:
    """Build the commitment MILP for one scenario-tree window.

    Normal mode treats the voltage-controlled demand block as a constant
    in the balance while its capability bounds the fast response it can
    sell. Fully controllable mode makes the block's consumption a decision
    inside its voltage envelope; consuming above baseline buys extra
    sheddable headroom one for one.
    """
    if mode not in (NORMAL, FULLY_CONTROLLABLE):
        raise ValueError(f"unknown mode {mode!r}")
    if not (0.0 <= pvc_fraction <= 1.0):
        raise ValueError("pvc_fraction must lie in [0, 1]")
    if state is None:
        state = RollingState.initial(generators, storage)

    m = ModelBuilder()
    frac = pvc_fraction
    fc = mode == FULLY_CONTROLLABLE
    kids = tree.children_map()
    lead_var_cache: dict[tuple[str, int], int] = {}

    def lead_var(g: GeneratorClass, nid: int) -> int:
        key = (g.name, nid)
        if key not in lead_var_cache:
            lead_var_cache[key] = m.add_var(
                f"bst[{g.name}][{nid}]", 0, g.units, integer=True
            )
        return lead_var_cache[key]

    # per-node, per-class commitment and dispatch variables
    for n in tree.nodes:
        pi, dt = n.prob, n.dt_h
        for g in generators:
            flexible = g.startup_time_h is not None
            fixed = state.n_up[g.name]
            m.add_var(
                f"nup[{g.name}][{n.id}]",
                0 if flexible else fixed,
                g.units if flexible else fixed,
                integer=True,
                obj=pi * dt * g.no_load_cost,
            )
            m.add_var(
                f"nsg[{g.name}][{n.id}]",
                0,
                g.units if flexible else 0,
                integer=True,
                obj=pi * g.startup_cost,
            )
            m.add_var(
                f"nsd[{g.name}][{n.id}]", 0, g.units if flexible else 0, integer=True
            )
            m.add_var(f"pg[{g.name}][{n.id}]", 0, math.inf, obj=pi * dt * g.marginal_cost)
            m.add_var(f"pfr[{g.name}][{n.id}]", 0, g.max_pfr_mw * g.units)
        for s in storage:
            m.add_var(f"dis[{s.name}][{n.id}]", 0, s.rating_mw)
            m.add_var(f"ch[{s.name}][{n.id}]", 0, s.rating_mw)
            m.add_var(f"en[{s.name}][{n.id}]", 0, s.capacity_mwh)
            if s.efr_capable:
                m.add_var(f"efrs[{s.name}][{n.id}]", 0, 2.0 * s.rating_mw)
        demand_total = n.demand_mw + n.pvc_base_mw
        m.add_var(f"wc[{n.id}]", 0, n.wind_mw)
        m.add_var(f"ls[{n.id}]", 0, max(demand_total, 0.0), obj=pi * dt * freq.load_shed_cost)
        # token price so surplus reports as wind curtailment, not dumping
        m.add_var(f"dump[{n.id}]", 0, math.inf, obj=pi * dt * 1e-3)
        if include_frequency:
            m.add_var(f"rg[{n.id}]", 0, math.inf)
            m.add_var(f"re[{n.id}]", 0, cuts.e_range[1])
            # under full control the cap row grows with consumption instead
            epvc_hi = math.inf if fc else frac * n.efr_cap_mw
            m.add_var(f"epvc[{n.id}]", 0, epvc_hi)
            m.add_var(f"h[{n.id}]", 0, math.inf)
        if fc:
            m.add_var(f"ppvc[{n.id}]", frac * n.pvc_min_mw, frac * n.pvc_max_mw)

    for n in tree.nodes:
        nid, dt = n.id, n.dt_h

        # class commitment dynamics and output bands
        for g in generators:
            gn = g.name
            up, sg, sd = m[f"nup[{gn}][{nid}]"], m[f"nsg[{gn}][{nid}]"], m[f"nsd[{gn}][{nid}]"]
            pg, pfr = m[f"pg[{gn}][{nid}]"], m[f"pfr[{gn}][{nid}]"]
            if n.parent is None:
                m.add_eq({up: 1, sg: -1, sd: 1}, state.n_up[gn], f"commit[{gn}][{nid}]")
            else:
                pup = m[f"nup[{gn}][{n.parent}]"]
                m.add_eq({up: 1, pup: -1, sg: -1, sd: 1}, 0.0, f"commit[{gn}][{nid}]")
            m.add_le({pg: 1, up: -g.rated_mw}, 0.0, f"pg-max[{gn}][{nid}]")
            m.add_ge({pg: 1, up: -g.min_stable_mw}, 0.0, f"pg-min[{gn}][{nid}]")
            m.add_le({pfr: 1, up: -g.max_pfr_mw}, 0.0, f"pfr-cap[{gn}][{nid}]")
            m.add_le({pfr: 1, pg: 1, up: -g.rated_mw}, 0.0, f"pfr-head[{gn}][{nid}]")

            if not g.flexible:
                continue
            depth = tree.depth(nid)
            st = g.startup_time_h or 0
            if st >= 1:
                if depth <= st:
                    pipe = state.pipeline.get(gn, ())
                    fixed_starts = float(pipe[depth - 1]) if depth - 1 < len(pipe) else 0.0
                    m.add_eq({sg: 1}, fixed_starts, f"lead[{gn}][{nid}]")
                else:
                    anc = tree.ancestor(nid, st)
                    m.add_eq({sg: 1, lead_var(g, anc): -1}, 0.0, f"lead[{gn}][{nid}]")
            # units started in the last min-up hours must still be online
            if g.min_up_h:
                coeffs = {up: 1.0}
                carried = 0.0
                for k in range(g.min_up_h):
                    anc = tree.ancestor(nid, k)
                    if anc is not None:
                        coeffs[m[f"nsg[{gn}][{anc}]"]] = -1.0
                    else:
                        age = k - tree.depth(nid)
                        hist = state.recent_starts.get(gn, ())
                        carried += hist[age] if 0 <= age < len(hist) else 0.0
                m.add_ge(coeffs, carried, f"minup[{gn}][{nid}]")
            # units stopped in the last min-down hours must still be offline
            if g.min_down_h:
                coeffs = {up: 1.0}
                carried = 0.0
                for k in range(g.min_down_h):
                    anc = tree.ancestor(nid, k)
                    if anc is not None:
                        coeffs[m[f"nsd[{gn}][{anc}]"]] = 1.0
                    else:
                        age = k - tree.depth(nid)
                        hist = state.recent_stops.get(gn, ())
                        carried += hist[age] if 0 <= age < len(hist) else 0.0
                m.add_le(coeffs, g.units - carried, f"mindown[{gn}][{nid}]")

        # storage energy continuity along tree edges
        for s in storage:
            sn = s.name
            eta = math.sqrt(s.efficiency)
            dis, ch, en = m[f"dis[{sn}][{nid}]"], m[f"ch[{sn}][{nid}]"], m[f"en[{sn}][{nid}]"]
            coeffs = {en: 1.0, ch: -dt * eta, dis: dt / eta}
            if n.parent is None:
                m.add_eq(coeffs, state.storage_mwh[sn], f"energy[{sn}][{nid}]")
            else:
                coeffs[m[f"en[{sn}][{n.parent}]"]] = -1.0
                m.add_eq(coeffs, 0.0, f"energy[{sn}][{nid}]")
            if not kids[nid]:
                # leaves must hold the configured fill so the window cannot
                # profit from draining the reservoir it will never refill
                m.add_ge({en: 1.0}, s.initial_mwh, f"terminal[{sn}][{nid}]")
            if s.efr_capable:
                efrs = m[f"efrs[{sn}][{nid}]"]
                m.add_le(
                    {efrs: 1.0, dis: 1.0, ch: -1.0}, s.rating_mw, f"efr-headroom[{sn}][{nid}]"
                )

        # energy balance: generation + storage + wind serves demand
        balance = {m[f"pg[{g.name}][{nid}]"]: 1.0 for g in generators}
        for s in storage:
            balance[m[f"dis[{s.name}][{nid}]"]] = 1.0
            balance[m[f"ch[{s.name}][{nid}]"]] = -1.0
        balance[m[f"wc[{nid}]"]] = -1.0
        balance[m[f"dump[{nid}]"]] = -1.0
        balance[m[f"ls[{nid}]"]] = 1.0
        if fc:
            balance[m[f"ppvc[{nid}]"]] = -1.0
            rhs = n.demand_mw + (1.0 - frac) * n.pvc_base_mw - n.wind_mw
        else:
            rhs = n.demand_mw + n.pvc_base_mw - n.wind_mw
        m.add_eq(balance, rhs, f"balance[{nid}]")

        if not include_frequency:
            continue

        rg, re = m[f"rg[{nid}]"], m[f"re[{nid}]"]
        epvc, h = m[f"epvc[{nid}]"], m[f"h[{nid}]"]
        # system inertia from online units, net of the lost infeed's own
        coeffs = {h: 1.0}
        for g in generators:
            coeffs[m[f"nup[{g.name}][{nid}]"]] = -g.inertia_s * g.rated_mw
        m.add_eq(coeffs, -freq.p_l_max * freq.h_l, f"inertia-def[{nid}]")
        m.add_ge({h: 1.0}, freq.p_l_max * freq.f0 / (2.0 * freq.rocof_max), f"rocof[{nid}]")
        m.add_le({h: 1.0}, cuts.h_range[1], f"h-box[{nid}]")
        m.add_ge({rg: 1.0, re: 1.0}, freq.p_l_max, f"qss[{nid}]")
        coeffs = {rg: 1.0}
        for g in generators:
            coeffs[m[f"pfr[{g.name}][{nid}]"]] = -1.0
        m.add_eq(coeffs, 0.0, f"pfr-total[{nid}]")
        coeffs = {re: 1.0, epvc: -1.0}
        for s in storage:
            if s.efr_capable:
                coeffs[m[f"efrs[{s.name}][{nid}]"]] = -1.0
        m.add_eq(coeffs, 0.0, f"efr-total[{nid}]")
        if fc:
            # consuming above baseline adds sheddable headroom one for one
            m.add_le(
                {epvc: 1.0, m[f"ppvc[{nid}]"]: -1.0},
                frac * (n.efr_cap_mw - n.pvc_base_mw),
                f"efr-cap[{nid}]",
            )
        for k, cut in enumerate(cuts.cuts):
            m.add_ge(
                {h: cut.a_h, rg: cut.a_g, re: cut.a_e}, cut.rhs, f"nadir[{nid}][{k}]"
            )

    return m.build()


def fleet_inertia_range(
    generators: Sequence[GeneratorClass], freq: FrequencyParams
) -> tuple[float, float]:
    """Inertia bounds for the cut grid: RoCoF floor up to the all-on fleet."""
    h_floor = freq.p_l_max * freq.f0 / (2.0 * freq.rocof_max)
    h_max = sum(g.inertia_s * g.rated_mw * g.units for g in generators) - freq.p_l_max * freq.h_l
    if h_max <= h_floor:
        raise ValueError(
            f"fleet cannot reach the inertia floor: max {h_max:.0f} < floor {h_floor:.0f} MWs"
        )
    return h_floor, h_max


def realized_cost(
    tree: ScenarioTree,
    generators: Sequence[GeneratorClass],
    schedule: DispatchSchedule,
    freq: FrequencyParams,
    nid: int = 0,
) -> float:
    """Out-of-pocket cost of one node's committed decisions (no probability weight)."""
    n = tree.node(nid)
    cost = schedule.value(f"ls[{nid}]") * n.dt_h * freq.load_shed_cost
    for g in generators:
        cost += schedule.value(f"nsg[{g.name}][{nid}]") * g.startup_cost
        cost += schedule.value(f"nup[{g.name}][{nid}]") * n.dt_h * g.no_load_cost
        cost += schedule.value(f"pg[{g.name}][{nid}]") * n.dt_h * g.marginal_cost
    return cost


def advance_state(
    tree: ScenarioTree,
    generators: Sequence[GeneratorClass],
    storage: Sequence[StorageUnit],
    schedule: DispatchSchedule,
    state: RollingState,
) -> RollingState:
    """Carry root-node commitments into the next rolling step."""
    root = tree.root.id
    n_up, starts, stops, pipeline = {}, {}, {}, {}
    for g in generators:
        gn = g.name
        n_up[gn] = int(round(schedule.value(f"nup[{gn}][{root}]")))
        sg = int(round(schedule.value(f"nsg[{gn}][{root}]")))
        sd = int(round(schedule.value(f"nsd[{gn}][{root}]")))
        hist = state.recent_starts.get(gn, ())
        starts[gn] = (sg,) + tuple(hist[:-1]) if hist else (sg,)
        hist = state.recent_stops.get(gn, ())
        stops[gn] = (sd,) + tuple(hist[:-1]) if hist else (sd,)
        st = g.startup_time_h or 0
        if st >= 1:
            begun = int(round(schedule.value(f"bst[{gn}][{root}]")))
            pipe = state.pipeline.get(gn, tuple([0] * st))
            pipeline[gn] = tuple(pipe[1:]) + (begun,)
        else:
            pipeline[gn] = ()
    energy = {
        s.name: float(schedule.value(f"en[{s.name}][{root}]")) for s in storage
    }
    return RollingState(
        n_up=n_up,
        recent_starts=starts,
        recent_stops=stops,
        pipeline=pipeline,
        storage_mwh=energy,
    )


def schedule_step(
    tree: ScenarioTree,
    generators: Sequence[GeneratorClass],
    storage: Sequence[StorageUnit],
    freq: FrequencyParams,
    cuts: NadirCutSet,
    state: RollingState,
    mode: str = NORMAL,
    pvc_fraction: float = 1.0,
    gap: float = 1e-4,
    backend: str = "highs",
) -> CommittedStep:
    """Solve one window and commit its here-and-now decisions."""
    inst = formulate(
        tree, generators, storage, freq, cuts, mode=mode, pvc_fraction=pvc_fraction, state=state
    )
    sol = solve_milp(inst, gap=gap, backend=backend)
    schedule = DispatchSchedule.from_solution(inst, sol)
    if sol.x is None:
        # load shed keeps the formulation feasible, so reaching here means
        # the solver itself failed; freeze the fleet and shed the residual
        return CommittedStep(
            hour=tree.root.hour,
            objective=math.inf,
            root_cost=math.inf,
            values={},
            state=state,
            infeasible=True,
        )
    root = tree.root.id
    root_values = {
        name: val
        for name, val in schedule.values.items()
        if name.endswith(f"[{root}]")
    }
    # realized constants the valuation layer needs alongside the decisions
    rn = tree.root
    root_values[f"wind-available[{root}]"] = rn.wind_mw
    if mode == FULLY_CONTROLLABLE:
        block = (1.0 - pvc_fraction) * rn.pvc_base_mw + schedule.value(f"ppvc[{root}]")
    else:
        block = rn.pvc_base_mw
    root_values[f"pvc-actual[{root}]"] = block
    root_values[f"demand-total[{root}]"] = rn.demand_mw + block
    return CommittedStep(
        hour=tree.root.hour,
        objective=schedule.objective,
        root_cost=realized_cost(tree, generators, schedule, freq, root),
        values=root_values,
        state=advance_state(tree, generators, storage, schedule, state),
        infeasible=False,
    )
