"""Core domain types: radial networks, customer clusters, plant, and study parameters.

All types are frozen dataclasses; profile arrays are made read-only on
construction so instances can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

SOURCE = "source"
JUNCTION = "junction"
CDC = "cdc"
MV_LOAD = "mv-load"

NODE_KINDS = (SOURCE, JUNCTION, CDC, MV_LOAD)

ON_LOAD = "on-load"
OFF_LOAD = "off-load"


def _freeze(arr) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    v_nominal: float = 1.0


@dataclass(frozen=True)
class Branch:
    from_node: str
    to_node: str
    r: float  # p.u. on the network base
    x: float  # p.u.
    ampacity: float = np.inf  # p.u. current limit

    @property
    def key(self) -> tuple[str, str]:
        return (self.from_node, self.to_node)


@dataclass(frozen=True)
class Transformer:
    """Ideal ratio changer sitting on a branch; series impedance lives in the branch."""

    branch: tuple[str, str]
    positions: tuple[float, ...]  # admissible per-unit ratios, ascending
    mode: str = OFF_LOAD  # on-load | off-load
    name: str = ""


@dataclass(frozen=True)
class FeederNetwork:
    """Radial MV/LV network in per-unit on a single declared base."""

    nodes: tuple[Node, ...]
    branches: tuple[Branch, ...]
    transformers: tuple[Transformer, ...] = ()
    base_mva: float = 1.0

    def node_by_id(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def source(self) -> Node:
        for n in self.nodes:
            if n.kind == SOURCE:
                return n
        raise ValueError("network has no source node")

    def cdc_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.kind == CDC)


@dataclass(frozen=True)
class CdcProfile:
    """Aggregate demand and voltage sensitivity of one cluster of domestic customers."""

    cdc_id: str
    p_kw: np.ndarray  # per-timestep active power at nominal voltage
    q_kvar: np.ndarray
    n_p: np.ndarray  # active-power voltage exponent per timestep
    n_q: np.ndarray
    households: int = 24

    def __post_init__(self):
        object.__setattr__(self, "p_kw", _freeze(self.p_kw))
        object.__setattr__(self, "q_kvar", _freeze(self.q_kvar))
        object.__setattr__(self, "n_p", _freeze(self.n_p))
        object.__setattr__(self, "n_q", _freeze(self.n_q))

    @property
    def steps(self) -> int:
        return len(self.p_kw)


@dataclass(frozen=True)
class GeneratorClass:
    """One class of identical thermal units, committed as an integer count."""

    name: str
    units: int
    rated_mw: float
    min_stable_mw: float
    no_load_cost: float  # per hour
    marginal_cost: float  # per MWh
    startup_cost: float
    startup_time_h: Optional[int]  # None: units cannot change state
    min_up_h: Optional[int]
    min_down_h: Optional[int]
    inertia_s: float
    max_pfr_mw: float  # per unit
    emissions_kg_per_mwh: float = 0.0

    @property
    def flexible(self) -> bool:
        return self.startup_time_h is not None


@dataclass(frozen=True)
class StorageUnit:
    name: str
    capacity_mwh: float
    rating_mw: float  # symmetric charge/discharge limit
    efficiency: float  # round trip, in (0, 1]
    initial_mwh: float = 0.0
    efr_capable: bool = False


@dataclass(frozen=True)
class FrequencyParams:
    f0: float = 50.0
    rocof_max: float = 0.5  # Hz/s
    delta_f_max: float = 0.8  # Hz, nadir limit
    delta_f_ss_max: float = 0.5  # Hz, quasi-steady-state limit (carried, not constrained)
    t_e: float = 0.5  # s, fast-response delivery time
    t_g: float = 10.0  # s, primary-response delivery time
    p_l_max: float = 1800.0  # MW, largest loss
    h_l: float = 5.0  # s, inertia constant of the lost unit
    load_shed_cost: float = 50000.0  # per MWh


@dataclass(frozen=True)
class SynthesisParams:
    """Knobs for demand/network synthesis and converter economics."""

    domestic_share: float = 0.37
    load_factor: float = 0.5
    diversified_peak_kw: float = 0.9
    scale_factor: float = 1.0  # regional-to-national multiplier
    urban_correction: float = 1.0
    pec_loss_fraction: float = 0.02
    v_min: float = 0.95
    v_max: float = 1.05
    converter_price_per_kw: tuple[float, float, float] = (60.0, 140.0, 220.0)  # $ low/typ/high
    maintenance_per_kw_year: float = 10.0  # $
    dollars_per_pound: float = 1.25
    households_per_cdc_min: int = 12
    households_per_cdc_max: int = 48
    steps_per_day: int = 24


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> tuple[str, ...]:
        return tuple(i.code for i in self.issues)


def _check_structure(network: FeederNetwork) -> list[ValidationIssue]:
    issues: list[ValidationIssue] = []
    ids = [n.id for n in network.nodes]
    seen = set()
    for i in ids:
        if i in seen:
            issues.append(ValidationIssue("structure/duplicate-node", i, "node id appears twice"))
        seen.add(i)

    sources = [n for n in network.nodes if n.kind == SOURCE]
    if len(sources) != 1:
        issues.append(
            ValidationIssue(
                "structure/source", "network", f"expected exactly one source node, found {len(sources)}"
            )
        )
        return issues

    for n in network.nodes:
        if n.kind not in NODE_KINDS:
            issues.append(ValidationIssue("structure/node-kind", n.id, f"unknown node kind {n.kind!r}"))

    known = set(ids)
    for b in network.branches:
        for end in (b.from_node, b.to_node):
            if end not in known:
                issues.append(
                    ValidationIssue("structure/dangling-branch", f"{b.from_node}->{b.to_node}", f"unknown node {end!r}")
                )

    # Tree check: connected from the source, |E| = |V| - 1, no cycle.
    adjacency: dict[str, list[str]] = {i: [] for i in known}
    for b in network.branches:
        if b.from_node in known and b.to_node in known:
            adjacency[b.from_node].append(b.to_node)
            adjacency[b.to_node].append(b.from_node)

    root = sources[0].id
    parent: dict[str, Optional[str]] = {root: None}
    order = [root]
    cycle_at = None
    for u in order:
        for v in adjacency[u]:
            if v == parent[u]:
                continue
            if v in parent:
                cycle_at = v
                break
            parent[v] = u
            order.append(v)
        if cycle_at:
            break
    if cycle_at:
        issues.append(ValidationIssue("structure/cycle", cycle_at, f"cycle through node {cycle_at!r}"))
    elif len(parent) != len(known):
        missing = sorted(known - set(parent))
        issues.append(
            ValidationIssue("structure/disconnected", missing[0], f"{len(missing)} node(s) unreachable from the source")
        )
    elif len(network.branches) != len(known) - 1:
        issues.append(
            ValidationIssue(
                "structure/cycle",
                "network",
                f"{len(network.branches)} branches for {len(known)} nodes (parallel path)",
            )
        )
    return issues


def _check_branches(network: FeederNetwork) -> list[ValidationIssue]:
    issues = []
    for b in network.branches:
        if b.r < 0 or b.x < 0:
            issues.append(
                ValidationIssue("invariant/impedance", f"{b.from_node}->{b.to_node}", f"negative impedance r={b.r} x={b.x}")
            )
        if not (b.ampacity > 0):
            issues.append(
                ValidationIssue("invariant/ampacity", f"{b.from_node}->{b.to_node}", "ampacity must be positive")
            )
    return issues


def _check_transformers(network: FeederNetwork) -> list[ValidationIssue]:
    issues = []
    branch_keys = {b.key for b in network.branches}
    for t in network.transformers:
        if tuple(t.branch) not in branch_keys:
            issues.append(ValidationIssue("reference/transformer-branch", str(t.branch), "no such branch"))
        if not t.positions:
            issues.append(ValidationIssue("invariant/tap-positions", str(t.branch), "empty tap position list"))
        elif any(p <= 0 for p in t.positions):
            issues.append(ValidationIssue("invariant/tap-positions", str(t.branch), "non-positive tap ratio"))
        if t.mode not in (ON_LOAD, OFF_LOAD):
            issues.append(ValidationIssue("invariant/tap-mode", str(t.branch), f"unknown mode {t.mode!r}"))
    return issues


def _check_profiles(
    network: FeederNetwork, profiles: Sequence[CdcProfile], params: SynthesisParams
) -> list[ValidationIssue]:
    issues = []
    cdc_ids = set(network.cdc_ids())
    by_id: dict[str, CdcProfile] = {}
    for p in profiles:
        if p.cdc_id in by_id:
            issues.append(ValidationIssue("reference/profile-duplicate", p.cdc_id, "multiple profiles for one CDC"))
        by_id[p.cdc_id] = p
        if p.cdc_id not in cdc_ids:
            issues.append(ValidationIssue("reference/profile-dangling", p.cdc_id, "profile references no CDC node"))
    for cid in sorted(cdc_ids - set(by_id)):
        issues.append(ValidationIssue("reference/profile-missing", cid, "CDC node has no profile"))

    steps = {p.steps for p in profiles}
    if len(steps) > 1:
        issues.append(ValidationIssue("invariant/steps", "profiles", f"inconsistent timestep counts {sorted(steps)}"))
    elif steps and params.steps_per_day and steps != {params.steps_per_day}:
        issues.append(
            ValidationIssue(
                "invariant/steps", "profiles", f"{steps.pop()} timesteps, study resolution is {params.steps_per_day}"
            )
        )

    for p in profiles:
        if np.any(p.p_kw < 0):
            issues.append(ValidationIssue("invariant/p-negative", p.cdc_id, "P must be >= 0"))
        if not np.all(np.isfinite(p.n_p)):
            issues.append(ValidationIssue("invariant/np-finite", p.cdc_id, "n_p must be finite"))
        if not np.all(np.isfinite(p.n_q)):
            issues.append(ValidationIssue("invariant/nq-finite", p.cdc_id, "n_q must be finite"))
        if not (params.households_per_cdc_min <= p.households <= params.households_per_cdc_max):
            issues.append(
                ValidationIssue(
                    "invariant/households",
                    p.cdc_id,
                    f"{p.households} households outside "
                    f"[{params.households_per_cdc_min}, {params.households_per_cdc_max}]",
                )
            )
    return issues


def _check_params(params: SynthesisParams) -> list[ValidationIssue]:
    issues = []
    if not (0 < params.v_min < 1 <= params.v_max):
        issues.append(
            ValidationIssue("invariant/voltage-band", "params", f"need 0 < v_min < 1 <= v_max, got {params.v_min}, {params.v_max}")
        )
    for name in ("domestic_share", "load_factor", "urban_correction"):
        v = getattr(params, name)
        if not (0 < v <= 1):
            issues.append(ValidationIssue("invariant/share", name, f"{v} outside (0, 1]"))
    return issues


def validate_system(
    network: FeederNetwork,
    profiles: Iterable[CdcProfile] = (),
    params: SynthesisParams = SynthesisParams(),
) -> ValidationReport:
    """Check every structural and value invariant; never mutates its inputs.

    Returns a report whose ``issues`` name each violated invariant with the
    offending node/branch/profile. Idempotent: repeated calls on the same
    input produce identical reports.
    """
    profiles = tuple(profiles)
    issues: list[ValidationIssue] = []
    if not (network.base_mva > 0 and np.isfinite(network.base_mva)):
        issues.append(ValidationIssue("invariant/base-mva", "network", f"base_mva must be positive, got {network.base_mva}"))
    issues += _check_structure(network)
    issues += _check_branches(network)
    issues += _check_transformers(network)
    issues += _check_profiles(network, profiles, params)
    issues += _check_params(params)
    return ValidationReport(tuple(issues))


def validate_plant(
    generators: Iterable[GeneratorClass], storage: Iterable[StorageUnit], freq: FrequencyParams
) -> ValidationReport:
    """Invariant checks for the scheduling-side inputs."""
    issues: list[ValidationIssue] = []
    for g in generators:
        if g.min_stable_mw > g.rated_mw:
            issues.append(ValidationIssue("invariant/min-stable", g.name, "min stable exceeds rated power"))
        if min(g.no_load_cost, g.marginal_cost, g.startup_cost) < 0:
            issues.append(ValidationIssue("invariant/cost", g.name, "costs must be >= 0"))
        if g.units < 0 or int(g.units) != g.units:
            issues.append(ValidationIssue("invariant/unit-count", g.name, f"unit count {g.units} not a non-negative integer"))
    for s in storage:
        if not (0 < s.efficiency <= 1):
            issues.append(ValidationIssue("invariant/efficiency", s.name, f"round-trip efficiency {s.efficiency} outside (0, 1]"))
        if not (0 <= s.initial_mwh <= s.capacity_mwh):
            issues.append(ValidationIssue("invariant/energy", s.name, "initial energy outside [0, capacity]"))
        if s.rating_mw < 0:
            issues.append(ValidationIssue("invariant/rating", s.name, "rating must be >= 0"))
    positives = ("f0", "rocof_max", "delta_f_max", "delta_f_ss_max", "t_e", "t_g", "p_l_max", "h_l", "load_shed_cost")
    for name in positives:
        if getattr(freq, name) <= 0:
            issues.append(ValidationIssue("invariant/frequency-param", name, "must be strictly positive"))
    if freq.t_e >= freq.t_g:
        issues.append(ValidationIssue("invariant/delivery-times", "t_e", f"t_e={freq.t_e} must be < t_g={freq.t_g}"))
    return ValidationReport(tuple(issues))


def synthesize_feeder(
    n_cdcs: int,
    seed: int = 0,
    base_mva: float = 1.0,
    cdcs_per_lateral: int = 4,
    with_oltc: bool = True,
    heavy_tail: bool = False,
) -> FeederNetwork:
    """Build a random urban-style radial feeder: MV trunk plus LV laterals.

    ``heavy_tail`` stretches the last lateral's impedances so the far-end
    voltage sags towards the statutory floor, which is the regime where
    substation-side voltage control loses headroom.
    """
    if n_cdcs < 1:
        raise ValueError("need at least one CDC")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E37]))

    nodes = [Node("src", SOURCE)]
    branches: list[Branch] = []
    transformers: list[Transformer] = []

    nodes.append(Node("mv0", JUNCTION))
    branches.append(Branch("src", "mv0", 0.002, 0.004, ampacity=50.0))
    if with_oltc:
        positions = tuple(round(0.9 + 0.005 * k, 3) for k in range(41))  # 0.90 .. 1.10
        transformers.append(Transformer(("src", "mv0"), positions, mode=ON_LOAD, name="primary"))

    n_laterals = max(1, (n_cdcs + cdcs_per_lateral - 1) // cdcs_per_lateral)
    mv_prev = "mv0"
    cdc_idx = 0
    for lat in range(n_laterals):
        mv_id = f"mv{lat + 1}"
        nodes.append(Node(mv_id, JUNCTION))
        branches.append(
            Branch(mv_prev, mv_id, rng.uniform(0.002, 0.006), rng.uniform(0.003, 0.008), ampacity=40.0)
        )
        mv_prev = mv_id

        lv_head = f"lv{lat}h"
        nodes.append(Node(lv_head, JUNCTION))
        branches.append(Branch(mv_id, lv_head, rng.uniform(0.01, 0.03), rng.uniform(0.01, 0.03), ampacity=8.0))
        offload = (0.95, 0.975, 1.0, 1.025, 1.05)
        transformers.append(Transformer((mv_id, lv_head), offload, mode=OFF_LOAD, name=f"secondary{lat}"))

        stretch = 1.0
        if heavy_tail and lat == n_laterals - 1:
            stretch = 3.5
        prev = lv_head
        for k in range(cdcs_per_lateral):
            if cdc_idx >= n_cdcs:
                break
            cid = f"cdc{cdc_idx}"
            nodes.append(Node(cid, CDC))
            r = rng.uniform(0.10, 0.28) * stretch
            x = r * rng.uniform(0.35, 0.75)
            branches.append(Branch(prev, cid, r, x, ampacity=1.5))
            prev = cid
            cdc_idx += 1

    # One MV commercial/industrial tap on the trunk.
    nodes.append(Node("mvload0", MV_LOAD))
    branches.append(Branch("mv1", "mvload0", 0.004, 0.006, ampacity=20.0))

    return FeederNetwork(tuple(nodes), tuple(branches), tuple(transformers), base_mva=base_mva)
