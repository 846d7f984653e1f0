"""Quantile scenario trees for wind uncertainty and the rolling scheduling loop.

Wind forecast error follows a multiplicative AR(1) process: stationary
standard deviation sigma, hourly persistence rho. At each branching stage
the tree's children realize chosen quantiles of the conditional error
distribution; between stages each branch follows its conditional-mean
path. Child probabilities carry the trapezoidal mass between adjacent
quantiles, so they sum to the parent's probability by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import norm


@dataclass(frozen=True)
class ScenarioNode:
    """One hour of one scenario branch."""

    id: int
    parent: Optional[int]  # None marks the root
    prob: float  # probability of reaching this node
    dt_h: float
    hour: int  # absolute hour index into the study series
    wind_mw: float
    demand_mw: float  # demand outside the voltage-controlled block
    pvc_base_mw: float  # voltage-controlled block at nominal voltage
    pvc_min_mw: float
    pvc_max_mw: float
    efr_cap_mw: float  # fast-response capability of the block this hour
    error: float = 0.0  # AR(1) multiplicative error state


@dataclass(frozen=True)
class ScenarioTree:
    nodes: tuple[ScenarioNode, ...]
    stages: tuple[int, ...]
    horizon: int

    def __post_init__(self):
        by_id = {n.id: n for n in self.nodes}
        roots = [n for n in self.nodes if n.parent is None]
        if len(roots) != 1:
            raise ValueError("tree must have exactly one root")
        if abs(roots[0].prob - 1.0) > 1e-9:
            raise ValueError("root probability must be 1")
        for n in self.nodes:
            if n.dt_h <= 0:
                raise ValueError(f"node {n.id}: nonpositive timestep")
            if n.parent is not None and n.parent not in by_id:
                raise ValueError(f"node {n.id}: dangling parent {n.parent}")
        kids = self.children_map()
        for n in self.nodes:
            if kids[n.id]:
                mass = sum(by_id[c].prob for c in kids[n.id])
                if abs(mass - n.prob) > 1e-9:
                    raise ValueError(f"node {n.id}: children mass {mass} != {n.prob}")

    @property
    def root(self) -> ScenarioNode:
        return next(n for n in self.nodes if n.parent is None)

    def node(self, nid: int) -> ScenarioNode:
        return self.nodes[nid]

    def children_map(self) -> dict[int, list[int]]:
        kids: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None:
                kids[n.parent].append(n.id)
        return kids

    def depth(self, nid: int) -> int:
        """Hours from the window start to this node, inclusive."""
        d, n = 0, self.nodes[nid]
        while True:
            d += 1
            if n.parent is None:
                return d
            n = self.nodes[n.parent]

    def ancestor(self, nid: int, back: int) -> Optional[int]:
        """Node id ``back`` hours up the branch, None when that predates the window."""
        n = self.nodes[nid]
        for _ in range(back):
            if n.parent is None:
                return None
            n = self.nodes[n.parent]
        return n.id

    def leaves(self) -> list[int]:
        kids = self.children_map()
        return [n.id for n in self.nodes if not kids[n.id]]


def quantile_weights(quantiles: Sequence[float]) -> np.ndarray:
    """Trapezoidal probability mass centered on each quantile.

    Boundaries sit midway between adjacent quantiles, with the outer cells
    running to 0 and 1, so the weights always sum to one.
    """
    q = np.asarray(quantiles, dtype=float)
    if q.size == 0:
        raise ValueError("need at least one quantile")
    if np.any(q <= 0) or np.any(q >= 1) or np.any(np.diff(q) <= 0):
        raise ValueError("quantiles must be strictly increasing inside (0, 1)")
    bounds = np.concatenate([[0.0], (q[1:] + q[:-1]) / 2.0, [1.0]])
    return np.diff(bounds)


def build_tree(
    forecast_mw: Sequence[float],
    quantiles: Sequence[float] = (0.25, 0.5, 0.75),
    stages: Sequence[int] = (1, 4, 8),
    horizon: int = 24,
    rho: float = 0.8,
    sigma: float = 0.1,
    capacity_mw: Optional[float] = None,
    start_hour: int = 0,
    demand_mw: Optional[Sequence[float]] = None,
    pvc_base_mw: Optional[Sequence[float]] = None,
    pvc_min_mw: Optional[Sequence[float]] = None,
    pvc_max_mw: Optional[Sequence[float]] = None,
    efr_cap_mw: Optional[Sequence[float]] = None,
) -> ScenarioTree:
    """Build one rolling window's tree starting at ``start_hour``.

    ``stages`` lists the in-window hours (1-based) after which the tree
    branches; the first window hour is always a single root so here-and-now
    decisions are unique. Series arguments are indexed by absolute hour
    modulo their length, which lets a daily or weekly series roll forever.
    """
    stages = tuple(sorted(set(int(s) for s in stages)))
    if any(s < 1 or s >= horizon for s in stages):
        raise ValueError(f"branching stages {stages} outside 1..{horizon - 1}")
    weights = quantile_weights(quantiles)
    z = norm.ppf(np.asarray(quantiles, dtype=float))

    def series_at(series, hour, default=0.0):
        if series is None:
            return default
        return float(series[hour % len(series)])

    nodes: list[ScenarioNode] = []
    frontier: list[tuple[int, float, float]] = []  # (node id, prob, error)

    def emit(step: int, parent: Optional[int], prob: float, err: float) -> int:
        hour = start_hour + step
        fc = float(forecast_mw[hour % len(forecast_mw)])
        wind = fc * (1.0 + err)
        wind = min(max(wind, 0.0), capacity_mw) if capacity_mw is not None else max(wind, 0.0)
        base = series_at(pvc_base_mw, hour)
        nid = len(nodes)
        nodes.append(
            ScenarioNode(
                id=nid,
                parent=parent,
                prob=prob,
                dt_h=1.0,
                hour=hour,
                wind_mw=wind,
                demand_mw=series_at(demand_mw, hour),
                pvc_base_mw=base,
                pvc_min_mw=series_at(pvc_min_mw, hour, base),
                pvc_max_mw=series_at(pvc_max_mw, hour, base),
                efr_cap_mw=series_at(efr_cap_mw, hour),
                error=err,
            )
        )
        return nid

    root = emit(0, None, 1.0, 0.0)
    frontier = [(root, 1.0, 0.0)]
    # one-hour innovation spread; between stages branches follow their
    # conditional-mean path (error decays by rho each hour)
    spread = sigma * np.sqrt(max(1.0 - rho * rho, 0.0))
    for step in range(1, horizon):
        next_frontier: list[tuple[int, float, float]] = []
        if step in stages:
            for nid, prob, err in frontier:
                mean = rho * err
                for w, zq in zip(weights, z):
                    child_err = mean + zq * spread
                    cid = emit(step, nid, prob * w, child_err)
                    next_frontier.append((cid, prob * w, child_err))
        else:
            for nid, prob, err in frontier:
                child_err = rho * err
                cid = emit(step, nid, prob, child_err)
                next_frontier.append((cid, prob, child_err))
        frontier = next_frontier

    return ScenarioTree(nodes=tuple(nodes), stages=stages, horizon=horizon)


@dataclass(frozen=True)
class RollingState:
    """Inter-step continuity: commitments, counters, pipelines, and stored energy.

    ``recent_starts[g]`` / ``recent_stops[g]`` hold unit counts by age in
    hours (index 0 = the hour just committed) for min-up/min-down counting.
    ``pipeline[g][k]`` units begin generating k+1 hours from now, already
    past the point of no return because of their startup lead time.
    """

    n_up: Mapping[str, int]
    recent_starts: Mapping[str, tuple[int, ...]]
    recent_stops: Mapping[str, tuple[int, ...]]
    pipeline: Mapping[str, tuple[int, ...]]
    storage_mwh: Mapping[str, float]

    @classmethod
    def initial(cls, generators, storage, history_h: int = 8) -> "RollingState":
        """All thermal units idle except inflexible classes, storage at its configured fill."""
        n_up = {}
        for g in generators:
            n_up[g.name] = g.units if g.startup_time_h is None else 0
        zeros = tuple([0] * history_h)
        return cls(
            n_up=n_up,
            recent_starts={g.name: zeros for g in generators},
            recent_stops={g.name: zeros for g in generators},
            pipeline={
                g.name: tuple([0] * (g.startup_time_h or 0)) for g in generators
            },
            storage_mwh={s.name: s.initial_mwh for s in storage},
        )


@dataclass(frozen=True)
class CommittedStep:
    """Root-node decisions kept after one rolling step."""

    hour: int
    objective: float  # expected cost over the whole window, £
    root_cost: float  # realized cost of the committed hour, £
    values: Mapping[str, float]  # root-node variable values by name
    state: RollingState  # state carried into the next step
    infeasible: bool = False


def roll_horizon(
    steps: int,
    build: Callable[[int], ScenarioTree],
    scheduler: Callable[[ScenarioTree, RollingState], CommittedStep],
    state: RollingState,
) -> list[CommittedStep]:
    """Drive the hour-by-hour loop: build a window tree, solve, keep the root.

    ``build(start_hour)`` supplies each window's tree; ``scheduler`` solves
    it from the carried state and reports the committed root decisions plus
    the state for the next hour. All non-root decisions are discarded by
    construction.
    """
    out: list[CommittedStep] = []
    for k in range(steps):
        tree = build(k)
        step = scheduler(tree, state)
        out.append(step)
        state = step.state
    return out
