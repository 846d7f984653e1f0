"""Shared fixtures: small hand-built networks, catalogs, and plant sets."""

from __future__ import annotations

import numpy as np
import pytest

from gridefr.grid import (
    CDC,
    JUNCTION,
    SOURCE,
    Branch,
    CdcProfile,
    FeederNetwork,
    FrequencyParams,
    GeneratorClass,
    Node,
    StorageUnit,
)
from gridefr.demand import ApplianceSpec


def two_bus(r: float = 0.05, x: float = 0.02, base_mva: float = 1.0) -> FeederNetwork:
    return FeederNetwork(
        nodes=(Node("src", SOURCE), Node("cdc0", CDC)),
        branches=(Branch("src", "cdc0", r, x),),
        base_mva=base_mva,
    )


def chain_network(n_cdcs: int, r: float = 0.03, x: float = 0.015) -> FeederNetwork:
    """Source -> junction -> chain of CDCs, no transformers."""
    nodes = [Node("src", SOURCE), Node("j0", JUNCTION)]
    branches = [Branch("src", "j0", 0.005, 0.01)]
    prev = "j0"
    for i in range(n_cdcs):
        cid = f"cdc{i}"
        nodes.append(Node(cid, CDC))
        branches.append(Branch(prev, cid, r, x))
        prev = cid
    return FeederNetwork(tuple(nodes), tuple(branches))


def flat_profile(cdc_id: str, p_kw: float, q_kvar: float, n_p: float, n_q: float,
                 steps: int = 1) -> CdcProfile:
    ones = np.ones(steps)
    return CdcProfile(
        cdc_id=cdc_id,
        p_kw=p_kw * ones,
        q_kvar=q_kvar * ones,
        n_p=n_p * ones,
        n_q=n_q * ones,
    )


def random_profiles(network: FeederNetwork, seed: int, steps: int = 1,
                    p_range=(3.0, 15.0)) -> list[CdcProfile]:
    rng = np.random.default_rng(seed)
    out = []
    for cdc in network.cdc_ids():
        p = rng.uniform(*p_range, steps)
        out.append(
            CdcProfile(
                cdc_id=cdc,
                p_kw=p,
                q_kvar=p * rng.uniform(0.1, 0.45, steps),
                n_p=rng.uniform(0.8, 1.9, steps),
                n_q=rng.uniform(1.5, 4.0, steps),
            )
        )
    return out


@pytest.fixture
def tiny_catalog() -> tuple[ApplianceSpec, ...]:
    return (
        ApplianceSpec(
            name="base",
            rated_w=100,
            zip_p=(0.5, 0.3, 0.2),
            zip_q=(0.9, 0.1, 0.0),
            power_factor=0.8,
            always_on=True,
            mean_on_h=None,
        ),
        ApplianceSpec(
            name="evening",
            rated_w=1000,
            zip_p=(1.0, 0.0, 0.0),
            zip_q=(1.0, 0.0, 0.0),
            propensity=tuple([0.0] * 17 + [1.0, 1.0, 1.0] + [0.0] * 4),
            mean_on_h=2.0,
            starts_per_day=1.0,
        ),
        ApplianceSpec(
            name="burst",
            rated_w=2000,
            zip_p=(0.9, 0.1, 0.0),
            zip_q=(1.0, 0.0, 0.0),
            propensity=tuple([1.0] * 24),
            mean_on_h=0.1,
            starts_per_day=2.0,
        ),
    )


def toy_plant(units: int = 2, st: int = 0, min_up: int = 0, min_down: int = 0,
              name: str = "gas", rated: float = 100.0, pfr: float = 20.0,
              marginal: float = 40.0) -> GeneratorClass:
    return GeneratorClass(
        name=name,
        units=units,
        rated_mw=rated,
        min_stable_mw=0.3 * rated,
        no_load_cost=500.0,
        marginal_cost=marginal,
        startup_cost=2000.0,
        startup_time_h=st,
        min_up_h=min_up,
        min_down_h=min_down,
        inertia_s=5.0,
        max_pfr_mw=pfr,
    )


@pytest.fixture
def toy_freq() -> FrequencyParams:
    # Small island so toy fleets can clear the RoCoF floor.
    return FrequencyParams(p_l_max=60.0, h_l=4.0)


@pytest.fixture
def toy_storage() -> StorageUnit:
    return StorageUnit(
        name="bess",
        capacity_mwh=40.0,
        rating_mw=10.0,
        efficiency=0.9,
        initial_mwh=20.0,
        efr_capable=True,
    )
