import math

import numpy as np
import pytest

from gridefr.efr import (
    EfrProfile,
    build_profile,
    capability_at,
    delta_efr,
    efr_pvc,
    efr_vcs,
    pec_rating,
    rating_table,
    scale_to_gb,
)
from gridefr.grid import (
    CDC,
    JUNCTION,
    ON_LOAD,
    SOURCE,
    Branch,
    FeederNetwork,
    Node,
    SynthesisParams,
    Transformer,
    synthesize_feeder,
)
from gridefr.powerflow import PowerFlowError, TapState, solve_feeder

from conftest import chain_network, flat_profile, random_profiles


def oltc_chain(n_cdcs: int, r: float = 0.04) -> FeederNetwork:
    """Chain feeder with an on-load ratio changer at the head."""
    nodes = [Node("src", SOURCE), Node("mid", JUNCTION)]
    branches = [Branch("src", "mid", 0.001, 0.002)]
    prev = "mid"
    for i in range(n_cdcs):
        cid = f"cdc{i}"
        nodes.append(Node(cid, CDC))
        branches.append(Branch(prev, cid, r, r * 0.5))
        prev = cid
    positions = tuple(round(0.9 + 0.005 * k, 3) for k in range(41))
    head = Transformer(("src", "mid"), positions, mode=ON_LOAD, name="head")
    return FeederNetwork(tuple(nodes), tuple(branches), (head,))


def test_pvc_capability_equals_source_injection_difference():
    # The assembled expression (demand cut minus loss changes) must agree
    # with simply differencing the two source injections.
    for seed in (1, 2, 3):
        net = chain_network(4)
        profs = random_profiles(net, seed=seed)
        base = solve_feeder(net, profs, 0, tol=1e-13)
        clamp = solve_feeder(net, profs, 0, pvc=0.95, tol=1e-13)
        got = efr_pvc(base, clamp, profs, 0)
        brute = (base.source_kw - clamp.source_kw) / 1000.0
        assert got == pytest.approx(max(brute, 0.0), abs=1e-12)


def test_pvc_capability_loss_free_is_pure_demand_cut():
    net = chain_network(3)
    profs = random_profiles(net, seed=8)
    base = solve_feeder(net, profs, 0, tol=1e-13)
    clamp = solve_feeder(net, profs, 0, pvc=0.95, tol=1e-13)
    got = efr_pvc(base, clamp, profs, 0, include_losses=False)
    manual = sum(
        float(p.p_kw[0]) * (base.v[p.cdc_id] ** float(p.n_p[0]) - 0.95 ** float(p.n_p[0]))
        for p in profs
    )
    assert got == pytest.approx(manual / 1000.0, abs=1e-12)


def test_pvc_capability_requires_convergence():
    net = chain_network(2)
    profs = random_profiles(net, seed=1)
    base = solve_feeder(net, profs, 0)
    fake = base.__class__(**{**base.__dict__, "converged": False})
    with pytest.raises(PowerFlowError):
        efr_pvc(fake, base, profs, 0)


def test_vcs_matches_manual_tap_walk():
    net = oltc_chain(3)
    profs = random_profiles(net, seed=6, p_range=(20.0, 45.0))
    taps = TapState.nominal(net)

    # walk the head tap down by hand, stopping before the first violation
    baseline = solve_feeder(net, profs, 0, taps=taps, tol=1e-12)
    best = baseline
    k = 1
    while True:
        tap = 1.0 - 0.005 * k
        if tap < 0.9 - 1e-9:
            break
        sol = solve_feeder(net, profs, 0, taps=taps.with_tap("head", tap), tol=1e-12)
        if min(sol.v.values()) < 0.95 - 1e-12:
            break
        best = sol
        k += 1
    manual = baseline.total_load_kw - best.total_load_kw
    manual -= best.line_loss_kw - baseline.line_loss_kw
    got = efr_vcs(net, profs, 0, taps=taps)
    assert got == pytest.approx(max(manual, 0.0) / 1000.0, abs=1e-12)
    assert got > 0


def test_vcs_without_head_oltc_steps_source():
    net = chain_network(2)
    profs = random_profiles(net, seed=3, p_range=(10.0, 20.0))
    got = efr_vcs(net, profs, 0)
    # source stepping has no position floor, so it runs to the voltage limit
    base = solve_feeder(net, profs, 0, tol=1e-12)
    k, best = 1, base
    while True:
        sol = solve_feeder(net, profs, 0, v_source=1.0 - 0.005 * k, tol=1e-12)
        if min(sol.v.values()) < 0.95 - 1e-12:
            break
        best = sol
        k += 1
    manual = (base.total_load_kw - best.total_load_kw) - (
        best.line_loss_kw - base.line_loss_kw
    )
    assert got == pytest.approx(max(manual, 0.0) / 1000.0, abs=1e-12)


def test_vcs_zero_when_floor_already_binding():
    # A long weak chain regulated to nominal at the head: the far end sits
    # below the floor + one step, so no downward move is legal.
    net = oltc_chain(4, r=0.30)
    profs = [flat_profile(c, 14.0, 5.0, 1.3, 3.0) for c in net.cdc_ids()]
    sol = solve_feeder(net, profs, 0, tol=1e-12)
    assert min(sol.v.values()) < 0.955  # premise: within one step of the floor
    assert efr_vcs(net, profs, 0) == 0.0


def test_pec_rating_reconstructs_from_definition():
    entry = pec_rating("cdc0", 30.0, 9.86, 1.3, 4.0, v_b_prime=1.03)
    p_t = 30.0 * 0.95**1.3
    q_t = 9.86 * 0.95**4.0
    s_t = math.hypot(p_t, q_t)
    i_l = s_t / 0.95
    pf = p_t / s_t
    s_c = (1.03 - 0.95) * i_l * (1.0 + pf)
    assert entry.s_c_kva == pytest.approx(s_c, rel=1e-12)
    assert entry.v_c == pytest.approx(0.08)
    assert entry.i_l == pytest.approx(i_l, rel=1e-12)
    assert entry.pf_prime == pytest.approx(pf, rel=1e-12)
    assert entry.rating_kva == math.ceil(s_c)
    assert entry.rating_kva == 5


def test_pec_rating_validation_and_zero_load():
    with pytest.raises(ValueError, match="below"):
        pec_rating("cdc0", 10.0, 3.0, 1.3, 4.0, v_b_prime=0.90)
    idle = pec_rating("cdc0", 0.0, 0.0, 1.3, 4.0, v_b_prime=1.0)
    assert idle.s_c_kva == 0.0
    assert idle.rating_kva == 0


def test_pec_rating_fully_controllable_takes_worse_setpoint():
    # Load grows with voltage, so holding the upper set-point processes
    # more current and must size the converter.
    plain = pec_rating("cdc0", 10.0, 5.0, 2.0, 2.0, v_b_prime=1.0)
    fc = pec_rating("cdc0", 10.0, 5.0, 2.0, 2.0, v_b_prime=1.0, fully_controllable=True)
    assert fc.s_c_kva > plain.s_c_kva
    s_t = math.hypot(10.0, 5.0) * 1.05**2
    i_l = s_t / 1.05
    pf = 10.0 / math.hypot(10.0, 5.0)
    assert fc.s_c_kva == pytest.approx(0.05 * i_l * (1.0 + pf), rel=1e-12)


def test_rating_table_money_arithmetic():
    entries = (
        pec_rating("cdc0", 30.0, 9.86, 1.3, 4.0, v_b_prime=1.03),  # rating 5
        pec_rating("cdc1", 60.0, 20.0, 1.3, 4.0, v_b_prime=1.03),  # rating 10
    )
    assert [e.rating_kva for e in entries] == [5, 10]
    table = rating_table(entries, SynthesisParams(), replication=2.5)
    total_kva = 15 * 2.5
    assert table.total_gva == pytest.approx(total_kva / 1e6)
    assert table.capex_low_gbp == pytest.approx(total_kva * 60 / 1.25)
    assert table.capex_typical_gbp == pytest.approx(total_kva * 140 / 1.25)
    assert table.capex_high_gbp == pytest.approx(total_kva * 220 / 1.25)
    assert table.maintenance_gbp_per_year == pytest.approx(total_kva * 10 / 1.25)


def test_delta_efr_special_values():
    assert math.isnan(delta_efr(0.0, 0.0))
    assert delta_efr(0.0, 2.0) == pytest.approx(-100.0)
    assert delta_efr(2.0, 2.0) == 0.0
    assert delta_efr(1.0, 2.0) == pytest.approx(-50.0)


def test_substation_route_never_beats_converters_loss_free():
    for seed in (0, 1, 2):
        net = synthesize_feeder(6, seed=seed, cdcs_per_lateral=3)
        profs = random_profiles(net, seed=seed + 10, p_range=(4.0, 12.0))
        pvc, vcs, delta, _ = capability_at(net, profs, 0, include_losses=False)
        assert vcs <= pvc + 1e-12
        if pvc > 0:
            assert delta <= 1e-9


def test_build_profile_worker_invariance():
    net = chain_network(3)
    profs = random_profiles(net, seed=12, steps=6)
    one = build_profile(net, profs, workers=1)
    four = build_profile(net, profs, workers=4)
    np.testing.assert_array_equal(one.pvc_mw, four.pvc_mw)
    np.testing.assert_array_equal(one.vcs_mw, four.vcs_mw)
    assert len(one.pvc_mw) == 6


def test_scale_to_gb():
    prof = EfrProfile(
        pvc_mw=np.array([1.0, 2.0]),
        vcs_mw=np.array([0.5, 1.0]),
        delta_pct=np.array([-50.0, -50.0]),
        seasons=("winter", "summer"),
    )
    national = scale_to_gb(prof, sf=1000.0, correction=0.8)
    np.testing.assert_allclose(national.pvc_mw, [800.0, 1600.0])
    np.testing.assert_allclose(national.vcs_mw, [400.0, 800.0])
    np.testing.assert_array_equal(national.delta_pct, prof.delta_pct)
    assert national.seasons == prof.seasons
    with pytest.raises(ValueError):
        scale_to_gb(prof, sf=0.0)


def test_efr_profile_validation_and_summary():
    with pytest.raises(ValueError, match="one length"):
        EfrProfile(np.ones(3), np.ones(2), np.ones(3))
    with pytest.raises(ValueError, match="season"):
        EfrProfile(np.ones(3), np.ones(3), np.ones(3), seasons=("winter",))
    prof = EfrProfile(
        pvc_mw=np.array([1.0, 3.0, 10.0, 20.0]),
        vcs_mw=np.array([0.5, 1.5, 5.0, 10.0]),
        delta_pct=np.full(4, -50.0),
        seasons=("winter", "winter", "summer", "summer"),
    )
    summary = prof.seasonal_summary()
    assert set(summary) == {"winter", "summer"}
    assert summary["winter"]["pvc"][1] == pytest.approx(2.0)  # median of {1, 3}
    assert summary["summer"]["vcs"][1] == pytest.approx(7.5)
