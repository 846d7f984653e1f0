import math

import numpy as np
import pytest

from gridefr.efr import pec_rating, rating_table
from gridefr.grid import FrequencyParams, SynthesisParams
from gridefr.scenarios import CommittedStep, RollingState
from gridefr.valuation import (
    HOURS_PER_YEAR,
    build_report,
    c_pvc,
    co2_intensity,
    operation_cost,
    payback,
    pvc_envelope,
    wind_curtailment,
)

from conftest import toy_plant


def stub_step(hour=0, **values):
    state = RollingState({}, {}, {}, {}, {})
    return CommittedStep(hour=hour, objective=0.0, root_cost=0.0,
                         values=values, state=state)


def test_operation_cost_single_plant_hour():
    # one unit held on for an hour at full output
    gas = toy_plant(marginal=68.75)
    gas = type(gas)(**{**gas.__dict__, "no_load_cost": 2641.0, "rated_mw": 233.5})
    step = stub_step(**{"nup[gas][0]": 1.0, "pg[gas][0]": 233.5})
    cost = operation_cost([step], [gas], FrequencyParams())
    assert cost == pytest.approx(2641.0 + 68.75 * 233.5)
    assert cost == pytest.approx(18694.125)


def test_operation_cost_counts_startup_and_shed():
    gas = toy_plant()
    step = stub_step(**{"nsg[gas][0]": 2.0, "ls[0]": 1.5})
    cost = operation_cost([step], [gas], FrequencyParams())
    assert cost == pytest.approx(2 * 2000.0 + 1.5 * 50000.0)


def test_payback_cases():
    assert payback(100.0, 1000.0) == pytest.approx(10.0)
    assert payback(100.0, 1000.0, maintenance=50.0) == pytest.approx(20.0)
    assert payback(100.0, 1000.0, maintenance=100.0) == math.inf
    assert payback(-5.0, 1000.0) == math.inf
    assert payback(100.0, 0.0) == 0.0


def test_wind_curtailment():
    steps = [
        stub_step(**{"wc[0]": 10.0, "wind-available[0]": 100.0}),
        stub_step(**{"wc[0]": 0.0, "wind-available[0]": 100.0}),
    ]
    pct, lost, used = wind_curtailment(steps)
    assert pct == pytest.approx(5.0)
    assert lost == pytest.approx(10.0 * 1e-6)
    assert used == pytest.approx(190.0 * 1e-6)
    pct, lost, used = wind_curtailment([stub_step()])
    assert math.isnan(pct)
    assert lost == used == 0.0


def test_co2_intensity_mixed_fleet():
    # equal energy from two classes averages their emission factors
    a = type(toy_plant(name="a"))(**{**toy_plant(name="a").__dict__,
                                     "emissions_kg_per_mwh": 394.0})
    b = type(toy_plant(name="b"))(**{**toy_plant(name="b").__dict__,
                                     "emissions_kg_per_mwh": 925.0})
    step = stub_step(**{
        "pg[a][0]": 100.0,
        "pg[b][0]": 100.0,
        "demand-total[0]": 200.0,
        "ls[0]": 0.0,
    })
    assert co2_intensity([step], [a, b]) == pytest.approx((394.0 + 925.0) / 2)
    assert co2_intensity([step], [a, b]) == pytest.approx(659.5)
    assert math.isnan(co2_intensity([stub_step()], [a, b]))


def test_co2_intensity_excludes_shed_load():
    a = type(toy_plant(name="a"))(**{**toy_plant(name="a").__dict__,
                                     "emissions_kg_per_mwh": 500.0})
    step = stub_step(**{"pg[a][0]": 90.0, "demand-total[0]": 100.0, "ls[0]": 10.0})
    assert co2_intensity([step], [a]) == pytest.approx(500.0 * 90.0 / 90.0)


def test_c_pvc_positions():
    assert c_pvc(5.0, (0.0, 10.0)) == pytest.approx(0.5)
    assert c_pvc(0.0, (0.0, 10.0)) == 0.0
    assert c_pvc(10.0, (0.0, 10.0)) == 1.0
    assert math.isnan(c_pvc(5.0, (5.0, 5.0)))
    with pytest.raises(ValueError, match="inverted"):
        c_pvc(5.0, (10.0, 0.0))
    with pytest.warns(UserWarning, match="clamping"):
        assert c_pvc(11.0, (0.0, 10.0)) == 1.0
    with pytest.warns(UserWarning, match="clamping"):
        assert c_pvc(-1.0, (0.0, 10.0)) == 0.0


def test_pvc_envelope():
    lo, hi = pvc_envelope(100.0, 1.3)
    assert lo == pytest.approx(100.0 * 0.95**1.3)
    assert hi == pytest.approx(100.0 * 1.05**1.3)
    flat_lo, flat_hi = pvc_envelope(100.0, 0.0)
    assert flat_lo == flat_hi == 100.0


def _rating():
    entries = (pec_rating("cdc0", 30.0, 9.86, 1.3, 4.0, v_b_prime=1.03),)
    return rating_table(entries, SynthesisParams(), replication=1000.0)


def test_build_report_annualizes_and_prices():
    gas = toy_plant()
    with_pvc = [stub_step(hour=h, **{"pg[gas][0]": 50.0}) for h in range(24)]
    baseline = [stub_step(hour=h, **{"pg[gas][0]": 60.0}) for h in range(24)]
    report = build_report(
        "test", 1.0, with_pvc, baseline, [gas], FrequencyParams(), rating=_rating()
    )
    assert report.hours == 24.0
    scale = HOURS_PER_YEAR / 24.0
    assert report.operation_cost_gbp == pytest.approx(24 * 50.0 * 40.0 * scale)
    assert report.savings_gbp == pytest.approx(24 * 10.0 * 40.0 * scale)
    rt = _rating()
    assert report.capex_gbp["typical"] == pytest.approx(rt.capex_typical_gbp)
    expect_pay = rt.capex_typical_gbp / (report.savings_gbp - rt.maintenance_gbp_per_year)
    assert report.payback_years["typical"] == pytest.approx(expect_pay)


def test_build_report_scales_capex_by_fraction():
    gas = toy_plant()
    steps = [stub_step(**{"pg[gas][0]": 50.0})]
    base = [stub_step(**{"pg[gas][0]": 60.0})]
    rt = _rating()
    report = build_report("test", 0.3, steps, base, [gas], FrequencyParams(), rating=rt)
    assert report.capex_gbp["low"] == pytest.approx(0.3 * rt.capex_low_gbp)
    assert report.maintenance_gbp == pytest.approx(0.3 * rt.maintenance_gbp_per_year)


def test_build_report_c_pvc_scalar_and_cycling_bounds():
    gas = toy_plant()
    steps = [
        stub_step(hour=0, **{"pvc-actual[0]": 7.5}),
        stub_step(hour=1, **{"pvc-actual[0]": 30.0}),
        stub_step(hour=2, **{"pvc-actual[0]": 5.0}),
    ]
    base = [stub_step(hour=h) for h in range(3)]
    # scalar bounds apply everywhere
    rep = build_report("s", 1.0, steps, base, [gas], FrequencyParams(),
                       envelope_mw=(5.0, 10.0))
    assert rep.c_pvc_series == pytest.approx((0.5, 1.0, 0.0))
    # per-hour bounds cycle with the hour index
    lo = np.array([5.0, 20.0])
    hi = np.array([10.0, 40.0])
    rep = build_report("s", 1.0, steps, base, [gas], FrequencyParams(),
                       envelope_mw=(lo, hi))
    assert rep.c_pvc_series == pytest.approx((0.5, 0.5, 0.0))


def test_build_report_validation():
    gas = toy_plant()
    with pytest.raises(ValueError, match="same hours"):
        build_report("s", 1.0, [stub_step()], [], [gas], FrequencyParams())
    with pytest.raises(ValueError, match="empty"):
        build_report("s", 1.0, [], [], [gas], FrequencyParams())


def test_report_rows_and_summary():
    gas = toy_plant()
    steps = [stub_step(**{"pg[gas][0]": 50.0, "wind-available[0]": 10.0, "wc[0]": 1.0,
                          "demand-total[0]": 50.0})]
    base = [stub_step(**{"pg[gas][0]": 60.0})]
    report = build_report("gnw", 0.6, steps, base, [gas], FrequencyParams(),
                          rating=_rating(), envelope_mw=(5.0, 10.0))
    rows = report.rows()
    figures = {r[0] for r in rows}
    assert {"cost", "savings", "curtailment", "co2", "payback-typical", "c-pvc"} <= figures
    assert all(r[1] == "gnw" for r in rows)
    text = report.summary()
    assert "gnw" in text
    assert "60%" in text
    assert "payback" in text
