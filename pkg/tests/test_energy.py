import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tcam import energy as en
from tcam.energy import Battery, EnergyTable, EventRates, Storage
from tcam.errors import ModelError

T = EnergyTable()
S = Storage()


@pytest.mark.parametrize("bits,mj,secs,cap", [
    (27.4e3, 3.08, 57, 74), (158.2e3, 17.8, 330, 12), (3.7e6, 414, None, 0)])
def test_unit_cost_examples(bits, mj, secs, cap):
    e, t = en.egress_cost(bits)
    assert e * 1e3 == pytest.approx(mj, rel=0.02)
    if secs:
        assert t["short"] == pytest.approx(secs, rel=0.02)
    assert en.flash_capacity(bits) == cap


def test_per_bit_constants_consistent_across_rows():
    # published (bits, flash uJ, egress mJ) rows
    rows = [(3.7e6, 407, 414), (335e3, 36.9, 37.7), (158.2e3, 17.4, 17.8), (27.4e3, 3.0, 3.1)]
    for fb, ff, fe in rows:
        f_pb, e_pb = ff * 1e-6 / fb, fe * 1e-3 / fb
        for b, f, e in rows:
            assert b * f_pb == pytest.approx(f * 1e-6, rel=0.02)
            assert b * e_pb == pytest.approx(e * 1e-3, rel=0.02)


def test_headline_power():
    uw, led = en.average_power(EventRates(1200, 0.5, 0.5, 0.2))
    assert uw == pytest.approx(49.6, rel=0.05)
    assert led.total == pytest.approx(led.average_power * led.elapsed)


def test_all_probabilities_zero():
    uw, _ = en.average_power(EventRates(600, 0, 0, 0))
    assert uw == pytest.approx(48.8 + 39.6 / 600, rel=1e-12)


def test_no_events():
    assert en.average_power(EventRates(None))[0] == pytest.approx(48.8, rel=1e-12)
    assert en.average_power(EventRates(math.inf))[0] == pytest.approx(48.8, rel=1e-12)


def test_ledger_conservation():
    _, led = en.average_power(EventRates(300, 0.7, 0.4, 0.3), method="jpeg")
    assert sum(led.behaviors.values()) == pytest.approx(led.total, rel=1e-12)
    assert sum(led.shares().values()) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(10, 1e5), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_compression_dominance(iv, pp, pf, pu):
    r = EventRates(iv, pp, pf, pu)
    p = [en.average_power(r, method=m)[0] for m in ("h264cd", "h264", "jpeg", "raw")]
    assert p[0] <= p[1] <= p[2] <= p[3]


def test_lifetime_examples():
    b = Battery()
    assert en.shelf_life_days() == pytest.approx(48, rel=0.02)
    life = en.lifetime_days(en.average_power(EventRates())[0])
    assert 6.3 <= life <= 7.8
    assert en.lifetime_days(b.usable_energy / en.DAY / en.UW) == pytest.approx(1.0, rel=1e-12)
    assert en.lifetime_days(5.0, recharge_uw=10.0) == math.inf


@pytest.mark.parametrize("frac", [0.5, 0.83, 1.0])
def test_lifetime_ratio_independent_of_usable_fraction(frac):
    b = Battery(usable_fraction=frac)
    assert en.lifetime_days(7.35, b) / en.lifetime_days(49.6, b) == pytest.approx(49.6 / 7.35, rel=1e-12)


def test_calibration_reproduces_shelf_life():
    f = en.calibrate_usable_fraction(7.35, 48)
    assert en.shelf_life_days(Battery(usable_fraction=f)) == pytest.approx(48, rel=1e-12)
    assert abs(f - Battery().usable_fraction) < 0.01


def test_sweep_properties():
    sw = en.sweep_hed()
    assert sw.savings[0, 0] >= 100
    assert sw.savings[-1, -1] <= 1
    assert (np.diff(sw.savings, axis=0) <= 1e-12).all()
    assert (np.diff(sw.savings, axis=1) <= 1e-12).all()
    assert len(list(sw.rows())) == 121


def test_sweep_rejects_bad_grid():
    with pytest.raises(ModelError):
        en.sweep_hed(pd_grid=[0, 1.5])


def test_breakdown_low_rate_is_sensor():
    sh = en.power_breakdown(EventRates(1e7, 0.01, 0.01, 0.01))
    assert sh["sensor"] > 0.9


def test_breakdown_high_urfd_raw_is_radio():
    sh = en.power_breakdown(EventRates(60, 1, 1, 1), method="raw")
    assert max(sh, key=sh.get) == "radio"


def test_isp_share_is_small_over_grid():
    for pd in en.DEFAULT_GRID:
        for ur in en.DEFAULT_GRID:
            sh = en.power_breakdown(EventRates(60, pd, 1.0, ur), method="raw")
            assert sh["isp"] < sh["sensor"]
            if pd > 0 and ur > 0:
                assert sh["isp"] < sh["radio"]


def test_lifetime_extension():
    assert en.lifetime_extension(motion_interval=60) >= 12
    iv = en.interval_for_extension(13)
    assert en.lifetime_extension(motion_interval=iv) == pytest.approx(13, rel=1e-9)


def test_peak_current_report():
    rep = dict((n, (i, flag)) for n, i, flag in
               en.peak_current_report({"motion_mode": 1.0, "fd": 0.05}))
    assert rep["motion_mode"][0] == pytest.approx(48.8e-6 / 3 / 0.64)
    assert not rep["motion_mode"][1]
    assert rep["fd"][1]


def test_table_validation():
    with pytest.raises(ModelError):
        EnergyTable(e_pd=-1)
    with pytest.raises(ModelError):
        EventRates(60, 1.5)
    with pytest.raises(ModelError):
        Storage(radio_mode="carrier-pigeon")
    with pytest.raises(ModelError):
        S.frame_bits("png")


def test_placement_extremes():
    assert en.placement_optimize(1e6, 0, 1e-12).choice == "off_chip"
    assert en.placement_optimize(1e6, 1e9, 1e-12).choice == "on_chip"


def test_placement_agrees_with_simulation(rng):
    for _ in range(5):
        bits = float(rng.uniform(1e5, 4e6))
        leak = float(rng.uniform(1e-13, 1e-12))
        rate = float(rng.uniform(1e-3, 0.05))
        p = en.placement_optimize(bits, rate, leak)
        on, off = en.simulate_placement(bits, rate, leak)
        if abs(on - off) > 0.01 * on:
            assert p.choice == ("on_chip" if on < off else "off_chip")
