import math

import numpy as np
import pytest

from dudesim import presets
from dudesim.association import Coupled, Dude, RangeExtension
from dudesim.engine import (
    CONVERGENCE_DB,
    CSV_HEADER,
    aggregate,
    coverage_pgm,
    coverage_raster,
    metrics_csv,
    run_campaign,
    run_snapshot,
    run_snapshots,
    snapshot_seed,
    sweep_pico_activation,
)
from dudesim.scenario import Area, Cell, Layer, Scenario, Ue

SMALL = presets.testbed_mini(mean_ue_count=40)


def _single_macro(size=500.0, **kw):
    return Scenario(cells=(Cell(0, Layer.MACRO, 0.0, 0.0),), area=Area(0, 0, size, size), **kw)


def test_empty_draw():
    s = _single_macro(mean_ue_count=1e-9)
    r = run_snapshot(s, Dude(), 3)
    assert r.n_ues == 0 and r.ul_load.tolist() == [0] and not r.outage.any()
    m = aggregate([r])
    assert m.percentiles == (0.0, 0.0, 0.0, 0.0)
    assert (m.outage_macro, m.decoupled_fraction, m.mean_ues_macro) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("x, cap", [(1000.0, False), (40.0, True)])
def test_single_link_closed_form(x, cap):
    s = _single_macro(2000.0)
    r = run_snapshot(s, Coupled(), 0, ues=[Ue(0, x, 0.0)])
    # 20 dBm + 17.8 dBi - (38.5 + 40 log10 x) against thermal noise in 180 kHz + 5 dB
    noise = -174.0 + 10 * math.log10(180e3) + 5.0
    snr = 20.0 + 17.8 - 38.5 - 40.0 * math.log10(x) - noise
    se = min(math.log2(1 + 10 ** (snr / 10)), 6.0)
    expected = min(20e6, 100 * 180e3 * se)
    assert r.throughput[0] == pytest.approx(expected, rel=1e-12)
    assert r.sinr_db[0] == pytest.approx(snr, abs=1e-9)
    assert (r.throughput[0] == 20e6) == cap
    assert r.converged and r.tx_power[0] == 20.0


def test_snapshot_is_deterministic():
    a = run_snapshot(SMALL, Dude(), 42)
    b = run_snapshot(SMALL, Dude(), 42)
    assert a == b
    assert a != run_snapshot(SMALL, Dude(), 43)


def test_snapshot_invariants():
    for seed in range(5):
        r = run_snapshot(SMALL, Dude(), seed)
        assert len(set(r.ue_ids.tolist())) == r.n_ues
        assert r.ul_load.sum() == r.n_ues == r.dl_load.sum()
        served = ~r.outage
        assert np.all(r.throughput[served] >= SMALL.demand.r_min - 1e-6)
        assert np.all(r.throughput <= SMALL.demand.r_max)
        assert np.all(r.throughput[r.outage] == 0) and np.all(r.rb_count[r.outage] == 0)
        for c in range(len(r.cell_ids)):
            assert r.rb_count[np.searchsorted(r.cell_ids, r.ul_cell) == c].sum() <= SMALL.n_rb
        assert np.all(r.tx_power <= 20.0) and np.all(r.tx_power >= SMALL.power_control.p_min)
        assert 1 <= r.rounds <= 10
        if r.converged and r.rounds > 1:
            assert np.all(r.level_history[-1] - r.level_history[-2] <= CONVERGENCE_DB)


def test_coupled_has_no_decoupled_ues():
    r = run_snapshot(SMALL, Coupled(), 1)
    assert r.decoupled == 0


def test_snapshot_seeds():
    seeds = [snapshot_seed(7, i) for i in range(50)]
    assert len(set(seeds)) == 50
    assert seeds == [snapshot_seed(7, i) for i in range(50)]
    assert snapshot_seed(8, 0) != seeds[0]


def test_single_snapshot_campaign_equals_the_snapshot():
    m = run_campaign(SMALL, Dude(), 1, 5)
    r = run_snapshot(SMALL, Dude(), snapshot_seed(5, 0))
    assert m.percentiles == tuple(float(v) for v in np.percentile(r.throughput, [5, 50, 90, 98]))
    assert m.decoupled_fraction == pytest.approx(r.decoupled / r.n_ues)
    macro_ue = ~r.ul_is_pico
    assert m.outage_macro == pytest.approx(r.outage[macro_ue].mean())
    assert m.mean_ues_pico == pytest.approx(r.ul_load[r.cell_is_pico].mean())


def test_pooled_percentiles_and_order_independence():
    results = run_snapshots(SMALL, Dude(), 4, 9)
    m = aggregate(results)
    pooled = np.concatenate([r.throughput for r in results])
    np.testing.assert_allclose(m.percentiles, np.percentile(pooled, [5, 50, 90, 98]), rtol=0, atol=0)
    assert aggregate(results[::-1]) == m
    assert m.p5 <= m.p50 <= m.p90 <= m.p98
    for f in (m.outage_macro, m.outage_pico, m.decoupled_fraction):
        assert 0.0 <= f <= 1.0


def test_unreachable_demand_is_total_outage():
    s = SMALL.with_demand(1e9, 1e9)
    m = run_campaign(s, Dude(), 3, 1)
    assert m.outage_macro == 1.0 and m.outage_pico == 1.0
    assert m.percentiles == (0.0, 0.0, 0.0, 0.0)


def test_parallel_campaign_matches_serial():
    s = presets.testbed_mini()
    assert run_campaign(s, Dude(), 20, 3, workers=4) == run_campaign(s, Dude(), 20, 3, workers=1)


def test_campaign_rejects_zero_snapshots():
    with pytest.raises(ValueError):
        run_campaign(SMALL, Dude(), 0, 1)


def test_sweep_prefixes():
    order = [c.id for c in SMALL.picos]
    series = {
        str(pol): sweep_pico_activation(SMALL, pol, order, 2, 11)
        for pol in (Coupled(), Dude(), RangeExtension(6.0))
    }
    zero = {k: v[0][1] for k, v in series.items()}
    assert len(set(zero.values())) == 1
    assert [k for k, _ in series["dude"]] == list(range(13))
    assert series["dude"][-1][1] == run_campaign(SMALL, Dude(), 2, 11)
    with pytest.raises(ValueError):
        sweep_pico_activation(SMALL, Dude(), order[:-1], 1, 1)


def test_coverage_only_macros():
    s = _single_macro()
    cov = coverage_raster(s, Dude(), 50.0)
    assert cov.is_pico.shape == (10, 10)
    assert cov.pico_fraction == 0.0 and cov.macro_fraction == 1.0


def test_coverage_equal_eirp_degenerates():
    cells = tuple(
        Cell(i, Layer.MACRO if i < 2 else Layer.PICO, x, y, tx_power=40.0, antenna_gain=10.0)
        for i, (x, y) in enumerate([(100, 100), (400, 400), (250, 50), (50, 400), (450, 150)])
    )
    s = Scenario(cells=cells, area=Area(0, 0, 500, 500))
    a = coverage_raster(s, Dude(), 10.0)
    b = coverage_raster(s, Coupled(), 10.0)
    np.testing.assert_array_equal(a.ul_cell, b.ul_cell)


def test_coverage_ordering_on_the_desk_preset():
    s = presets.testbed_mini()
    fr = [coverage_raster(*presets.apply_case(s, c), 10.0).pico_fraction for c in ("dl-lp", "dl-hp", "dude")]
    assert fr[0] < fr[1] < fr[2]


def test_coverage_pgm_layout():
    s = Scenario(
        cells=(Cell(0, Layer.MACRO, 0, 0), Cell(1, Layer.PICO, 10, 95)),
        area=Area(0, 0, 20, 100),
    )
    cov = coverage_raster(s, Dude(), 10.0)
    text = coverage_pgm(cov)
    lines = text.splitlines()
    assert lines[:3] == ["P2", "2 10", "255"]
    assert lines[3] == "255 255"  # north edge, next to the pico
    assert lines[-1] == "0 0"
    assert set(" ".join(lines[3:]).split()) <= {"0", "255"}


def test_metrics_csv_formatting():
    m = run_campaign(SMALL, Dude(), 2, 1)
    text = metrics_csv([("dude", m)])
    head, row = text.splitlines()
    assert head == CSV_HEADER
    fields = row.split(",")
    assert fields[0] == "dude" and fields[1] == "12" and fields[2] == "2"
    assert all(f.isdigit() for f in fields[3:7])
    assert all(len(f.split(".")[1]) == 4 for f in fields[7:])
