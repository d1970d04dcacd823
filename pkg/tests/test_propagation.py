import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dudesim.propagation import (
    CouplingGainMatrix,
    PathlossRaster,
    PowerLawModel,
    build_gain_matrix,
    dump_pathloss_raster,
    link_shadowing,
    load_pathloss_raster,
    pathloss_powerlaw,
    raster_from_model,
)
from dudesim.scenario import Area, Cell, Layer, ParseError, Scenario, ScenarioError, Ue

MACRO = Cell(0, Layer.MACRO, 0.0, 0.0)
PICO = Cell(1, Layer.PICO, 100.0, 0.0, tx_power=30.0, antenna_gain=4.0)


def test_powerlaw_reference_values():
    # hand-computed: 38.5 + 10*alpha*log10(d)
    assert pathloss_powerlaw(100.0, 4.0, 38.5) == pytest.approx(118.5)
    assert pathloss_powerlaw(1000.0, 3.6, 38.5) == pytest.approx(146.5)
    assert pathloss_powerlaw(10.0, 4.0) == pytest.approx(40.0)
    assert pathloss_powerlaw(0.0, 4.0, 38.5) == pytest.approx(38.5)
    assert pathloss_powerlaw(0.3, 3.6) == pytest.approx(0.0)
    np.testing.assert_allclose(pathloss_powerlaw(np.array([1.0, 10.0, 100.0]), 3.0), [0, 30, 60])


@settings(max_examples=100, deadline=None)
@given(
    d1=st.floats(0, 5000),
    d2=st.floats(0, 5000),
    alpha=st.floats(2, 6),
)
def test_powerlaw_is_monotone(d1, d2, alpha):
    lo, hi = sorted((d1, d2))
    assert pathloss_powerlaw(lo, alpha) <= pathloss_powerlaw(hi, alpha) + 1e-12


def test_model_uses_layer_exponent():
    m = PowerLawModel(4.0, 3.6, 38.5)
    xy = np.array([[100.0, 0.0]])
    assert m.pathloss(MACRO, xy)[0] == pytest.approx(118.5)
    assert m.pathloss(PICO, [[0.0, 0.0]])[0] == pytest.approx(38.5 + 72.0)
    with pytest.raises(ValueError):
        PowerLawModel(exponent_macro=7.0)


def _scenario(**kw):
    return Scenario(cells=(MACRO, PICO), area=Area(0, 0, 200, 100), **kw)


def test_gain_matrix_layout_and_values():
    s = _scenario(ref_loss=0.0)
    ues = [Ue(7, 10.0, 0.0), Ue(3, 100.0, 0.0, antenna_gain=2.0)]
    g = build_gain_matrix(s, ues)
    assert g.cell_ids.tolist() == [0, 1]
    assert g.ue_ids.tolist() == [7, 3]
    # macro -> ue 7: 17.8 + 0 - 40 ; pico -> ue 3 at d=0 (clamped): 4 + 2 - 0
    assert g.get(0, 7) == pytest.approx(17.8 - 40.0)
    assert g.get(1, 3) == pytest.approx(6.0)
    assert g.get(1, 7) == pytest.approx(4.0 - 36.0 * np.log10(90.0))
    with pytest.raises(ValueError):
        g.gain[0, 0] = 1.0
    with pytest.raises(KeyError):
        g.get(5, 7)


def test_gain_matrix_skips_inactive_cells_and_handles_no_ues():
    s = _scenario().replace(cells=(MACRO, Cell(1, Layer.PICO, 5, 5, active=False)))
    g = build_gain_matrix(s, [Ue(0, 1, 1)])
    assert g.cell_ids.tolist() == [0]
    empty = build_gain_matrix(s, [])
    assert empty.gain.shape == (1, 0)


def test_shadowing_is_per_link_and_reproducible():
    a = link_shadowing(1, 0, 5, 8.0)
    assert a == link_shadowing(1, 0, 5, 8.0)
    assert a != link_shadowing(1, 1, 5, 8.0)
    assert a != link_shadowing(2, 0, 5, 8.0)
    assert link_shadowing(1, 0, 5, 0.0) == 0.0

    s = _scenario(shadowing_sigma=6.0)
    ues = [Ue(i, 20.0 * i, 50.0) for i in range(6)]
    g = build_gain_matrix(s, ues, seed=9)
    # dropping a UE leaves the other links unchanged
    g2 = build_gain_matrix(s, ues[:3] + ues[4:], seed=9)
    np.testing.assert_array_equal(g.gain[:, [0, 1, 2, 4, 5]], g2.gain)
    assert build_gain_matrix(s, ues, seed=9) == g
    assert build_gain_matrix(s, ues, seed=10) != g


def test_raster_lookup_and_edges():
    grid = np.arange(6, dtype=float).reshape(2, 3)
    r = PathlossRaster(0.0, 0.0, 10.0, {0: grid, 1: grid + 100})
    np.testing.assert_array_equal(r.pathloss(MACRO, [[5, 5], [25, 15], [30, 20]]), [0.0, 5.0, 5.0])
    # row 0 is the southern row
    assert r.pathloss(MACRO, [[0, 12]])[0] == 3.0
    with pytest.raises(ScenarioError, match="outside raster"):
        r.pathloss(MACRO, [[31, 5]])
    with pytest.raises(ScenarioError, match="cell 7"):
        r.check_cells([Cell(7, Layer.PICO, 0, 0)])


def test_raster_matches_model_at_pixel_centres():
    m = PowerLawModel(4.0, 3.6, 38.5)
    r = raster_from_model(m, [MACRO, PICO], (0.0, 0.0), 10.0, (10, 20))
    centres = np.array([[15.0, 25.0], [105.0, 55.0], [195.0, 95.0]])
    for c in (MACRO, PICO):
        np.testing.assert_allclose(r.pathloss(c, centres), m.pathloss(c, centres))

    # a scenario using the raster reproduces the model's gains at pixel centres
    ues = [Ue(i, x, y) for i, (x, y) in enumerate(centres)]
    g_model = build_gain_matrix(_scenario(ref_loss=38.5), ues)
    g_raster = build_gain_matrix(_scenario(ref_loss=38.5, pathloss_raster=r), ues)
    np.testing.assert_allclose(g_raster.gain, g_model.gain)


def test_raster_file_roundtrip(tmp_path):
    m = PowerLawModel(4.0, 3.6, 38.5)
    r = raster_from_model(m, [MACRO, PICO], (0.0, 0.0), 25.0, (4, 8))
    p = tmp_path / "pl.txt"
    dump_pathloss_raster(r, p)
    back = load_pathloss_raster(p)
    assert back.shape == (4, 8) and sorted(back.grids) == [0, 1]
    for cid in (0, 1):
        np.testing.assert_array_equal(back.grids[cid], r.grids[cid])


@pytest.mark.parametrize(
    "text, msg",
    [
        ("PLRASTER v2 1 2 1 0 0 1\nCELL 0\n1 2\n", "PLRASTER v1"),
        ("PLRASTER v1 1 2 2 0 0 1\nCELL 0\n1 2\n", "grid size mismatch"),
        ("PLRASTER v1 1 2 1 0 0 1\nCELL 0\n1 2 3\n", "grid size mismatch"),
        ("PLRASTER v1 1 2 1 0 0 1\nCELX 0\n1 2\n", "CELL"),
        ("PLRASTER v1 1 2 1 0 0 1\nCELL 0\n1 nan\n", "non-finite"),
        ("", "empty"),
    ],
)
def test_raster_file_errors(tmp_path, text, msg):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError, match=msg):
        load_pathloss_raster(p)


def test_scenario_raster_missing_cell_is_rejected():
    r = PathlossRaster(0.0, 0.0, 10.0, {0: np.zeros((10, 20))})
    with pytest.raises(ScenarioError, match="cell 1"):
        build_gain_matrix(_scenario(pathloss_raster=r), [Ue(0, 5, 5)])


def test_matrix_equality_is_structural():
    a = CouplingGainMatrix(np.array([0]), np.array([1]), np.array([[1.0]]), np.array([[2.0]]))
    b = CouplingGainMatrix(np.array([0]), np.array([1]), np.array([[1.0]]), np.array([[2.0]]))
    assert a == b


def test_shadowing_enters_pathloss_and_gain_alike():
    s = _scenario(shadowing_sigma=8.0)
    ues = [Ue(i, 30.0 * i, 40.0, antenna_gain=1.5) for i in range(5)]
    g = build_gain_matrix(s, ues, seed=4)
    flat = build_gain_matrix(s, ues, sigma=0.0)
    ant = np.array([[17.8], [4.0]]) + 1.5
    np.testing.assert_allclose(g.gain + g.pathloss, np.broadcast_to(ant, g.gain.shape))
    assert not np.allclose(g.pathloss, flat.pathloss)
