import pytest

from flashpim.config import SIZE_A, SIZE_B, FlashTopology, PlaneConfig
from flashpim.dse import (AREA_RATIOS, SweepSpec, area_report, bus_comparison, evaluate,
                          grid_candidates, run_sweep, select_plane, sweep_csv)


def test_sweep_spec_validation():
    assert SweepSpec("n_col").values == (512, 1024, 2048, 4096, 8192)
    with pytest.raises(ValueError):
        SweepSpec("n_depth")
    with pytest.raises(ValueError):
        SweepSpec("n_col", (2048, 1024))
    with pytest.raises(ValueError):
        SweepSpec("n_col", (1024, 1024))


@pytest.mark.parametrize("axis", ["n_row", "n_col", "n_stack"])
def test_sweep_latency_monotone(axis, tech):
    rows = run_sweep(SweepSpec(axis), tech)
    lat = [r.pim_latency for r in rows]
    assert lat == sorted(lat)
    for r in rows:
        assert sum(r.latency.values()) == pytest.approx(r.pim_latency)


def test_density_trends(tech):
    d_row = [r.density for r in run_sweep(SweepSpec("n_row"), tech)]
    assert max(d_row) == pytest.approx(min(d_row))
    d_col = [r.density for r in run_sweep(SweepSpec("n_col"), tech)]
    d_stack = [r.density for r in run_sweep(SweepSpec("n_stack"), tech)]
    assert d_col == sorted(d_col) and d_stack == sorted(d_stack)


def test_csv_units(tech):
    text = sweep_csv(run_sweep(SweepSpec("n_stack", (64, 128)), tech))
    header = text.splitlines()[0].split(",")
    assert header[:3] == ["n_row", "n_col", "n_stack"]
    assert "pim_latency_us" in header and "density_gib_per_mm2" in header
    assert len(text.splitlines()) == 3


def test_select_plane(tech):
    cands = grid_candidates()
    best = select_plane(cands, 2.2e-6, tech)
    assert (best.n_col, best.n_stack) == (SIZE_A.n_col, SIZE_A.n_stack)
    assert select_plane(cands, 1e-9, tech) is None
    with pytest.raises(ValueError):
        select_plane([], 1e-6, tech)


def test_select_plane_is_optimal(tech):
    from flashpim.tech_model import cell_density, pim_latency
    cands = grid_candidates()
    for budget in (1.5e-6, 2.2e-6, 4e-6):
        best = select_plane(cands, budget, tech)
        ok = [c for c in cands if pim_latency(c, tech).total <= budget]
        assert cell_density(best, tech) == pytest.approx(max(cell_density(c, tech) for c in ok))


def test_area(tech, topo):
    r = area_report(SIZE_A, topo, tech)
    assert r.total_pim_area == pytest.approx(256 * r.plane_area)
    assert r.peripheral_ratio == pytest.approx(sum(AREA_RATIOS.values()))
    assert r.within_budget
    assert set(r.as_dict()) >= {"plane_area_mm2", "total_pim_area_mm2", "ratios"}


def test_bus_comparison_shapes(tech, topo):
    rows = bus_comparison(tech, topo, shapes=((1024, 1024),))
    assert rows[0]["htree_a"] < rows[0]["shared_a"]
    assert 0 < rows[0]["reduction"] < 1


def test_evaluate_small_plane(tech):
    r = evaluate(PlaneConfig(128, 512, 32), tech)
    assert r.energy["total"] > 0 and r.density > 0
