"""Acceptance suite: one PASS/FAIL line per criterion.

Run with pytest (lines appear under "acceptance criteria" in the summary) or
directly: ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE  # noqa: E402

from flashpim.cli import main as cli_main
from flashpim.config import CONVENTIONAL, SIZE_A, SIZE_B, FlashTopology, PlaneConfig, TechParams
from flashpim.dse import AREA_RATIOS, area_report, bus_comparison
from flashpim.interconnect import hop_latency, simulate_htree, simulate_shared_bus, transfer_time
from flashpim.llm_workload import (break_even_tokens, estimate_baseline_tpot, estimate_tpot,
                                   get_model, kv_write_overhead)
from flashpim.plane_pim import InputVector, pack_weights, pim_dot_product
from flashpim.tech_model import (cell_density, horowitz_delay, page_read_latency, pim_latency)
from flashpim.tiling import (best_plan, compose, cost_smvm, enumerate_plans, tile_counts,
                             tile_partials)

# 8 QLC dies per way, no SLC partition: the hierarchy used for the tiling comparison
TILING_TOPO = FlashTopology(slc_dies_per_way=0, qlc_dies_per_way=8)


def record(label, ok, detail):
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def within(x, target, rel):
    return abs(x - target) <= rel * target


def test_criterion_1_functional_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        m, n = int(rng.integers(1, 129)), int(rng.integers(1, 513))
        signed = bool(rng.integers(2))
        w = rng.integers(-128, 128, (m, n)) if signed else rng.integers(0, 256, (m, n))
        x = rng.integers(0, 256, m)
        got = pim_dot_product(pack_weights(w, signed), InputVector(x))
        want = sum(int(x[i]) * w[i].astype(object) for i in range(m))
        bad += int(not all(int(a) == int(b) for a, b in zip(got, want)))
    dt = time.perf_counter() - t0
    record(1, bad == 0 and dt < 10, f"1000 instances, {bad} mismatches, {dt:.2f} s")


def test_criterion_2_tiled_reconstruction():
    rng = np.random.default_rng(7)
    topo = FlashTopology()
    bad = n_plans = 0
    for _ in range(100):
        m, n = int(rng.integers(1, 2049)), int(rng.integers(1, 2049))
        w = rng.integers(0, 256, (m, n))
        x = rng.integers(0, 256, m)
        ref = x @ w
        parts = tile_partials(w, x, SIZE_A)
        for p in enumerate_plans(m, n, topo, SIZE_A):
            n_plans += 1
            bad += int(not np.array_equal(compose(p, parts, n), ref))
    record(2, bad == 0, f"100 shapes, {n_plans} plans, {bad} mismatches")


def test_criterion_3_calibration_anchors(tech):
    t_a = pim_latency(SIZE_A, tech).total
    d_a, d_b = cell_density(SIZE_A, tech), cell_density(SIZE_B, tech)
    read = page_read_latency(CONVENTIONAL, tech)
    checks = [within(t_a, 2.0e-6, 0.10), within(d_a, 12.84, 0.05),
              within(d_b / d_a, 0.5, 0.10), 20e-6 <= read <= 50e-6]
    record(3, all(checks),
           f"Size A PIM {t_a * 1e6:.3f} us, density A {d_a:.2f} Gib/mm^2, "
           f"B/A {d_b / d_a:.3f}, conventional read {read * 1e6:.1f} us")


def test_criterion_4_htree_benefit(tech, topo):
    rows = bus_comparison(tech, topo)
    red = np.mean([r["reduction"] for r in rows])
    inc = np.mean([r["a_over_b"] for r in rows])
    ok = abs(red - 0.46) <= 0.10 and abs(inc - 0.17) <= 0.08
    record(4, ok, f"mean reduction {red * 100:.1f} %, Size B->A increase {inc * 100:.1f} %")


def _named_plans(tech):
    out = {}
    for pattern in ("N/C/C/R", "C/C/N/R", "C/C/R/R"):
        plan, cost = best_plan(7168, 7168, TILING_TOPO, SIZE_A, tech, pattern=pattern)
        out[pattern] = (plan, cost)
    return out


def test_criterion_5a_row_tiles():
    r, _ = tile_counts(7168, 7168, SIZE_A)
    record("5a", r == 56, f"row tiles {r}")


def test_criterion_5b_nccr_lowest_outbound(tech):
    res = _named_plans(tech)
    ob = {k: c.outbound_io for k, (_, c) in res.items()}
    low = min(ob, key=ob.get)
    record("5b", low == "N/C/C/R",
           "outbound " + ", ".join(f"{res[k][0]} {v * 1e6:.3f} us" for k, v in ob.items()))


def test_criterion_5c_ccrr_vs_ccnr(tech):
    res = _named_plans(tech)
    ccnr = res["C/C/N/R"][1].outbound_io
    ccrr = res["C/C/R/R"][1].outbound_io
    drop = 1 - ccrr / ccnr
    record("5c", abs(drop - 0.47) <= 0.10 + 1e-12,
           f"{res['C/C/R/R'][0]} outbound {drop * 100:.1f} % below {res['C/C/N/R'][0]}")


def test_criterion_6_end_to_end(tech, topo):
    model = get_model("opt-30b")
    t = estimate_tpot(model, topo, SIZE_A, tech, 1024).total_tpot
    base = estimate_baseline_tpot(model, topo, tech, 1024).total_tpot
    ratio = base / t
    ok = within(t, 7e-3, 0.30) and within(base, 1.4, 0.30) and 150 <= ratio <= 280
    record(6, ok, f"TPOT {t * 1e3:.3f} ms, baseline {base:.3f} s, speedup {ratio:.0f}x")


def test_criterion_7_kv(topo):
    t = kv_write_overhead(get_model("opt-30b"), 1024, topo)
    n = break_even_tokens(0.120, 0.010)
    record(7, within(t, 0.120, 0.10) and n == 12,
           f"KV write {t * 1e3:.1f} ms, break-even {n} tokens")


def test_criterion_8_area(tech, topo):
    r = area_report(SIZE_A, topo, tech)
    ok = (within(r.total_pim_area, 4.98, 0.05) and r.ratios == AREA_RATIOS
          and r.ratios == {"hv_peri": 0.2162, "lv_peri": 0.2316, "rpu_htree": 0.0039}
          and r.peripheral_ratio < 0.5)
    record(8, ok, f"{r.n_planes} planes {r.total_pim_area:.3f} mm^2, "
                  f"peripheral {r.peripheral_ratio * 100:.2f} %")


def test_criterion_9_properties(tech, tmp_path):
    rng = np.random.default_rng(99)
    fails = []

    dens = {cell_density(PlaneConfig(4 * int(r), 2048, 128), tech) for r in rng.integers(1, 2000, 50)}
    if len(dens) != 1:
        fails.append("density depends on n_row")

    for tau in rng.uniform(1e-12, 1e-6, 100):
        ratio = horowitz_delay(4 * tau, tech.horowitz_k) / horowitz_delay(tau, tech.horowitz_k)
        if abs(ratio - 8.0) > 8.0 * 1e-12:
            fails.append(f"horowitz scaling {ratio}")
            break

    for _ in range(500):
        base = PlaneConfig(4 * int(rng.integers(1, 513)), int(rng.integers(64, 16385)),
                           int(rng.integers(8, 513)))
        axis = ("n_row", "n_col", "n_stack")[int(rng.integers(3))]
        bigger = PlaneConfig(**{**base.__dict__, axis: getattr(base, axis) * int(rng.integers(2, 5))})
        if pim_latency(bigger, tech).total < pim_latency(base, tech).total:
            fails.append(f"latency not monotone at {base.label} along {axis}")
            break

    for _ in range(200):
        n = int(rng.integers(2, 513))
        pim = float(rng.uniform(1e-8, 1e-4))
        nbytes = int(rng.integers(1, 8193))
        topo = FlashTopology(bus_bytes_per_sec=float(rng.choice([1.6e9, 2.0e9])))
        if simulate_htree(n, pim, nbytes, topo) > simulate_shared_bus(n, pim, nbytes, topo) * (1 + 1e-12):
            fails.append(f"H-tree slower for n={n} bytes={nbytes}")
            break

    outs = []
    for i in range(2):
        path = tmp_path / f"trace{i}.csv"
        cli_main(["bus", "--shape", "1024x4096", "--trace", str(path)])
        outs.append(path.read_bytes())
    if outs[0] != outs[1]:
        fails.append("trace replay differs")

    record(9, not fails, "all property checks hold" if not fails else "; ".join(fails))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
