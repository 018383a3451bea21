"""Regenerate the headline tables as CSV files: plane sweeps, bus comparison,
tiling comparison and the OPT TPOT breakdown."""

import argparse
import csv
from pathlib import Path

from flashpim.config import SIZE_A, FlashTopology, TechParams
from flashpim.dse import SweepSpec, bus_comparison, run_sweep, sweep_csv
from flashpim.llm_workload import estimate_baseline_tpot, estimate_tpot, get_model
from flashpim.tiling import best_plan


def write_rows(path: Path, header, rows):
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(path)


def run(out: Path, ctx: int):
    out.mkdir(parents=True, exist_ok=True)
    tech, topo = TechParams.default(), FlashTopology.default()

    for axis in ("n_row", "n_col", "n_stack"):
        path = out / f"sweep_{axis}.csv"
        path.write_text(sweep_csv(run_sweep(SweepSpec(axis), tech)))
        print(path)

    write_rows(out / "bus.csv", ["m", "n", "shared_us", "htree_a_us", "htree_b_us", "reduction", "a_over_b"],
               [[r["m"], r["n"], f"{r['shared_a'] * 1e6:.4f}", f"{r['htree_a'] * 1e6:.4f}",
                 f"{r['htree_b'] * 1e6:.4f}", f"{r['reduction']:.4f}", f"{r['a_over_b']:.4f}"]
                for r in bus_comparison(tech, topo)])

    tiling_topo = FlashTopology(slc_dies_per_way=0, qlc_dies_per_way=8)
    rows = []
    for pattern in ("N/C/C/R", "C/C/N/R", "C/C/R/R"):
        plan, c = best_plan(7168, 7168, tiling_topo, SIZE_A, tech, pattern=pattern)
        rows.append([pattern, str(plan)] + [f"{v * 1e6:.4f}" for v in c.as_dict().values()])
    write_rows(out / "tiling.csv", ["pattern", "plan", "inbound_us", "pim_us", "outbound_us", "total_us"], rows)

    rows = []
    for name in ("opt-6.7b", "opt-13b", "opt-30b"):
        m = get_model(name)
        rep = estimate_tpot(m, topo, SIZE_A, tech, ctx)
        base = estimate_baseline_tpot(m, topo, tech, ctx)
        rows.append([name, f"{rep.total_tpot * 1e3:.4f}"]
                    + [f"{v * 1e3:.4f}" for v in rep.breakdown().values()]
                    + [f"{base.total_tpot:.4f}", f"{base.total_tpot / rep.total_tpot:.1f}"])
    write_rows(out / "tpot.csv", ["model", "tpot_ms", "smvm_ms", "dmvm_ms", "layernorm_ms", "softmax_ms",
                                  "activation_ms", "residual_ms", "baseline_s", "speedup"], rows)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--ctx", type=int, default=1024)
    a = ap.parse_args()
    run(a.out, a.ctx)
