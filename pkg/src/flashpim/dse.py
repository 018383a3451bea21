"""Plane-size sweeps, plane selection, bus comparison and area accounting."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field, replace

from .config import SIZE_A, SIZE_B, FlashTopology, PlaneConfig, TechParams
from .interconnect import compare_topologies
from .tech_model import (cell_density, latency_components, pim_energy, pim_latency,
                         plane_area, stacked_latency)

AXES = ("n_row", "n_col", "n_stack")

# Default sweep grids.  n_row starts at 128 because every dot product drives
# 128 BLSs; a smaller plane cannot host it.
GRIDS = {
    "n_row": (128, 256, 512, 1024, 2048),
    "n_col": (512, 1024, 2048, 4096, 8192),
    "n_stack": (32, 64, 128, 256),
}
SWEEP_BASE = PlaneConfig(256, 1024, 128)

# Peripheral share of one plane (fractions of plane area).
AREA_RATIOS = {"hv_peri": 0.2162, "lv_peri": 0.2316, "rpu_htree": 0.0039}
DIE_BUDGET_MM2 = (5.6, 7.5)

BUS_SHAPES = ((1024, 1024), (1024, 4096), (4096, 1024))


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple = ()
    fixed: PlaneConfig = SWEEP_BASE

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        vals = tuple(self.values) or GRIDS[self.axis]
        if not vals:
            raise ValueError("sweep values must be non-empty")
        if list(vals) != sorted(vals) or len(set(vals)) != len(vals):
            raise ValueError("sweep values must be strictly ascending")
        object.__setattr__(self, "values", vals)

    def configs(self) -> list[PlaneConfig]:
        return [replace(self.fixed, **{self.axis: v}) for v in self.values]


@dataclass(frozen=True)
class SweepRow:
    config: PlaneConfig
    latency: dict       # stacked PIM latency components, s
    pim_latency: float
    page_read_latency: float
    energy: dict        # PIM energy components, J
    density: float      # Gib/mm^2


def evaluate(cfg: PlaneConfig, tech: TechParams, b_input: int = 8) -> SweepRow:
    lat = pim_latency(cfg, tech, b_input)
    en = pim_energy(cfg, tech, b_input, n_row_active=min(128, cfg.n_row))
    read = latency_components(cfg, tech).total
    return SweepRow(cfg, stacked_latency(lat, b_input), lat.total, read,
                    {k: v for k, v in en.as_dict().items() if k != "total"} | {"total": en.total},
                    cell_density(cfg, tech))


def run_sweep(spec: SweepSpec, tech: TechParams, b_input: int = 8) -> list[SweepRow]:
    return [evaluate(c, tech, b_input) for c in spec.configs()]


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    lat_keys = list(rows[0].latency) if rows else []
    en_keys = list(rows[0].energy) if rows else []
    w.writerow(["n_row", "n_col", "n_stack"]
               + [f"{k}_us" for k in lat_keys] + ["pim_latency_us", "page_read_us"]
               + [f"{k}_nj" for k in en_keys] + ["density_gib_per_mm2"])
    for r in rows:
        c = r.config
        w.writerow([c.n_row, c.n_col, c.n_stack]
                   + [f"{r.latency[k] * 1e6:.6f}" for k in lat_keys]
                   + [f"{r.pim_latency * 1e6:.6f}", f"{r.page_read_latency * 1e6:.6f}"]
                   + [f"{r.energy[k] * 1e9:.6f}" for k in en_keys]
                   + [f"{r.density:.6f}"])
    return buf.getvalue()


def grid_candidates(grids: dict | None = None) -> list[PlaneConfig]:
    g = {**GRIDS, **(grids or {})}
    return [PlaneConfig(r, c, s) for r, c, s in itertools.product(g["n_row"], g["n_col"], g["n_stack"])]


def select_plane(candidates, latency_budget: float, tech: TechParams,
                 b_input: int = 8) -> PlaneConfig | None:
    """Highest-density candidate within the PIM latency budget; ties go to the
    lower latency, then to the smaller label.  ``None`` if nothing fits."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates given")
    scored = []
    for c in candidates:
        t = pim_latency(c, tech, b_input).total
        if t <= latency_budget:
            scored.append((-cell_density(c, tech), t, c.n_row, c.n_col, c.n_stack, c))
    if not scored:
        return None
    return min(scored, key=lambda s: s[:5])[-1]


@dataclass(frozen=True)
class AreaReport:
    plane_area: float         # mm^2
    n_planes: int
    total_pim_area: float     # mm^2
    budget_low: float
    budget_high: float
    ratios: dict = field(default_factory=lambda: dict(AREA_RATIOS))

    @property
    def peripheral_ratio(self) -> float:
        return sum(self.ratios.values())

    @property
    def within_budget(self) -> bool:
        return self.total_pim_area <= self.budget_high

    def as_dict(self) -> dict:
        return {"plane_area_mm2": self.plane_area, "n_planes": self.n_planes,
                "total_pim_area_mm2": self.total_pim_area,
                "budget_low_mm2": self.budget_low, "budget_high_mm2": self.budget_high,
                "ratios": dict(self.ratios), "peripheral_ratio": self.peripheral_ratio,
                "within_budget": self.within_budget}


def area_report(cfg: PlaneConfig, topo: FlashTopology, tech: TechParams) -> AreaReport:
    a = plane_area(cfg, tech)
    return AreaReport(a, topo.n_plane, a * topo.n_plane, *DIE_BUDGET_MM2)


def bus_comparison(tech: TechParams, topo: FlashTopology, shapes=BUS_SHAPES,
                   size_a: PlaneConfig = SIZE_A, size_b: PlaneConfig = SIZE_B,
                   planes_a: int = 64, planes_b: int = 128) -> list[dict]:
    """Shared bus vs H-tree on Size A, and Size A vs Size B under the H-tree.

    Size B gets twice the planes so both run the same number of active BLs.
    """
    rows = []
    for m, n in shapes:
        a = compare_topologies(m, n, planes_a, size_a, tech, topo)
        b = compare_topologies(m, n, planes_b, size_b, tech, topo)
        rows.append({"m": m, "n": n, "shared_a": a["shared"], "htree_a": a["htree"],
                     "htree_b": b["htree"], "reduction": a["reduction"],
                     "a_over_b": a["htree"] / b["htree"] - 1.0})
    return rows
