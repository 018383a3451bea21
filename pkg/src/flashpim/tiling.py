"""sMVM tiling plans over the channel/way/die/plane hierarchy, and dMVM mappings.

A weight matrix ``(M, N)`` is cut into unit tiles of ``UNIT_ROWS`` rows by
``n_col / 4`` columns.  Every hierarchy level picks one method: ``N`` (none,
count 1), ``R`` (row-wise: scatter input slices, accumulate outputs) or ``C``
(column-wise: broadcast the input, concatenate outputs), and a count.  Counts
of R levels multiply to the row-tile count, counts of C levels to the
column-tile count.

Costing simulates one representative channel (channels are symmetric):
input slices stream over the channel bus in order, each die runs its share
with :func:`interconnect.simulate_die_mvm`, and die outputs queue on the
channel on their way back to the controller, which adds row partials.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .config import FlashTopology, PlaneConfig, TechParams
from .interconnect import (UNIT_ROWS, hop_latency, rpu_apply, rpu_mac, RpuOp,
                           simulate_die_mvm, transfer_time, unit_cols)
from .tech_model import page_read_latency, pim_latency

LEVELS = ("channel", "way", "die", "plane")
METHODS = ("N", "R", "C")


class InfeasiblePlanError(ValueError):
    """No tiling plan fits the matrix onto the available resources."""


class CapacityError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TilingPlan:
    methods: tuple   # one of N/R/C per level
    counts: tuple
    unit_rows: int = UNIT_ROWS
    unit_cols: int = 512

    def __post_init__(self):
        if len(self.methods) != 4 or len(self.counts) != 4:
            raise ValueError("a plan has exactly four levels")
        for m, c in zip(self.methods, self.counts):
            if m not in METHODS:
                raise ValueError(f"unknown tiling method {m!r}")
            if c < 1 or (m == "N" and c != 1):
                raise ValueError(f"bad count {c} for method {m}")

    @property
    def row_tiles(self) -> int:
        return math.prod(c for m, c in zip(self.methods, self.counts) if m == "R")

    @property
    def col_tiles(self) -> int:
        return math.prod(c for m, c in zip(self.methods, self.counts) if m == "C")

    def count(self, level: str, method: str | None = None) -> int:
        i = LEVELS.index(level)
        if method is not None and self.methods[i] != method:
            return 1
        return self.counts[i]

    @property
    def pattern(self) -> str:
        return "/".join(self.methods)

    def __str__(self) -> str:
        return "/".join(f"{m}({c})" for m, c in zip(self.methods, self.counts))

    @classmethod
    def parse(cls, text: str, unit_cols: int = 512) -> "TilingPlan":
        """Parse ``"C(7)/C(2)/N(1)/R(56)"``; ``N`` may omit its count."""
        parts = text.strip().split("/")
        if len(parts) != 4:
            raise ValueError(f"expected 4 levels in {text!r}")
        methods, counts = [], []
        for p in parts:
            p = p.strip().upper()
            m = p[0]
            c = int(p[2:-1]) if "(" in p else 1
            methods.append(m)
            counts.append(c)
        return cls(tuple(methods), tuple(counts), UNIT_ROWS, unit_cols)

    def assignment(self) -> Iterator[tuple[tuple[int, int, int, int], tuple[int, int]]]:
        """Yield ((ch, way, die, plane), (row_tile, col_tile)) for every used plane.

        Tile indices are mixed-radix over the R (or C) levels, channel most
        significant.
        """
        for coord in itertools.product(*(range(c) for c in self.counts)):
            r = c = 0
            for m, n, k in zip(self.methods, self.counts, coord):
                if m == "R":
                    r = r * n + k
                elif m == "C":
                    c = c * n + k
            yield coord, (r, c)


@dataclass(frozen=True)
class SmvmCost:
    inbound_io: float
    pim: float
    outbound_io: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"inbound_io": self.inbound_io, "pim": self.pim,
                "outbound_io": self.outbound_io, "total": self.total}


def level_caps(topo: FlashTopology) -> tuple[int, int, int, int]:
    """Resources per level; only QLC dies hold weights."""
    return (topo.n_channel, topo.n_way, topo.qlc_dies_per_way, topo.n_plane)


def tile_counts(m: int, n: int, cfg: PlaneConfig) -> tuple[int, int]:
    return math.ceil(m / UNIT_ROWS), math.ceil(n / unit_cols(cfg))


def _factorizations(n: int, caps: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Ordered factorisations of ``n`` into ``len(caps)`` factors in [2, cap]."""
    if not caps:
        if n == 1:
            yield ()
        return
    for f in range(2, min(n, caps[0]) + 1):
        if n % f == 0:
            for rest in _factorizations(n // f, caps[1:]):
                yield (f,) + rest


def enumerate_plans(m: int, n: int, topo: FlashTopology, cfg: PlaneConfig) -> list[TilingPlan]:
    """Every valid plan, sorted by text encoding.  Raises if none exists."""
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be >= 1")
    r, c = tile_counts(m, n, cfg)
    caps = level_caps(topo)
    uc = unit_cols(cfg)
    plans = []
    for methods in itertools.product(METHODS, repeat=4):
        r_idx = [i for i, mm in enumerate(methods) if mm == "R"]
        c_idx = [i for i, mm in enumerate(methods) if mm == "C"]
        for rf in _factorizations(r, [caps[i] for i in r_idx]):
            for cf in _factorizations(c, [caps[i] for i in c_idx]):
                counts = [1] * 4
                for i, f in zip(r_idx, rf):
                    counts[i] = f
                for i, f in zip(c_idx, cf):
                    counts[i] = f
                plans.append(TilingPlan(methods, tuple(counts), UNIT_ROWS, uc))
    if not plans:
        raise InfeasiblePlanError(
            f"({m} x {n}) needs {r} x {c} tiles, which no plan fits on {caps}")
    plans.sort(key=str)
    return plans


def coverage_map(plan: TilingPlan) -> np.ndarray:
    """How many planes hold each (row_tile, col_tile); all ones for a valid plan."""
    cov = np.zeros((plan.row_tiles, plan.col_tiles), dtype=np.int64)
    for _, (r, c) in plan.assignment():
        cov[r, c] += 1
    return cov


# ------------------------------------------------------------- costing -----

@lru_cache(maxsize=4096)
def _die_sim(m: int, n: int, n_planes: int, cfg: PlaneConfig, tech: TechParams,
             topo: FlashTopology, b_input: int, slice_times: tuple):
    return simulate_die_mvm(m, n, n_planes, cfg, tech, topo, b_input,
                            slice_times=slice_times)


def cost_smvm(plan: TilingPlan, m: int, n: int, topo: FlashTopology, cfg: PlaneConfig,
              tech: TechParams, b_input: int = 8) -> SmvmCost:
    """Three-stage cost of running ``plan`` for a ``(1, m) x (m, n)`` product.

    ``inbound_io`` is the channel time to deliver the input slices,
    ``pim`` the PIM tail after the last slice lands and ``outbound_io`` the
    time from the last PIM completion to the last byte reaching the
    controller, so the three add up to ``total``.
    """
    r, c = tile_counts(m, n, cfg)
    if (plan.row_tiles, plan.col_tiles) != (r, c):
        raise ValueError(f"plan {plan} covers {plan.row_tiles}x{plan.col_tiles} tiles, need {r}x{c}")
    uc = unit_cols(cfg)
    bw = topo.bus_bytes_per_sec
    r_ch = plan.count("channel", "R")
    c_ch = plan.count("channel", "C")

    # rows/cols handled by channel 0 (the first tiles; all channels are alike
    # except for a possibly shorter last tile, which only makes them faster)
    rows_ch = r // r_ch
    cols_ch = c // c_ch

    # input slices stream through the channel in order; broadcast = one copy
    slice_end, t = [], 0.0
    for j in range(rows_ch):
        t += transfer_time(min(UNIT_ROWS, m - j * UNIT_ROWS), topo)
        slice_end.append(t)
    inbound_end = t

    r_way, c_way = plan.count("way", "R"), plan.count("way", "C")
    r_die, c_die = plan.count("die", "R"), plan.count("die", "C")
    r_pl, c_pl = plan.count("plane", "R"), plan.count("plane", "C")
    n_planes = plan.counts[3]
    outs = []
    last_pim_end = 0.0
    for iw in range(plan.counts[1]):
        for idie in range(plan.counts[2]):
            wr = iw if plan.methods[1] == "R" else 0
            dr = idie if plan.methods[2] == "R" else 0
            first = (wr * r_die + dr) * r_pl
            times = tuple(slice_end[first:first + r_pl])
            m_die = sum(min(UNIT_ROWS, m - j * UNIT_ROWS) for j in range(first, first + r_pl))
            n_die = min(c_pl * uc, n)
            res = _die_sim(m_die, n_die, n_planes, cfg, tech, topo, b_input, times)
            last_pim_end = max(last_pim_end, res.last_pim_end)
            outs.extend(res.outputs)

    # die outputs share the channel back to the controller (FIFO by readiness)
    free = 0.0
    for start, end, nbytes in sorted(outs):
        t0 = max(free, start)
        free = max(t0 + nbytes / bw, end)
    total = free
    pim_tail = max(0.0, last_pim_end - inbound_end)
    outbound = total - max(inbound_end, last_pim_end)
    return SmvmCost(inbound_end, pim_tail, outbound, total)


def _plan_key(item):
    plan, cost = item
    return (cost.total, str(plan))


def best_plan(m: int, n: int, topo: FlashTopology, cfg: PlaneConfig, tech: TechParams,
              b_input: int = 8, pattern: str | None = None) -> tuple[TilingPlan, SmvmCost]:
    """Minimum-total plan; ties broken by the plan's text encoding.

    ``pattern`` (e.g. ``"C/C/R/R"``) restricts the search to one method
    combination.
    """
    plans = enumerate_plans(m, n, topo, cfg)
    if pattern is not None:
        plans = [p for p in plans if p.pattern == pattern.upper()]
        if not plans:
            raise InfeasiblePlanError(f"no feasible plan with pattern {pattern}")
    scored = [(p, cost_smvm(p, m, n, topo, cfg, tech, b_input)) for p in plans]
    return min(scored, key=_plan_key)


# ----------------------------------------------- naive single-plane sMVM ---

def cost_smvm_serial(m: int, n: int, topo: FlashTopology, cfg: PlaneConfig,
                     tech: TechParams, b_input: int = 8) -> SmvmCost:
    """Whole matrix stored in one plane, tiles executed back to back on a
    shared bus; the unparallelised mapping of a conventional device."""
    shared = replace(topo, bus_topology="shared")
    res = simulate_die_mvm(m, n, 1, cfg, tech, shared, b_input)
    return SmvmCost(res.inbound_end, max(0.0, res.last_pim_end - res.inbound_end),
                    res.total - max(res.inbound_end, res.last_pim_end), res.total)


# ------------------------------------------------------------- dMVM --------

@dataclass(frozen=True)
class DmvmMapping:
    kind: str
    heads_per_die: int
    seq_len: int
    head_dim: int
    plane_pairs: int

    @property
    def rows_per_pair(self) -> int:
        return math.ceil(self.seq_len * self.heads_per_die / self.plane_pairs)


SCORE_BYTES = 4  # QK^T scores leave at 32-bit accumulator width
PARTIAL_BYTES = 4


def slc_plane(cfg: PlaneConfig) -> PlaneConfig:
    return replace(cfg, bits_per_cell=1)


def heads_per_die(n_heads: int, topo: FlashTopology) -> int:
    dies = topo.total_slc_dies
    if dies < 1:
        raise CapacityError("topology has no SLC dies for the KV cache")
    return max(1, math.ceil(n_heads / dies))


def _check_kv_capacity(seq_len: int, d_h: int, hpd: int, cfg: PlaneConfig,
                       topo: FlashTopology, n_blocks: int):
    need = 2 * n_blocks * seq_len * d_h * hpd  # K and V, one byte per element
    have = topo.n_plane * slc_plane(cfg).capacity_bits // 8
    if need > have:
        raise CapacityError(f"KV cache of {need} B per die exceeds SLC die capacity {have} B")


def _dmvm_common(kind, seq_len, d_h, topo, cfg, tech, n_heads, n_blocks):
    if seq_len < 1 or d_h < 1:
        raise ValueError("seq_len and d_h must be >= 1")
    hpd = heads_per_die(n_heads, topo)
    _check_kv_capacity(seq_len, d_h, hpd, cfg, topo, n_blocks)
    mp = DmvmMapping(kind, hpd, seq_len, d_h, topo.n_plane // 2)
    dies_used = math.ceil(n_heads / hpd)
    heads_per_channel = math.ceil(dies_used / topo.n_channel) * hpd
    page_bytes = slc_plane(cfg).n_col // 8
    rows_per_page = max(1, page_bytes // d_h)
    reads = math.ceil(mp.rows_per_pair / rows_per_page)
    t_read = reads * page_read_latency(slc_plane(cfg), tech)
    t_rpu = mp.rows_per_pair * math.ceil(d_h / topo.rpu_lanes) / topo.rpu_clock_hz
    depth = math.ceil(math.log2(topo.n_plane)) if topo.n_plane > 1 else 0
    return mp, heads_per_channel, t_read, t_rpu, depth


def map_qkt(seq_len: int, d_h: int, topo: FlashTopology, cfg: PlaneConfig, tech: TechParams,
            n_heads: int = 1, n_blocks: int = 1) -> tuple[DmvmMapping, float]:
    """Scores ``q K^T`` for every head: q is broadcast to the plane pairs that
    hold rows of K, each pair's RPU forms dot products, and the scores are
    concatenated up the H-tree and out over the channel."""
    mp, hpc, t_read, t_rpu, depth = _dmvm_common("qkt", seq_len, d_h, topo, cfg, tech,
                                                 n_heads, n_blocks)
    t_in = transfer_time(hpc * d_h, topo)
    t_out = transfer_time(hpc * seq_len * SCORE_BYTES, topo)
    return mp, t_in + t_read + t_rpu + depth * hop_latency(topo) + t_out


def map_sv(seq_len: int, d_h: int, topo: FlashTopology, cfg: PlaneConfig, tech: TechParams,
           n_heads: int = 1, n_blocks: int = 1) -> tuple[DmvmMapping, float]:
    """``S V`` as a row-wise product: each S element meets one V row in a plane
    pair; the scaled rows are summed by the H-tree RPUs."""
    mp, hpc, t_read, t_rpu, depth = _dmvm_common("sv", seq_len, d_h, topo, cfg, tech,
                                                 n_heads, n_blocks)
    t_in = transfer_time(hpc * seq_len, topo)
    vec = d_h * PARTIAL_BYTES
    hop = hop_latency(topo)
    if topo.htree_flow == "store_forward":
        t_tree = (depth + 1) * transfer_time(vec, topo)
    else:
        t_tree = transfer_time(vec, topo) + depth * hop
    # per-head vectors of one die leave through the die port after the tree
    t_out = transfer_time(hpc * vec, topo)
    return mp, t_in + t_read + t_rpu + t_tree + t_out


def qkt_functional(q, k) -> np.ndarray:
    """Scores of one head as the RPUs compute them (INT16 operands, INT32 sums)."""
    q = np.asarray(q, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    if k.ndim != 2 or q.shape != (k.shape[1],):
        raise ValueError("q must be (d_h,) and K (L, d_h)")
    out = np.empty(k.shape[0], dtype=np.int64)
    for l, row in enumerate(k):   # one VVM per plane pair
        out[l] = int(rpu_mac(q, row).sum())
    return out


def sv_functional(s, v) -> np.ndarray:
    """``s @ V`` via per-pair vector-scalar products reduced pairwise up a tree."""
    s = np.asarray(s, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if v.ndim != 2 or s.shape != (v.shape[0],):
        raise ValueError("s must be (L,) and V (L, d_h)")
    level = [rpu_mac(np.full(v.shape[1], si), row) for si, row in zip(s, v)]
    alu = RpuOp("alu", 16, v.shape[1])
    while len(level) > 1:
        nxt = [rpu_apply(alu, level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(rpu_apply(RpuOp("stream"), level[-1]))
        level = nxt
    return level[0]


# --------------------------------------------- functional tiled sMVM -------

def tile_partials(weights, x, cfg: PlaneConfig, adc=None) -> dict:
    """PIM result of every unit tile, keyed by (row_tile, col_tile)."""
    from .plane_pim import InputVector, pack_weights, pim_dot_product
    w = np.asarray(weights)
    x = np.asarray(x)
    m, n = w.shape
    uc = unit_cols(cfg)
    r, c = tile_counts(m, n, cfg)
    out = {}
    for i in range(r):
        rs = slice(i * UNIT_ROWS, min(m, (i + 1) * UNIT_ROWS))
        xv = InputVector(x[rs])
        for j in range(c):
            cs = slice(j * uc, min(n, (j + 1) * uc))
            out[i, j] = pim_dot_product(pack_weights(w[rs, cs]), xv, adc)
    return out


def compose(plan: TilingPlan, partials: dict, n: int) -> np.ndarray:
    """Accumulate row partials and concatenate column groups per the plan's
    plane assignment."""
    uc = plan.unit_cols
    y = np.zeros(n, dtype=np.int64)
    for _, (r, c) in plan.assignment():
        seg = partials[r, c]
        y[c * uc:c * uc + seg.size] += seg
    return y


def tiled_mvm(weights, x, plan: TilingPlan, cfg: PlaneConfig, adc=None) -> np.ndarray:
    return compose(plan, tile_partials(weights, x, cfg, adc), np.asarray(weights).shape[1])
