"""Intra-die data movement: shared bus vs H-tree with reconfigurable processing units.

Two levels of model live here:

* the primitives :func:`simulate_shared_bus` and :func:`simulate_htree`, where
  ``n_planes`` planes each produce one output vector after ``per_plane_pim``;
* :func:`simulate_die_mvm`, which runs a whole ``(1, M) x (M, N)`` product on
  one die: input slices are streamed in, planes run PIM as soon as their slice
  lands, and outputs are drained through the bus or reduced in the tree.

Shared-bus planes are staggered by one output-transfer slot so that their
outputs serialise on the bus without waiting.  In the H-tree every leaf has
its own link; RPUs in ALU mode add the two child vectors element-wise and in
stream mode forward them one after the other.  By default an RPU latches
whole child vectors before sending its result on (store-and-forward); the
cut-through variant forwards elements as they arrive, one register delay per
level.  All links run at ``bus_bytes_per_sec``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import FlashTopology, PlaneConfig, TechParams
from .tech_model import pim_latency

UNIT_ROWS = 128


@dataclass(frozen=True)
class TransferEvent:
    event: str
    plane: int
    start: float
    end: float
    nbytes: int = 0


class Trace(list):
    """Ordered list of :class:`TransferEvent` with CSV export."""

    def add(self, event: str, plane: int, start: float, end: float, nbytes: int = 0):
        self.append(TransferEvent(event, plane, start, end, nbytes))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["event", "plane", "start_s", "end_s", "bytes"])
        for e in self:
            w.writerow([e.event, e.plane, repr(e.start), repr(e.end), e.nbytes])
        return buf.getvalue()


def transfer_time(nbytes: float, topo: FlashTopology) -> float:
    return nbytes / topo.bus_bytes_per_sec


def hop_latency(topo: FlashTopology) -> float:
    return topo.rpu_hop_cycles / topo.rpu_clock_hz


def rpu_time(nbytes: float, topo: FlashTopology) -> float:
    """Time for an RPU in ALU mode to consume one ``nbytes`` operand stream.

    The RPU is pipelined with its output link, so only its throughput
    (``rpu_lanes`` elements per cycle) matters here.
    """
    return nbytes / topo.psum_bytes / (topo.rpu_lanes * topo.rpu_clock_hz)


# ---------------------------------------------------------------- RPU -------

@dataclass(frozen=True)
class RpuOp:
    mode: str = "alu"
    operand_width: int = 16
    vector_len: int = 0

    def __post_init__(self):
        if self.mode not in ("alu", "stream"):
            raise ValueError(f"RPU mode must be 'alu' or 'stream', got {self.mode!r}")


class RpuOverflowError(OverflowError):
    pass


ACC_MIN, ACC_MAX = -(2**31), 2**31 - 1


def _check_acc(v: np.ndarray):
    if v.size and (v.min() < ACC_MIN or v.max() > ACC_MAX):
        raise RpuOverflowError("RPU 32-bit accumulator saturated")


def rpu_apply(op: RpuOp, a, b=None) -> np.ndarray:
    """ALU mode: element-wise 32-bit add.  Stream mode: pass ``a`` through."""
    a = np.asarray(a, dtype=np.int64)
    if op.mode == "stream":
        return a.copy()
    if b is None:
        raise ValueError("ALU mode needs two operands")
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError(f"operand shapes differ: {a.shape} vs {b.shape}")
    _check_acc(a)
    _check_acc(b)
    out = a + b
    _check_acc(out)
    return out


def rpu_mac(a, b, acc=None, operand_bits: int = 16) -> np.ndarray:
    """Element-wise INT16 x INT16 multiply accumulated in 32 bits."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo, hi = -(2 ** (operand_bits - 1)), 2 ** (operand_bits - 1) - 1
    for v in (a, b):
        if v.size and (v.min() < lo or v.max() > hi):
            raise ValueError(f"operands exceed INT{operand_bits}")
    prod = a * b
    out = prod if acc is None else np.asarray(acc, dtype=np.int64) + prod
    _check_acc(out)
    return out


def rpu_dot(a, b, operand_bits: int = 16) -> int:
    """Sequential INT32 accumulation of element-wise INT16 products."""
    acc = np.zeros(1, dtype=np.int64)
    for p in rpu_mac(a, b, operand_bits=operand_bits):
        acc += p
        _check_acc(acc)
    return int(acc[0])


# ------------------------------------------------------- tree streams -------

@dataclass
class _Stream:
    """Data flowing up one tree link: vectors keyed by output group."""

    groups: dict
    start: float
    end: float

    @property
    def nbytes(self) -> int:
        return sum(self.groups.values())


def _merge(a: _Stream, b: _Stream, topo: FlashTopology) -> _Stream:
    hop = hop_latency(topo)
    cut = topo.htree_flow == "cut_through"
    if set(a.groups) & set(b.groups):
        # ALU mode: element-wise accumulate of the two child vectors
        groups = {**a.groups, **b.groups}
        nbytes = sum(groups.values())
        rate_t = max(transfer_time(nbytes, topo), rpu_time(nbytes, topo))
        if cut:
            start = max(a.start, b.start) + hop
            end = max(max(a.end, b.end) + hop, start + rate_t)
        else:
            # the output register fills while the vector streams out
            start = max(a.end, b.end)
            end = start + rate_t
        return _Stream(groups, start, end)
    # stream mode: forward one child vector after the other
    first, second = (a, b) if (a.start, a.end) <= (b.start, b.end) else (b, a)
    if cut:
        start = first.start + hop
        t1 = max(first.end + hop, start + transfer_time(first.nbytes, topo))
        end = max(second.end + hop, t1 + transfer_time(second.nbytes, topo))
    else:
        start = first.end
        t1 = start + transfer_time(first.nbytes, topo)
        end = max(t1, second.end) + transfer_time(second.nbytes, topo)
    return _Stream({**first.groups, **second.groups}, start, end)


def _forward(s: _Stream, topo: FlashTopology) -> _Stream:
    """Pass one stream through a node whose other child is an empty pad leaf."""
    hop = hop_latency(topo)
    if topo.htree_flow == "cut_through":
        return _Stream(dict(s.groups), s.start + hop, s.end + hop)
    return _Stream(dict(s.groups), s.end, s.end + transfer_time(s.nbytes, topo))


def _reduce_tree(leaves: Sequence[_Stream | None], topo: FlashTopology,
                 trace: Trace | None = None, label: str = "htree") -> _Stream:
    """Fold padded leaves pairwise up to the root; returns the root stream."""
    n = 1 << max(0, math.ceil(math.log2(max(1, len(leaves)))))
    level = list(leaves) + [None] * (n - len(leaves))
    depth = 0
    while len(level) > 1:
        depth += 1
        nxt = []
        for i in range(0, len(level), 2):
            a, b = level[i], level[i + 1]
            if a is None or b is None:
                s = a or b
                if s is not None:
                    s = _forward(s, topo)
            else:
                s = _merge(a, b, topo)
            if s is not None and trace is not None:
                trace.add(f"{label}_L{depth}", i * (1 << (depth - 1)), s.start, s.end, s.nbytes)
            nxt.append(s)
        level = nxt
    return level[0]


# ----------------------------------------------------------- primitives ----

def simulate_shared_bus(n_planes: int, per_plane_pim: float, out_bytes_per_plane: int,
                        topo: FlashTopology, trace: Trace | None = None) -> float:
    """Staggered PIM whose outputs serialise on one bus; returns completion time."""
    if n_planes < 1:
        raise ValueError("n_planes must be >= 1")
    t_io = transfer_time(out_bytes_per_plane, topo)
    bus_free = 0.0
    for i in range(n_planes):
        start = i * t_io
        done = start + per_plane_pim
        x0 = max(done, bus_free)
        bus_free = x0 + t_io
        if trace is not None:
            trace.add("pim", i, start, done)
            trace.add("bus_out", i, x0, bus_free, out_bytes_per_plane)
    return bus_free


def simulate_htree(n_planes: int, per_plane_pim: float, out_bytes_per_plane: int,
                   topo: FlashTopology, reduce: bool = True,
                   trace: Trace | None = None) -> float:
    """All planes run PIM together; the tree reduces (ALU) or concatenates (stream)."""
    if n_planes < 1:
        raise ValueError("n_planes must be >= 1")
    t_io = transfer_time(out_bytes_per_plane, topo)
    leaves = []
    for i in range(n_planes):
        if trace is not None:
            trace.add("pim", i, 0.0, per_plane_pim)
        g = 0 if reduce else i
        leaves.append(_Stream({g: out_bytes_per_plane}, per_plane_pim, per_plane_pim + t_io))
    if n_planes == 1:
        if trace is not None:
            trace.add("bus_out", 0, per_plane_pim, per_plane_pim + t_io, out_bytes_per_plane)
        return per_plane_pim + t_io
    root = _reduce_tree(leaves, topo, trace)
    return root.end


def bytes_leaving_die(n_planes: int, out_bytes_per_plane: int, reduce: bool) -> int:
    return out_bytes_per_plane if reduce else n_planes * out_bytes_per_plane


# ------------------------------------------------------ die-level MVM -------

@dataclass
class DieResult:
    """Timing of one die's share of an MVM.  ``outputs`` lists the streams that
    leave the die as (start, end, nbytes)."""

    inbound_end: float
    last_pim_end: float
    total: float
    n_tiles: int
    n_waves: int
    bytes_out: int
    outputs: list = field(default_factory=list)
    trace: Trace | None = None

    @property
    def inbound(self) -> float:
        return self.inbound_end

    @property
    def pim(self) -> float:
        return max(0.0, self.last_pim_end - self.inbound_end)

    @property
    def outbound(self) -> float:
        return self.total - max(self.inbound_end, self.last_pim_end)


def unit_cols(cfg: PlaneConfig, mux_ratio: int = 4) -> int:
    return cfg.n_col // mux_ratio


def die_tiles(m: int, n: int, cfg: PlaneConfig) -> tuple[int, int]:
    """(row tiles, column tiles) of an ``m x n`` weight matrix."""
    return math.ceil(m / UNIT_ROWS), math.ceil(n / unit_cols(cfg))


def simulate_die_mvm(m: int, n: int, n_planes: int, cfg: PlaneConfig, tech: TechParams,
                     topo: FlashTopology, b_input: int = 8, t_pim: float | None = None,
                     inbound_offset: float = 0.0, slice_times: Sequence[float] | None = None,
                     trace: Trace | None = None) -> DieResult:
    """Run ``(1, m) x (m, n)`` on ``n_planes`` planes of one die.

    Tiles are placed column-group-major (all row tiles of one output group on
    neighbouring leaves) and issued in waves of ``n_planes``.  Input slices of
    ``UNIT_ROWS`` bytes stream through the die port starting at
    ``inbound_offset``, unless ``slice_times`` gives their arrival times
    directly (used when the die sits behind a channel bus).
    """
    if m < 1 or n < 1 or n_planes < 1:
        raise ValueError("m, n and n_planes must be >= 1")
    t_pim = pim_latency(cfg, tech, b_input).total if t_pim is None else t_pim
    rows, cols = die_tiles(m, n, cfg)
    uc = unit_cols(cfg)
    # the last column group of a ragged matrix only ships its valid columns
    group_bytes = [min(uc, n - g * uc) * topo.psum_bytes for g in range(cols)]
    htree = topo.bus_topology == "htree"
    depth = math.ceil(math.log2(n_planes)) if n_planes > 1 else 0
    down = depth * hop_latency(topo) if htree else 0.0

    if slice_times is None:
        arrival, t = [], inbound_offset
        for j in range(rows):
            nb = min(UNIT_ROWS, m - j * UNIT_ROWS)
            t0, t = t, t + transfer_time(nb, topo)
            arrival.append(t + down)
            if trace is not None:
                trace.add("bus_in", -1, t0, t, nb)
        inbound_end = t
    else:
        arrival = [s + down for s in slice_times]
        inbound_end = max(slice_times)

    tiles = [(g, j) for g in range(cols) for j in range(rows)]
    waves = [tiles[i:i + n_planes] for i in range(0, len(tiles), n_planes)]
    plane_free = [0.0] * n_planes
    last_pim_end = 0.0
    outputs = []

    if not htree:
        bus_free = inbound_end  # half-duplex: the same bus carried the inputs
        prev_start = -math.inf
        issue = sorted(
            ((w, p, tile) for w, wave in enumerate(waves) for p, tile in enumerate(wave)),
            key=lambda e: (arrival[e[2][1]], e[0], e[1]))
        for w, p, (g, j) in issue:
            out_bytes = group_bytes[g]
            t_io = transfer_time(out_bytes, topo)
            start = max(arrival[j], plane_free[p], prev_start + t_io)
            prev_start = start
            done = start + t_pim
            x0 = max(done, bus_free)
            bus_free = x0 + t_io
            plane_free[p] = bus_free
            last_pim_end = max(last_pim_end, done)
            outputs.append((x0, bus_free, out_bytes))
            if trace is not None:
                trace.add("pim", p, start, done)
                trace.add("bus_out", p, x0, bus_free, out_bytes)
        total = bus_free
    else:
        root_free = -math.inf
        total = 0.0
        for wave in waves:
            leaves = []
            for p, (g, j) in enumerate(wave):
                start = max(arrival[j], plane_free[p])
                done = start + t_pim
                t_io = transfer_time(group_bytes[g], topo)
                plane_free[p] = done + t_io
                last_pim_end = max(last_pim_end, done)
                leaves.append(_Stream({g: group_bytes[g]}, done, done + t_io))
                if trace is not None:
                    trace.add("pim", p, start, done)
            root = _reduce_tree(leaves, topo, trace) if len(leaves) > 1 else leaves[0]
            dur = transfer_time(root.nbytes, topo)
            end = max(root.end, root_free + dur)
            outputs.append((end - dur, end, root.nbytes))
            root_free = end
            total = end
            if trace is not None:
                trace.add("die_out", -1, end - dur, end, root.nbytes)
    return DieResult(inbound_end=inbound_end, last_pim_end=last_pim_end, total=total,
                     n_tiles=len(tiles), n_waves=len(waves),
                     bytes_out=sum(o[2] for o in outputs), outputs=outputs, trace=trace)


def compare_topologies(m: int, n: int, n_planes: int, cfg: PlaneConfig, tech: TechParams,
                       topo: FlashTopology, b_input: int = 8) -> dict[str, float]:
    """Shared-bus and H-tree completion times for one die-level MVM."""
    from dataclasses import replace
    shared = simulate_die_mvm(m, n, n_planes, cfg, tech, replace(topo, bus_topology="shared"), b_input)
    tree = simulate_die_mvm(m, n, n_planes, cfg, tech, replace(topo, bus_topology="htree"), b_input)
    return {"shared": shared.total, "htree": tree.total,
            "reduction": 1.0 - tree.total / shared.total}
