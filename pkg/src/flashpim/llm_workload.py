"""Decoder workload graph and end-to-end token-generation estimates.

Static weight products (sMVM) run as in-flash PIM on the QLC dies, the
attention products against the KV cache (dMVM) run on the RPUs of the SLC
dies, and layer norm, softmax, activation and residual adds run on the
controller cores.  Ops execute in series, so TPOT is a plain sum.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import yaml

from .config import (CONVENTIONAL, ConfigError, CoreParams, FlashTopology, PlaneConfig,
                     TechParams)
from .tech_model import pim_energy
from .tiling import (CapacityError, best_plan, cost_smvm_serial, map_qkt, map_sv,
                     tile_counts)

UNITS = {"layernorm": "cores", "softmax": "cores", "activation": "cores",
         "residual": "cores", "smvm": "qlc_pim", "qkt": "slc_rpu", "sv": "slc_rpu"}

SECONDS_PER_YEAR = 365.25 * 24 * 3600
GIB = 2**30


@dataclass(frozen=True)
class LlmModel:
    name: str
    n_blocks: int
    d_model: int
    n_heads: int
    ffn_dim: int = 0
    d_head: int = 0
    vocab_size: int = 50272
    weight_bits: int = 8
    act_bits: int = 8

    def __post_init__(self):
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.d_model)
        if self.d_head == 0:
            object.__setattr__(self, "d_head", self.d_model // max(1, self.n_heads))
        for f in ("n_blocks", "d_model", "n_heads", "ffn_dim", "d_head", "vocab_size",
                  "weight_bits", "act_bits"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be >= 1")
        if self.d_head * self.n_heads != self.d_model:
            raise ConfigError(f"d_head * n_heads ({self.d_head} * {self.n_heads}) != d_model")

    @property
    def weight_bytes(self) -> int:
        """Bytes of the per-block static weights over all blocks."""
        per_block = 4 * self.d_model**2 + 2 * self.d_model * self.ffn_dim
        return self.n_blocks * per_block * self.weight_bits // 8


def load_models(path: str | Path | None = None) -> dict[str, LlmModel]:
    if path is None:
        text = resources.files("flashpim.data").joinpath("models.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out = {}
    for name, dims in (data.get("models") or {}).items():
        try:
            out[name] = LlmModel(name=name, **dims)
        except TypeError as exc:
            raise ConfigError(f"model {name}: {exc}") from exc
    return out


def get_model(name: str, path: str | Path | None = None) -> LlmModel:
    zoo = load_models(path)
    if name not in zoo:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(sorted(zoo))}")
    return zoo[name]


@dataclass(frozen=True)
class OpNode:
    kind: str
    dims: tuple
    name: str = ""
    unit: str = ""

    def __post_init__(self):
        if self.kind not in UNITS:
            raise ValueError(f"unknown op kind {self.kind!r}")
        expected = UNITS[self.kind]
        if self.unit and self.unit != expected:
            raise ValueError(f"{self.kind} runs on {expected}, not {self.unit}")
        object.__setattr__(self, "unit", expected)

    @property
    def n_elems(self) -> int:
        return math.prod(self.dims)


def build_decoder_graph(model: LlmModel, seq_len: int = 1,
                        include_lm_head: bool = False) -> list[OpNode]:
    """Ops of one token step: ``n_blocks`` decoder blocks, optionally the LM head.

    sMVM dims are (rows, cols) of the weight matrix; attention dims are
    ``(seq_len, d_head)``; core ops carry their element count shape.
    """
    d, f, h, dh = model.d_model, model.ffn_dim, model.n_heads, model.d_head
    block = [
        OpNode("layernorm", (1, d), "ln1"),
        OpNode("smvm", (d, d), "q_proj"),
        OpNode("smvm", (d, d), "k_proj"),
        OpNode("smvm", (d, d), "v_proj"),
        OpNode("qkt", (seq_len, dh), "qkt"),
        OpNode("softmax", (h, seq_len), "softmax"),
        OpNode("sv", (seq_len, dh), "sv"),
        OpNode("smvm", (d, d), "out_proj"),
        OpNode("residual", (1, d), "residual1"),
        OpNode("layernorm", (1, d), "ln2"),
        OpNode("smvm", (d, f), "ffn1"),
        OpNode("activation", (1, f), "activation"),
        OpNode("smvm", (f, d), "ffn2"),
        OpNode("residual", (1, d), "residual2"),
    ]
    nodes = block * model.n_blocks
    if include_lm_head:
        nodes = nodes + [OpNode("smvm", (d, model.vocab_size), "lm_head")]
    return nodes


@dataclass
class TpotReport:
    model: str
    seq_len: int
    mode: str
    per_op: list            # (OpNode, latency s) for one block
    per_block: float
    n_blocks: int
    head: float
    total_tpot: float
    energy: float           # PIM array energy of the sMVMs, J
    plans: dict = field(default_factory=dict)

    def breakdown(self) -> dict[str, float]:
        """Total seconds per category (smvm, dmvm, layernorm, softmax, other cores)."""
        out = {"smvm": 0.0, "dmvm": 0.0, "layernorm": 0.0, "softmax": 0.0,
               "activation": 0.0, "residual": 0.0}
        for node, t in self.per_op:
            key = "dmvm" if node.kind in ("qkt", "sv") else node.kind
            out[key] += t * self.n_blocks
        out["smvm"] += self.head
        return out

    def as_dict(self) -> dict:
        return {
            "model": self.model, "seq_len": self.seq_len, "mode": self.mode,
            "total_tpot_s": self.total_tpot, "per_block_s": self.per_block,
            "n_blocks": self.n_blocks, "lm_head_s": self.head, "energy_j": self.energy,
            "breakdown_s": self.breakdown(),
            "per_op": [{"name": n.name, "kind": n.kind, "unit": n.unit, "dims": list(n.dims),
                        "latency_s": t} for n, t in self.per_op],
            "plans": self.plans,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["op", "kind", "unit", "dims", "latency_per_block_s", "latency_total_s"])
        for n, t in self.per_op:
            w.writerow([n.name, n.kind, n.unit, "x".join(map(str, n.dims)), repr(t),
                        repr(t * self.n_blocks)])
        if self.head:
            w.writerow(["lm_head", "smvm", "qlc_pim", "", repr(self.head), repr(self.head)])
        w.writerow(["total", "", "", "", repr(self.per_block), repr(self.total_tpot)])
        return buf.getvalue()


def check_capacity(model: LlmModel, topo: FlashTopology, cfg: PlaneConfig):
    have = topo.total_qlc_dies * topo.n_plane * cfg.capacity_bits // 8
    if model.weight_bytes > have:
        raise CapacityError(f"{model.name} needs {model.weight_bytes} B of weights,"
                            f" QLC capacity is {have} B")


@lru_cache(maxsize=256)
def _smvm_pim(m, n, topo, cfg, tech):
    return best_plan(m, n, topo, cfg, tech)


@lru_cache(maxsize=256)
def _smvm_serial(m, n, topo, cfg, tech):
    return cost_smvm_serial(m, n, topo, cfg, tech)


def estimate_tpot(model: LlmModel, topo: FlashTopology, cfg: PlaneConfig, tech: TechParams,
                  seq_len: int, cores: CoreParams | None = None, mode: str = "pim",
                  include_lm_head: bool = False) -> TpotReport:
    """Time per output token at context length ``seq_len``.

    ``mode="pim"`` costs each sMVM with the best tiling plan; ``mode="serial"``
    keeps every weight matrix in a single plane and runs its tiles back to
    back (the unparallelised baseline).
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    if mode not in ("pim", "serial"):
        raise ValueError(f"unknown mode {mode!r}")
    cores = cores or CoreParams()
    check_capacity(model, topo, cfg)
    e_tile = pim_energy(cfg, tech, b_input=model.act_bits,
                        n_row_active=min(128, cfg.n_row)).total

    plans = {}

    def smvm(m, n):
        if mode == "pim":
            plan, cost = _smvm_pim(m, n, topo, cfg, tech)
            plans[f"{m}x{n}"] = str(plan)
        else:
            cost = _smvm_serial(m, n, topo, cfg, tech)
        r, c = tile_counts(m, n, cfg)
        return cost.total, r * c * e_tile

    graph = build_decoder_graph(model, seq_len, include_lm_head)
    per_block_nodes = graph[:len(graph) // model.n_blocks] if not include_lm_head \
        else graph[:(len(graph) - 1) // model.n_blocks]
    per_op = []
    energy = 0.0
    for node in per_block_nodes:
        if node.kind == "smvm":
            t, e = smvm(*node.dims)
            energy += e * model.n_blocks
        elif node.kind == "qkt":
            _, t = map_qkt(seq_len, model.d_head, topo, cfg, tech, model.n_heads, model.n_blocks)
        elif node.kind == "sv":
            _, t = map_sv(seq_len, model.d_head, topo, cfg, tech, model.n_heads, model.n_blocks)
        else:
            t = cores.cost(node.kind, node.n_elems)
        per_op.append((node, t))
    per_block = math.fsum(t for _, t in per_op)
    head = 0.0
    if include_lm_head:
        head, e = smvm(model.d_model, model.vocab_size)
        energy += e
    total = per_block * model.n_blocks + head
    return TpotReport(model.name, seq_len, mode, per_op, per_block, model.n_blocks,
                      head, total, energy, plans)


def serial_baseline_setup(topo: FlashTopology, tech: TechParams,
                          area_budget_mm2: float | None = None):
    """Conventional-plane device for the baseline: as many conventional planes
    per die as fit the area of the proposed die (at least one), shared bus."""
    from .tech_model import plane_area
    from .config import SIZE_A
    budget = area_budget_mm2 or topo.n_plane * plane_area(SIZE_A, tech)
    n_plane = max(1, int(budget // plane_area(CONVENTIONAL, tech)))
    return replace(topo, n_plane=n_plane, bus_topology="shared"), CONVENTIONAL


def estimate_baseline_tpot(model: LlmModel, topo: FlashTopology, tech: TechParams,
                           seq_len: int, cores: CoreParams | None = None) -> TpotReport:
    btopo, bcfg = serial_baseline_setup(topo, tech)
    return estimate_tpot(model, btopo, bcfg, tech, seq_len, cores, mode="serial")


# ------------------------------------------------------------ KV cache -----

def kv_bytes(model: LlmModel, n_tokens: int) -> int:
    """K and V of every block for ``n_tokens`` tokens, one byte per element."""
    return 2 * model.n_blocks * n_tokens * model.d_model * model.act_bits // 8


def kv_write_overhead(model: LlmModel, l_in: int, topo: FlashTopology) -> float:
    """Seconds to write the initial KV cache of ``l_in`` prompt tokens to SLC."""
    if l_in < 0:
        raise ValueError("l_in must be >= 0")
    return kv_bytes(model, l_in) / topo.slc_write_bytes_per_sec


def break_even_tokens(kv_overhead: float, per_token_saving: float) -> int | None:
    """Tokens needed before the per-token saving repays the KV write; ``None``
    when the saving is not positive (never amortizes)."""
    if kv_overhead < 0:
        raise ValueError("kv_overhead must be >= 0")
    if per_token_saving <= 0:
        return None
    q = kv_overhead / per_token_saving
    n = round(q)
    if math.isclose(q, n, rel_tol=1e-9):
        return int(n)
    return math.ceil(q)


@dataclass(frozen=True)
class LifetimeReport:
    years: float
    assumptions: dict

    def as_dict(self) -> dict:
        return asdict(self)


def lifetime_projection(slc_capacity: float, tpot: float, model: LlmModel,
                        pe_cycles: float = 10_000, retention_boost: float = 50.0) -> LifetimeReport:
    """SLC lifetime under continuous generation with ideal wear levelling.

    Each token appends one k and one v vector per block; the whole capacity
    can be rewritten ``pe_cycles * retention_boost`` times.
    """
    for name, v in (("slc_capacity", slc_capacity), ("tpot", tpot),
                    ("pe_cycles", pe_cycles), ("retention_boost", retention_boost)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    append = kv_bytes(model, 1)
    rate = append / tpot
    seconds = pe_cycles * retention_boost * slc_capacity / rate
    return LifetimeReport(seconds / SECONDS_PER_YEAR, {
        "slc_capacity_bytes": slc_capacity, "tpot_s": tpot, "model": model.name,
        "append_bytes_per_token": append, "write_rate_bytes_per_s": rate,
        "pe_cycles": pe_cycles, "retention_boost": retention_boost,
        "wear_leveling": "ideal", "write_amplification": 1.0,
    })
