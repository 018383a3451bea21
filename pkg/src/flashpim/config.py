"""Configuration dataclasses and YAML loaders.

All quantities are SI internally (seconds, farads, ohms, metres, joules,
bytes/second).  Config files are YAML mappings; every key is optional and
falls back to the packaged defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

ROWS_PER_BLOCK = 4
MAX_ACTIVE_ROWS = 256  # reliability ceiling for cells summed on one BL
DEFAULT_ACTIVE_ROWS = 128


class ConfigError(ValueError):
    """Raised when a configuration file or value is invalid."""


@dataclass(frozen=True)
class PlaneConfig:
    """Geometry of one 3D NAND plane: ``n_row x n_col x n_stack``."""

    n_row: int
    n_col: int
    n_stack: int
    bits_per_cell: int = 4

    def __post_init__(self):
        for name in ("n_row", "n_col", "n_stack"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.bits_per_cell not in (1, 4):
            raise ConfigError(f"bits_per_cell must be 1 or 4, got {self.bits_per_cell}")
        if self.n_row % ROWS_PER_BLOCK:
            raise ConfigError(
                f"n_row={self.n_row} is not a multiple of {ROWS_PER_BLOCK} rows per block"
            )

    @property
    def label(self) -> str:
        return f"{self.n_row}x{self.n_col}x{self.n_stack}"

    @property
    def capacity_bits(self) -> int:
        return self.n_row * self.n_col * self.n_stack * self.bits_per_cell

    @classmethod
    def parse(cls, text: str, bits_per_cell: int = 4) -> "PlaneConfig":
        """Parse ``"256x2048x128"``."""
        try:
            r, c, s = (int(t) for t in text.lower().split("x"))
        except ValueError as exc:
            raise ConfigError(f"cannot parse plane config {text!r}") from exc
        return cls(r, c, s, bits_per_cell)


# Named plane sizes.  The conventional plane is 4 rows x 1400 blocks, a 4 KiB
# page and 128 stacks (midpoints of typical commercial ranges).
SIZE_A = PlaneConfig(256, 2048, 128)
SIZE_B = PlaneConfig(256, 1024, 64)
CONVENTIONAL = PlaneConfig(4 * 1400, 32768, 128)
PRESETS = {"size_a": SIZE_A, "size_b": SIZE_B, "conventional": CONVENTIONAL}


@dataclass(frozen=True)
class TechParams:
    """Per-unit device parameters for the RC latency/energy/density models."""

    # bitline (copper), per row of strings it spans
    r_bl_per_row: float
    c_bl_per_row: float
    # bitline-select line (tungsten), per column it crosses
    r_bls_per_col: float
    c_bls_per_col: float
    # wordline plate: cell region per column, staircase per stack layer
    c_cell_per_col: float
    c_stair_per_stack: float
    c_string: float
    c_inv: float
    r_s: float
    v_pre: float
    v_pass: float
    v_read: float
    t_sense: float
    t_dis: float
    t_accum: float
    e_sense_per_col: float
    e_accum_per_col: float
    horowitz_k: float
    l_cell_per_col: float
    l_staircase_per_stack: float
    w_per_row: float
    alpha_input: float = 0.5
    # accumulation energy grows with the MUX load: e_accum_per_col scales by
    # n_col / accum_mux_ref_cols
    accum_mux_ref_cols: float = 1024.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "alpha_input":
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"alpha_input must lie in [0, 1], got {v}")
            elif not v > 0:
                raise ConfigError(f"{f.name} must be strictly positive, got {v}")

    @classmethod
    def default(cls) -> "TechParams":
        return load_tech(None)


@dataclass(frozen=True)
class FlashTopology:
    """Channel/way/die/plane hierarchy with bus and RPU parameters."""

    n_channel: int = 8
    n_way: int = 4
    n_die: int = 8
    n_plane: int = 256
    bus_bytes_per_sec: float = 2.0e9
    bus_topology: str = "htree"
    slc_dies_per_way: int = 2
    qlc_dies_per_way: int = 6
    rpu_clock_hz: float = 250e6
    rpu_lanes: int = 8
    # partial sums leave a plane as 8-bit words (one RPU lane per byte per cycle)
    psum_bytes: int = 1
    slc_write_bytes_per_sec: float = 5.9e9
    rpu_hop_cycles: int = 1
    # RPUs latch whole child vectors before forwarding ("store_forward") or
    # pass elements on as they arrive ("cut_through")
    htree_flow: str = "store_forward"

    def __post_init__(self):
        for name in ("n_channel", "n_way", "n_die", "n_plane", "rpu_lanes",
                     "psum_bytes", "rpu_hop_cycles"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.slc_dies_per_way < 0 or self.qlc_dies_per_way < 0:
            raise ConfigError("die partition counts must be non-negative")
        if self.slc_dies_per_way + self.qlc_dies_per_way != self.n_die:
            raise ConfigError(
                f"slc_dies_per_way + qlc_dies_per_way ({self.slc_dies_per_way}"
                f" + {self.qlc_dies_per_way}) != n_die ({self.n_die})"
            )
        if self.bus_topology not in ("shared", "htree"):
            raise ConfigError(f"bus_topology must be 'shared' or 'htree', got {self.bus_topology!r}")
        if self.htree_flow not in ("store_forward", "cut_through"):
            raise ConfigError(f"htree_flow must be 'store_forward' or 'cut_through', got {self.htree_flow!r}")
        for name in ("bus_bytes_per_sec", "rpu_clock_hz", "slc_write_bytes_per_sec"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def total_qlc_dies(self) -> int:
        return self.n_channel * self.n_way * self.qlc_dies_per_way

    @property
    def total_slc_dies(self) -> int:
        return self.n_channel * self.n_way * self.slc_dies_per_way

    @classmethod
    def default(cls) -> "FlashTopology":
        return load_topology(None)


@dataclass(frozen=True)
class CoreParams:
    """Controller cores running LN, softmax, activation and residual adds."""

    n_cores: int = 4
    clock_hz: float = 1.0e9
    cycles_per_elem: dict = field(default_factory=lambda: {
        "layernorm": 8.0, "softmax": 1.0, "activation": 2.0, "residual": 1.0,
    })
    pcie_bytes_per_sec: float = 15.75e9  # PCIe 5.0 x4

    def cost(self, kind: str, n_elems: int) -> float:
        return self.cycles_per_elem[kind] * n_elems / (self.n_cores * self.clock_hz)


def _read_yaml(path: Path | str | None, default_name: str) -> dict[str, Any]:
    if path is None:
        text = resources.files("flashpim.data").joinpath(default_name).read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path or default_name}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path or default_name}: top level must be a mapping")
    return data


def _build(cls, values: dict[str, Any], where: str):
    types = {f.name: f.type for f in fields(cls)}
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    values = dict(values)
    try:
        for k, v in values.items():
            # YAML 1.1 reads exponents without a sign ("2.5e8") as strings
            if types[k] in ("float", float) and isinstance(v, (str, int)):
                values[k] = float(v)
            elif types[k] in ("int", int) and isinstance(v, str):
                values[k] = int(v)
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_tech(path: Path | str | None = None, **overrides) -> TechParams:
    """Load TechParams: packaged calibrated defaults, then file, then overrides.

    The file may hold the parameters at top level or under a ``tech:`` key
    (calibration output also carries ``calibration:`` metadata, ignored here).
    """
    base = _read_yaml(None, "tech_default.yaml")["tech"]
    values = dict(base)
    if path is not None:
        data = _read_yaml(path, "")
        values.update(data.get("tech", {k: v for k, v in data.items() if k != "calibration"}))
    values.update(overrides)
    return _build(TechParams, {k: float(v) for k, v in values.items()}, "tech")


def load_topology(path: Path | str | None = None, **overrides) -> FlashTopology:
    values = dict(_read_yaml(None, "topology_default.yaml").get("topology", {}))
    if path is not None:
        data = _read_yaml(path, "")
        values.update(data.get("topology", data))
    values.update(overrides)
    return _build(FlashTopology, values, "topology")


def load_cores(path: Path | str | None = None) -> CoreParams:
    data = dict(_read_yaml(None, "topology_default.yaml").get("cores", {}))
    if path is not None:
        data.update(_read_yaml(path, "").get("cores", {}))
    return _build(CoreParams, data, "cores")


def load_plane(path: Path | str | None = None) -> PlaneConfig:
    """Plane config from a file (``plane: {n_row: .., ...}`` or ``plane: size_a``)."""
    if path is None:
        return SIZE_A
    data = _read_yaml(path, "").get("plane", "size_a")
    if isinstance(data, str):
        if data in PRESETS:
            return PRESETS[data]
        return PlaneConfig.parse(data)
    base = dataclasses.asdict(SIZE_A)
    base.update(data)
    return _build(PlaneConfig, base, "plane")


def with_overrides(obj, **kw):
    """``dataclasses.replace`` that ignores ``None`` values (CLI precedence)."""
    return replace(obj, **{k: v for k, v in kw.items() if v is not None})
