"""Analytical RC latency, energy and cell-density models of a 3D NAND plane."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .config import DEFAULT_ACTIVE_ROWS, ConfigError, PlaneConfig, TechParams

GIB = 2**30  # densities are reported in Gib (2^30 bits) per mm^2
MM2 = 1e-6   # m^2 per mm^2


@dataclass(frozen=True)
class RcSet:
    r_bl: float
    c_bl: float
    r_bls: float
    c_bls: float
    c_cell: float
    c_stair: float


@dataclass(frozen=True)
class LatencyBreakdown:
    t_dec_wl: float
    t_dec_bls: float
    t_pre: float
    t_sense: float
    t_accum: float
    t_dis: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class EnergyBreakdown:
    e_pre: float
    e_dec_bls: float
    e_dec_wl: float
    e_sense: float
    e_accum: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def horowitz_delay(tau: float, k: float) -> float:
    """Reduced Horowitz gate delay ``k * tau**1.5``."""
    if tau < 0:
        raise ValueError(f"RC time constant must be non-negative, got {tau}")
    return k * tau**1.5


def derive_rc(cfg: PlaneConfig, tech: TechParams) -> RcSet:
    return RcSet(
        r_bl=tech.r_bl_per_row * cfg.n_row,
        c_bl=tech.c_bl_per_row * cfg.n_row,
        r_bls=tech.r_bls_per_col * cfg.n_col,
        c_bls=tech.c_bls_per_col * cfg.n_col,
        c_cell=tech.c_cell_per_col * cfg.n_col,
        c_stair=tech.c_stair_per_stack * cfg.n_stack,
    )


def latency_components(cfg: PlaneConfig, tech: TechParams) -> LatencyBreakdown:
    """Dominant-term decoder/precharge delays.  ``total`` is left as one bit-pass
    of a page read (``t_dec_wl + max(t_dec_bls, t_pre) + t_sense + t_dis``)."""
    rc = derive_rc(cfg, tech)
    h = lambda tau: horowitz_delay(tau, tech.horowitz_k)  # noqa: E731
    t_pre = h(tech.r_s * cfg.n_col * tech.c_inv) + h(rc.r_bl * (rc.c_bl / 2 + tech.c_string))
    t_dec_bls = h(rc.r_bls * rc.c_bls / 2)
    t_dec_wl = h(tech.r_s * (rc.c_cell + rc.c_stair))
    total = t_dec_wl + max(t_dec_bls, t_pre) + tech.t_sense + tech.t_dis
    return LatencyBreakdown(t_dec_wl, t_dec_bls, t_pre, tech.t_sense, tech.t_accum, tech.t_dis, total)


def page_read_latency(cfg: PlaneConfig, tech: TechParams) -> float:
    lat = latency_components(cfg, tech)
    return lat.t_dec_wl + max(lat.t_dec_bls, lat.t_pre) + lat.t_sense + lat.t_dis


def pim_latency(cfg: PlaneConfig, tech: TechParams, b_input: int = 8) -> LatencyBreakdown:
    """PIM latency: one WL decode, then ``b_input`` bit-serial passes.

    Component fields are per-pass values; ``total`` is the full operation.
    """
    if b_input < 1:
        raise ValueError(f"b_input must be >= 1, got {b_input}")
    lat = latency_components(cfg, tech)
    per_pass = max(lat.t_dec_bls, lat.t_pre) + lat.t_sense + lat.t_accum + lat.t_dis
    return replace(lat, total=lat.t_dec_wl + per_pass * b_input)


def stacked_latency(lat: LatencyBreakdown, b_input: int = 8) -> dict[str, float]:
    """Per-component share of a PIM operation's total (sums to ``lat.total``)."""
    pre_wins = lat.t_pre >= lat.t_dec_bls
    return {
        "t_dec_wl": lat.t_dec_wl,
        "t_dec_bls": 0.0 if pre_wins else lat.t_dec_bls * b_input,
        "t_pre": lat.t_pre * b_input if pre_wins else 0.0,
        "t_sense": lat.t_sense * b_input,
        "t_accum": lat.t_accum * b_input,
        "t_dis": lat.t_dis * b_input,
    }


def energy_components(cfg: PlaneConfig, tech: TechParams,
                      n_row_active: int = DEFAULT_ACTIVE_ROWS) -> EnergyBreakdown:
    """Per bit-pass energies of one PIM operation."""
    if n_row_active > cfg.n_row:
        raise ConfigError(f"n_row_active={n_row_active} exceeds n_row={cfg.n_row}")
    if n_row_active < 1:
        raise ConfigError("n_row_active must be >= 1")
    rc = derive_rc(cfg, tech)
    e_pre = cfg.n_col * tech.v_pre**2 * (
        rc.c_bl + tech.c_string * n_row_active * (1 - tech.alpha_input))
    e_dec_bls = n_row_active * tech.v_pass**2 * rc.c_bls
    # printed form: V_read^2 (C_cell + C_stair) + V_pass^2 (C_cell + C_stair)
    e_dec_wl = (tech.v_read**2 + tech.v_pass**2) * (rc.c_cell + rc.c_stair)
    e_sense = tech.e_sense_per_col * cfg.n_col
    e_accum = tech.e_accum_per_col * cfg.n_col * (cfg.n_col / tech.accum_mux_ref_cols)
    total = e_pre + e_dec_bls + e_dec_wl + e_sense + e_accum
    return EnergyBreakdown(e_pre, e_dec_bls, e_dec_wl, e_sense, e_accum, total)


def pim_energy(cfg: PlaneConfig, tech: TechParams, b_input: int = 8,
               n_row_active: int = DEFAULT_ACTIVE_ROWS) -> EnergyBreakdown:
    """Energy of a full PIM operation: WL decode once, the rest per bit-pass."""
    e = energy_components(cfg, tech, n_row_active)
    parts = dict(
        e_pre=e.e_pre * b_input,
        e_dec_bls=e.e_dec_bls * b_input,
        e_dec_wl=e.e_dec_wl,
        e_sense=e.e_sense * b_input,
        e_accum=e.e_accum * b_input,
    )
    return EnergyBreakdown(**parts, total=sum(parts.values()))


def plane_lengths(cfg: PlaneConfig, tech: TechParams) -> tuple[float, float, float]:
    """(L_cell, L_staircase, W) in metres."""
    return (tech.l_cell_per_col * cfg.n_col,
            tech.l_staircase_per_stack * cfg.n_stack,
            tech.w_per_row * cfg.n_row)


def plane_area(cfg: PlaneConfig, tech: TechParams) -> float:
    """Plane footprint W x (L_cell + L_staircase) in mm^2."""
    l_cell, l_stair, w = plane_lengths(cfg, tech)
    return w * (l_cell + l_stair) / MM2


def cell_density(cfg: PlaneConfig, tech: TechParams) -> float:
    """Cell density in Gib/mm^2."""
    l_cell, l_stair, _ = plane_lengths(cfg, tech)
    # W = w_per_row * n_row, so n_row / W is exactly 1 / w_per_row
    bits_per_m2 = (cfg.n_col * cfg.n_stack * cfg.bits_per_cell) / (l_cell + l_stair) / tech.w_per_row
    return bits_per_m2 * MM2 / GIB
