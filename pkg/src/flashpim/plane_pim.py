"""Bit-exact functional model of the in-plane dot product.

An 8-bit weight occupies two adjacent QLC cells on neighbouring bitlines: the
high nibble on the even BL, the low nibble on the odd BL.  Inputs are applied
one bit per pass on the BLS lines; each BL sums the selected cells, an ADC
digitises the sum and a shift-adder scales it by ``2**bit`` (and by 16 for
high-nibble BLs) before accumulating.

Weight matrices are oriented ``(n_in, n_out)``: row ``n`` feeds input ``x[n]``
and the result is ``x @ W``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .config import DEFAULT_ACTIVE_ROWS, MAX_ACTIVE_ROWS

NIBBLE = 4
CELL_MAX = 15


class ActivationLimitError(ValueError):
    pass


@dataclass(frozen=True)
class WeightArray:
    """QLC cell grid ``(n_row_active, 2 * n_out)`` plus the signed-weight offset."""

    cells: np.ndarray
    zero_point: int = 0

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_out(self) -> int:
        return self.cells.shape[1] // 2

    def column_pairing(self, k: int) -> tuple[int, int]:
        """(high-nibble BL, low-nibble BL) holding output ``k``."""
        return 2 * k, 2 * k + 1


@dataclass(frozen=True)
class InputVector:
    values: np.ndarray
    b_input: int = 8

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise ValueError("input vector must be 1-D")
        if v.size and (v.min() < 0 or v.max() >= 2**self.b_input):
            raise ValueError(f"inputs must be unsigned {self.b_input}-bit integers")
        object.__setattr__(self, "values", v.astype(np.int64))


@dataclass(frozen=True)
class AdcModel:
    resolution_bits: int = 9
    mode: str = "ideal"
    full_scale: int = DEFAULT_ACTIVE_ROWS * CELL_MAX

    def __post_init__(self):
        if self.resolution_bits < 1:
            raise ValueError("resolution_bits must be >= 1")
        if self.mode not in ("ideal", "quantizing"):
            raise ValueError(f"unknown ADC mode {self.mode!r}")

    @property
    def step(self) -> int:
        return math.ceil(self.full_scale / 2**self.resolution_bits)

    def digitize(self, bl_sums: np.ndarray) -> np.ndarray:
        """Return the reconstructed BL sum (code * step) for each bitline."""
        if self.mode == "ideal":
            return bl_sums
        step = self.step
        codes = np.floor_divide(2 * bl_sums + step, 2 * step)  # round half up
        codes = np.clip(codes, 0, 2**self.resolution_bits - 1)
        return codes * step


def pack_weights(weights, signed: bool = False) -> WeightArray:
    """Split 8-bit weights into (high, low) nibble cells.

    Signed weights are shifted by +128 into the unsigned range; the offset is
    removed digitally in :func:`pim_dot_product`.
    """
    w = np.asarray(weights)
    if w.ndim != 2:
        raise ValueError("weights must be a 2-D (n_in, n_out) matrix")
    if not np.issubdtype(w.dtype, np.integer):
        if not np.all(np.equal(np.mod(w, 1), 0)):
            raise ValueError("weights must be integers")
    w = w.astype(np.int64)
    lo, hi = (-128, 127) if signed else (0, 255)
    if w.size and (w.min() < lo or w.max() > hi):
        raise ValueError(f"weights out of {'signed' if signed else 'unsigned'} 8-bit range")
    zp = 128 if signed else 0
    u = w + zp
    cells = np.empty((w.shape[0], 2 * w.shape[1]), dtype=np.int64)
    cells[:, 0::2] = u >> NIBBLE
    cells[:, 1::2] = u & CELL_MAX
    return WeightArray(cells, zp)


def unpack_weights(arr: WeightArray) -> np.ndarray:
    u = (arr.cells[:, 0::2] << NIBBLE) | arr.cells[:, 1::2]
    return u - arr.zero_point


def pim_dot_product(w: WeightArray, x: InputVector, adc: AdcModel | None = None,
                    max_active_rows: int = DEFAULT_ACTIVE_ROWS) -> np.ndarray:
    """Bit-serial in-plane MVM; exact ``x @ W`` with an ideal ADC."""
    adc = adc or AdcModel()
    if max_active_rows > MAX_ACTIVE_ROWS:
        raise ActivationLimitError(
            f"at most {MAX_ACTIVE_ROWS} cells may be accumulated on one BL")
    if w.n_rows > max_active_rows:
        raise ActivationLimitError(
            f"{w.n_rows} active rows exceeds the limit of {max_active_rows}")
    if x.values.shape[0] != w.n_rows:
        raise ValueError(f"input length {x.values.shape[0]} != weight rows {w.n_rows}")
    scale = np.tile(np.array([1 << NIBBLE, 1], dtype=np.int64), w.n_out)
    acc = np.zeros(w.n_out, dtype=np.int64)
    for b in range(x.b_input):
        bits = (x.values >> b) & 1
        bl_sums = bits @ w.cells               # analog current summation per BL
        digital = adc.digitize(bl_sums) * scale
        acc += (digital[0::2] + digital[1::2]) << b
    if w.zero_point:
        acc -= w.zero_point * int(x.values.sum())
    return acc


def quantization_error_bound(adc: AdcModel, b_input: int = 8) -> float:
    """Worst-case |output error| of the quantizing ADC for one output."""
    return sum(2**b for b in range(b_input)) * (16 + 1) * adc.step / 2


class PimCycles(NamedTuple):
    bit_passes: int
    concurrent_cols: int


def pim_cycles(w_cols: int, x: InputVector, mux_ratio: int = 4) -> PimCycles:
    """Bit-serial passes for ``x`` and the columns sensed concurrently per pass.

    The 4:1 column MUX phases are taken to fit inside one ``t_sense``.
    """
    if mux_ratio < 1:
        raise ValueError("mux_ratio must be >= 1")
    return PimCycles(x.b_input, w_cols // mux_ratio)


def load_weights(path: str | Path, shape: tuple[int, int] | None = None,
                 signed: bool = False) -> np.ndarray:
    """Read 8-bit weights from ``.csv`` (one matrix row per line) or raw ``.bin``.

    Binary files are row-major, one byte per weight (two's complement when
    ``signed``); byte order does not arise for single bytes.  ``shape`` is
    required for binary files.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        w = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    else:
        if shape is None:
            raise ValueError("shape is required for binary weight files")
        raw = np.fromfile(path, dtype=np.int8 if signed else np.uint8)
        if raw.size != shape[0] * shape[1]:
            raise ValueError(f"{path}: {raw.size} bytes, expected {shape[0] * shape[1]}")
        w = raw.reshape(shape).astype(np.int64)
    lo, hi = (-128, 127) if signed else (0, 255)
    if w.size and (w.min() < lo or w.max() > hi):
        raise ValueError(f"{path}: values outside the 8-bit range")
    return w


def save_weights(path: str | Path, weights: np.ndarray, signed: bool = False) -> None:
    path = Path(path)
    w = np.asarray(weights)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, w, fmt="%d", delimiter=",")
    else:
        w.astype(np.int8 if signed else np.uint8).tofile(path)
