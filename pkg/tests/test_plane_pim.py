import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flashpim.plane_pim import (ActivationLimitError, AdcModel, InputVector, load_weights,
                                pack_weights, pim_cycles, pim_dot_product,
                                quantization_error_bound, save_weights, unpack_weights)


def oracle(x, w):
    return np.asarray(x, dtype=np.int64) @ np.asarray(w, dtype=np.int64)


def test_nibble_layout():
    arr = pack_weights(np.array([[0xA5, 0x3C]]))
    assert arr.cells.tolist() == [[0xA, 0x5, 0x3, 0xC]]
    assert arr.column_pairing(1) == (2, 3)


def test_signed_roundtrip_and_zero_point():
    w = np.array([[-128, 127], [0, -1]])
    arr = pack_weights(w, signed=True)
    assert arr.zero_point == 128
    assert (unpack_weights(arr) == w).all()


def test_single_row_single_bit():
    w = np.array([[200, 7, 255]])
    assert pim_dot_product(pack_weights(w), InputVector(np.array([1]))).tolist() == [200, 7, 255]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 128), st.integers(1, 64), st.booleans(), st.integers(0, 2**32 - 1))
def test_ideal_matches_oracle(rows, cols, signed, seed):
    rng = np.random.default_rng(seed)
    lo, hi = (-128, 128) if signed else (0, 256)
    w = rng.integers(lo, hi, (rows, cols))
    x = rng.integers(0, 256, rows)
    assert (pim_dot_product(pack_weights(w, signed), InputVector(x)) == oracle(x, w)).all()


def test_extreme_values():
    w = np.full((128, 4), 255)
    x = np.full(128, 255)
    assert (pim_dot_product(pack_weights(w), InputVector(x)) == 128 * 255 * 255).all()


def test_activation_limit():
    w = np.zeros((129, 2), dtype=np.int64)
    with pytest.raises(ActivationLimitError):
        pim_dot_product(pack_weights(w), InputVector(np.zeros(129, dtype=np.int64)))
    out = pim_dot_product(pack_weights(w), InputVector(np.zeros(129, dtype=np.int64)),
                          max_active_rows=256)
    assert (out == 0).all()
    with pytest.raises(ActivationLimitError):
        pim_dot_product(pack_weights(np.zeros((4, 2))), InputVector(np.zeros(4, dtype=np.int64)),
                        max_active_rows=257)


def test_input_validation():
    with pytest.raises(ValueError):
        InputVector(np.array([256]))
    with pytest.raises(ValueError):
        InputVector(np.array([-1]))
    with pytest.raises(ValueError):
        pack_weights(np.array([[256]]))
    with pytest.raises(ValueError):
        pack_weights(np.array([[0.5]]))
    with pytest.raises(ValueError):
        pim_dot_product(pack_weights(np.zeros((3, 2))), InputVector(np.zeros(4, dtype=np.int64)))


def test_adc_rounding_and_clipping():
    adc = AdcModel(resolution_bits=2, mode="quantizing", full_scale=16)
    assert adc.step == 4
    assert adc.digitize(np.array([0, 1, 2, 5, 6, 100])).tolist() == [0, 0, 4, 4, 8, 12]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 7, 8, 9]))
def test_quantized_error_bounded(seed, res):
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 256, (128, 32))
    x = rng.integers(0, 256, 128)
    adc = AdcModel(res, "quantizing")
    err = np.abs(pim_dot_product(pack_weights(w), InputVector(x), adc) - oracle(x, w))
    assert err.max() <= quantization_error_bound(adc)


def test_cycles():
    c = pim_cycles(2048, InputVector(np.zeros(128, dtype=np.int64)))
    assert c.bit_passes == 8 and c.concurrent_cols == 512


def test_weight_files(tmp_path):
    w = np.arange(-8, 8).reshape(4, 4)
    save_weights(tmp_path / "w.csv", w)
    assert (load_weights(tmp_path / "w.csv", signed=True) == w).all()
    save_weights(tmp_path / "w.bin", w, signed=True)
    assert (load_weights(tmp_path / "w.bin", (4, 4), signed=True) == w).all()
    with pytest.raises(ValueError):
        load_weights(tmp_path / "w.bin")
    with pytest.raises(ValueError):
        load_weights(tmp_path / "w.bin", (3, 3), signed=True)
    (tmp_path / "big.csv").write_text("300,1\n")
    with pytest.raises(ValueError):
        load_weights(tmp_path / "big.csv")
