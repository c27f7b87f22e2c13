import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alf.codec import CdfTable, build_cdf_table, range_decode, range_encode
from alf.codec.rangecoder import TOTAL


def _table(rng, channels=4):
    return build_cdf_table(rng.normal(0, 3, channels), rng.uniform(0.3, 8.0, channels))


def test_uniform_256_symbols_cost_one_byte_each(rng):
    table = CdfTable.from_pmf(np.ones(256), offset=0)
    sym = rng.integers(0, 256, 10_000)
    data = range_encode(sym, table)
    assert len(data) == 10_000
    np.testing.assert_array_equal(range_decode(data, table, sym.shape), sym)


@pytest.mark.parametrize("pattern", ["constant", "alternating", "extremes", "zeros"])
def test_degenerate_patterns(pattern, rng):
    table = _table(rng)
    shape = (4, 6, 6)
    if pattern == "constant":
        sym = np.full(shape, 5)
    elif pattern == "alternating":
        sym = np.where(np.indices(shape).sum(0) % 2 == 0, -3, 3)
    elif pattern == "extremes":
        sym = np.where(np.indices(shape).sum(0) % 2 == 0, -64, 63)
    else:
        sym = np.zeros(shape, int)
    np.testing.assert_array_equal(range_decode(range_encode(sym, table), table, shape), sym)


def test_escape_symbols_round_trip(rng):
    table = _table(rng)
    sym = rng.integers(-3, 4, (4, 5, 5))
    sym[0, 0, 0] = 1000
    sym[1, 2, 3] = -65
    sym[3, 4, 4] = 64
    np.testing.assert_array_equal(range_decode(range_encode(sym, table), table, sym.shape), sym)


def test_empty_array():
    table = CdfTable.from_pmf(np.ones(4))
    assert range_encode(np.zeros((0,), int), table) == b""
    assert range_decode(b"", table, (0,)).shape == (0,)


def test_symbol_outside_support_without_escape():
    table = CdfTable.from_pmf(np.ones(4))
    with pytest.raises(ValueError):
        range_encode(np.array([7]), table)


def test_cdf_validation():
    with pytest.raises(ValueError):
        CdfTable(np.array([0, 10, 10, TOTAL]))
    with pytest.raises(ValueError):
        CdfTable(np.array([1, TOTAL]))


def test_from_pmf_keeps_every_bucket_codable():
    table = CdfTable.from_pmf(np.array([1.0, 1e-30, 1e-30]))
    assert (np.diff(table.cdfs[0]) >= 1).all()
    assert table.cdfs[0, -1] == TOTAL


def test_code_length_near_ideal(rng):
    pmf = np.array([0.5, 0.25, 0.125, 0.125])
    table = CdfTable.from_pmf(pmf)
    sym = rng.choice(4, size=20_000, p=pmf)
    actual = 8 * len(range_encode(sym, table))
    ideal = table.code_length_bits(sym)
    assert abs(actual - ideal) < 0.01 * ideal + 32
    assert table.entropy_bits() == pytest.approx(1.75, abs=1e-3)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 200))
def test_random_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    table = _table(rng, 3)
    scales = rng.uniform(0.5, 20, (3, 1))
    sym = np.round(rng.standard_normal((3, n)) * scales).astype(np.int64)
    np.testing.assert_array_equal(range_decode(range_encode(sym, table), table, sym.shape), sym)


@given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=40), st.integers(0, 2 ** 32 - 1))
def test_arbitrary_pmf_round_trip(weights, seed):
    table = CdfTable.from_pmf(np.array(weights))
    sym = np.random.default_rng(seed).integers(0, len(weights), 64)
    np.testing.assert_array_equal(range_decode(range_encode(sym, table), table, sym.shape), sym)


def test_entropy_bound_for_gaussian_source(rng):
    # oracle: ideal code length under the table's own quantized pmf
    table = build_cdf_table(np.zeros(1), np.array([3.0]))
    sym = np.round(rng.normal(0, 3.0, 5000)).astype(np.int64)[None]
    bits = 8 * len(range_encode(sym, table))
    p = np.diff(table.cdfs[0]) / TOTAL
    ideal = -np.log2(p[sym[0] + 64]).sum()
    assert abs(bits - ideal) < 0.02 * ideal + 32
    assert bits / sym.size == pytest.approx(0.5 * math.log2(2 * math.pi * math.e * 9), abs=0.05)
