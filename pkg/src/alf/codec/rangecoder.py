"""Multi-symbol range coder with carry propagation (32-bit state).

Frequencies are 16-bit quantized CDFs.  Symbols outside the table support
go through an escape bucket followed by an Elias-gamma code written with
equiprobable binary decisions, so any integer round-trips.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class DecodeError(ValueError):
    """The byte stream is not a valid encoding for the given table."""


@dataclass(frozen=True)
class CdfTable:
    """Per-row quantized CDFs.

    ``cdfs[r]`` is strictly increasing from 0 to ``TOTAL`` with one more
    entry than there are buckets.  Bucket ``i`` holds symbol ``offset + i``;
    when ``escape`` is set the final bucket is the escape bucket.
    """

    cdfs: np.ndarray
    offset: int = 0
    escape: bool = False

    def __post_init__(self):
        cdfs = np.asarray(self.cdfs, dtype=np.int64)
        if cdfs.ndim == 1:
            cdfs = cdfs[None]
        if (cdfs[:, 0] != 0).any() or (cdfs[:, -1] != TOTAL).any():
            raise ValueError(f"every CDF must run from 0 to {TOTAL}")
        if (np.diff(cdfs, axis=1) <= 0).any():
            raise ValueError("CDF must be strictly increasing")
        object.__setattr__(self, "cdfs", cdfs)

    @property
    def rows(self):
        return self.cdfs.shape[0]

    @property
    def num_regular(self):
        return self.cdfs.shape[1] - 1 - int(self.escape)

    @classmethod
    def from_pmf(cls, pmf, offset=0, escape=False):
        """Quantize probabilities ``pmf[rows, buckets]`` to 16-bit counts, each >= 1."""
        pmf = np.atleast_2d(np.asarray(pmf, dtype=np.float64))
        pmf = pmf / pmf.sum(axis=1, keepdims=True)
        n = pmf.shape[1]
        freq = np.floor(pmf * (TOTAL - n)).astype(np.int64) + 1
        deficit = TOTAL - freq.sum(axis=1)
        rows = np.arange(pmf.shape[0])
        freq[rows, pmf.argmax(axis=1)] += deficit
        cdfs = np.concatenate([np.zeros((pmf.shape[0], 1), np.int64), np.cumsum(freq, axis=1)], axis=1)
        return cls(cdfs, offset, escape)

    def entropy_bits(self, row=0):
        """Shannon entropy in bits of one row's quantized distribution."""
        p = np.diff(self.cdfs[row]) / TOTAL
        return float(-(p * np.log2(p)).sum())

    def code_length_bits(self, symbols, row=0):
        p = np.diff(self.cdfs[row]) / TOTAL
        idx = np.clip(np.asarray(symbols) - self.offset, 0, p.size - 1)
        return float(-np.log2(p[idx]).sum())


class _Encoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self.out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode(self, start, size, bits=PRECISION):
        r = self.range >> bits
        self.low += r * start
        self.range = r * size
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_bit(self, bit):
        self.encode(bit, 1, 1)

    def finish(self):
        # pick the value in [low, low + range) with the most trailing zero bytes
        hi = self.low + self.range - 1
        for shift in (32, 24, 16, 8, 0):
            v = ((hi >> shift) << shift)
            if v >= self.low:
                break
        self.low = v
        for _ in range(5):
            self._shift_low()
        # the first emitted byte is always 0; trailing zeros are implied
        return bytes(self.out[1:]).rstrip(b"\x00")


class _Decoder:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next()

    def _next(self):
        # bytes past the end are implicit zeros
        b = self.data[self.pos] if self.pos < len(self.data) else 0
        self.pos += 1
        return b

    def decode_target(self, bits=PRECISION):
        self._r = self.range >> bits
        value = self.code // self._r
        if value >= (1 << bits):
            raise DecodeError("code value outside the coding interval")
        return value

    def consume(self, start, size):
        self.code -= self._r * start
        self.range = self._r * size
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next()) & _MASK32
            self.range <<= 8

    def decode_bit(self):
        bit = self.decode_target(1)
        self.consume(bit, 1)
        return bit


def _escape_value(v, lo, hi):
    # map an out-of-range integer to (sign, magnitude >= 1)
    return (0, v - hi) if v > hi else (1, lo - v)


def _encode_gamma(enc, n):
    nbits = n.bit_length()
    for _ in range(nbits - 1):
        enc.encode_bit(0)
    for i in range(nbits - 1, -1, -1):
        enc.encode_bit((n >> i) & 1)


def _decode_gamma(dec):
    zeros = 0
    while dec.decode_bit() == 0:
        zeros += 1
        if zeros > 62:
            raise DecodeError("malformed escape code")
    n = 1
    for _ in range(zeros):
        n = (n << 1) | dec.decode_bit()
    return n


def _row_ids(shape, table):
    if table.rows == 1:
        return np.zeros(int(np.prod(shape)), dtype=np.int64)
    if not shape or shape[0] != table.rows:
        raise ValueError(f"symbols leading dim {shape[:1]} does not match {table.rows} table rows")
    per = int(np.prod(shape[1:]))
    return np.repeat(np.arange(table.rows), per)


def range_encode(symbols, table):
    """Encode an integer array; with several table rows, axis 0 selects the row."""
    symbols = np.asarray(symbols, dtype=np.int64)
    flat = symbols.reshape(-1)
    if flat.size == 0:
        return b""
    rows = _row_ids(symbols.shape, table)
    enc = _Encoder()
    cdfs = table.cdfs.tolist()
    lo = table.offset
    nreg = table.num_regular
    hi = lo + nreg - 1
    for s, r in zip(flat.tolist(), rows.tolist()):
        cdf = cdfs[r]
        idx = s - lo
        if 0 <= idx < nreg:
            enc.encode(cdf[idx], cdf[idx + 1] - cdf[idx])
        elif table.escape:
            enc.encode(cdf[nreg], cdf[nreg + 1] - cdf[nreg])
            sign, mag = _escape_value(s, lo, hi)
            enc.encode_bit(sign)
            _encode_gamma(enc, mag)
        else:
            raise ValueError(f"symbol {s} outside table support [{lo}, {hi}] and no escape bucket")
    return enc.finish()


def range_decode(data, table, shape):
    """Inverse of :func:`range_encode`; ``shape`` gives the symbol array shape."""
    shape = tuple(int(n) for n in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    count = int(np.prod(shape)) if shape else 0
    out = np.empty(count, dtype=np.int64)
    if count == 0:
        if data:
            raise DecodeError("non-empty payload for an empty symbol array")
        return out.reshape(shape)
    rows = _row_ids(shape, table)
    dec = _Decoder(bytes(data))
    cdfs = table.cdfs.tolist()
    lo = table.offset
    nreg = table.num_regular
    hi = lo + nreg - 1
    for i, r in enumerate(rows.tolist()):
        cdf = cdfs[r]
        target = dec.decode_target()
        idx = bisect.bisect_right(cdf, target) - 1
        dec.consume(cdf[idx], cdf[idx + 1] - cdf[idx])
        if idx < nreg:
            out[i] = lo + idx
        else:
            sign = dec.decode_bit()
            mag = _decode_gamma(dec)
            out[i] = hi + mag if sign == 0 else lo - mag
    return out.reshape(shape)
