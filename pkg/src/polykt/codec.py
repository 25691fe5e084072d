"""Arithmetic coding driven by the constrained KT estimator.

Stream layout (big-endian)::

    magic "PKT1" (4) | version (1) | m (2) | n (8) | seed (8) | constraints digest (8) | payload

The payload is a 32-bit integer arithmetic code (carry-free, with pending
"underflow" bits) over 16-bit quantized conditionals. Encoder and decoder run
the identical estimator with the identical seed, so Monte Carlo backends
reproduce the same probabilities on both sides.

Termination writes the top 16 bits of the smallest multiple of 2^16 inside
the final interval; the decoder pads the stream with zero bits.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import specfn
from .constraints import ConstraintSet, IntegrationConfig
from .errors import CodecError, DomainError
from .estimator import ConstrainedKT, log_mixture_direct

MAGIC = b"PKT1"
VERSION = 1
HEADER = struct.Struct(">4sBHQQ8s")
HEADER_BYTES = HEADER.size

PRECISION = 32
TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS
_TOP = (1 << PRECISION) - 1
_HALF = 1 << (PRECISION - 1)
_QUARTER = 1 << (PRECISION - 2)
_FLUSH = 16


@dataclass(frozen=True)
class BitBuffer:
    """A complete stream; ``bit_length`` counts payload bits (header excluded)."""

    data: bytes
    bit_length: int

    @property
    def payload(self) -> bytes:
        return self.data[HEADER_BYTES:]

    @property
    def total_bits(self) -> int:
        return 8 * HEADER_BYTES + self.bit_length


def quantize(probs: np.ndarray, total: int = TOTAL) -> list[int]:
    """Integer frequencies summing to ``total``, every one at least 1.

    freq_i = 1 + floor(p_i (total - m)); the few leftover units go to the most
    probable symbol. The coding loss per symbol is at most
    -log2(1 - m / total) bits relative to p.
    """
    m = len(probs)
    if m > total // 2:
        raise DomainError("alphabet too large for the frequency resolution")
    scale = total - m
    f = [1 + int(p * scale) for p in probs.tolist()]
    top = max(range(m), key=probs.__getitem__)
    f[top] += total - sum(f)
    return f


class _BitWriter:
    def __init__(self):
        self.bits: list[int] = []

    def put(self, bit: int, pending: int) -> None:
        self.bits.append(bit)
        if pending:
            self.bits.extend([1 - bit] * pending)

    def to_bytes(self) -> bytes:
        n = len(self.bits)
        pad = (-n) % 8
        arr = np.array(self.bits + [0] * pad, dtype=np.uint8)
        return np.packbits(arr).tobytes()


class _Encoder:
    def __init__(self):
        self.low = 0
        self.high = _TOP
        self.pending = 0
        self.out = _BitWriter()

    def encode(self, lo: int, hi: int) -> None:
        span = self.high - self.low + 1
        self.high = self.low + (span * hi >> TOTAL_BITS) - 1
        self.low = self.low + (span * lo >> TOTAL_BITS)
        while True:
            if self.high < _HALF:
                self.out.put(0, self.pending)
                self.pending = 0
            elif self.low >= _HALF:
                self.out.put(1, self.pending)
                self.pending = 0
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < _HALF + _QUARTER:
                self.pending += 1
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1

    def finish(self) -> tuple[bytes, int]:
        shift = PRECISION - _FLUSH
        v = -(-self.low >> shift) << shift
        if v > self.high:  # cannot happen after renormalization; kept as a guard
            raise CodecError("arithmetic coder lost its interval")
        for j in range(PRECISION - 1, shift - 1, -1):
            bit = (v >> j) & 1
            if j == PRECISION - 1:
                self.out.put(bit, self.pending)
                self.pending = 0
            else:
                self.out.put(bit, 0)
        return self.out.to_bytes(), len(self.out.bits)


class _Decoder:
    def __init__(self, payload: bytes, bit_length: int):
        self.bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8)).tolist()[:bit_length]
        self.limit = bit_length
        self.pos = 0
        self.low = 0
        self.high = _TOP
        self.value = 0
        for _ in range(PRECISION):
            self.value = (self.value << 1) | self._next()

    def _next(self) -> int:
        p = self.pos
        self.pos += 1
        return self.bits[p] if p < self.limit else 0

    def decode(self, freqs: Sequence[int]) -> int:
        span = self.high - self.low + 1
        target = ((self.value - self.low + 1) * TOTAL - 1) // span
        cum = 0
        for s, f in enumerate(freqs):
            if target < cum + f:
                break
            cum += f
        else:
            raise CodecError("corrupt payload: code value outside every symbol interval")
        lo, hi = cum, cum + freqs[s]
        self.high = self.low + (span * hi >> TOTAL_BITS) - 1
        self.low = self.low + (span * lo >> TOTAL_BITS)
        while True:
            if self.high < _HALF:
                pass
            elif self.low >= _HALF:
                self.low -= _HALF
                self.high -= _HALF
                self.value -= _HALF
            elif self.low >= _QUARTER and self.high < _HALF + _QUARTER:
                self.low -= _QUARTER
                self.high -= _QUARTER
                self.value -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
            self.value = (self.value << 1) | self._next()
        return s


def _header(m: int, n: int, seed: int, S: ConstraintSet) -> bytes:
    return HEADER.pack(MAGIC, VERSION, m, n, seed & (2**64 - 1), S.digest())


def parse_header(data: bytes) -> tuple[int, int, int, bytes]:
    """(m, n, seed, digest) from a stream, validating magic and version."""
    if len(data) < HEADER_BYTES:
        raise CodecError(f"stream too short for a header ({len(data)} < {HEADER_BYTES} octets)")
    magic, version, m, n, seed, digest = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CodecError("bad magic: not a compressed stream")
    if version != VERSION:
        raise CodecError(f"unsupported stream version {version}")
    return m, n, seed, digest


def encode(x: Iterable[int], S: ConstraintSet, cfg: IntegrationConfig | None = None, seed: int = 0) -> BitBuffer:
    """Compress a sequence of symbols in 1..m."""
    xs = [int(s) for s in x]
    for s in xs:
        if not 1 <= s <= S.m:
            raise DomainError(f"symbol {s} outside 1..{S.m}")
    head = _header(S.m, len(xs), seed, S)
    if not xs:
        return BitBuffer(head, 0)
    est = ConstrainedKT(S, cfg, seed)
    enc = _Encoder()
    for s in xs:
        f = quantize(est.predict().probs)
        lo = sum(f[: s - 1])
        enc.encode(lo, lo + f[s - 1])
        est.update(s)
    payload, nbits = enc.finish()
    return BitBuffer(head + payload, nbits)


def decode(buf: BitBuffer | bytes, S: ConstraintSet, cfg: IntegrationConfig | None = None,
           seed: int | None = None) -> list[int]:
    """Invert :func:`encode`; raises :class:`CodecError` on any inconsistency."""
    data = buf.data if isinstance(buf, BitBuffer) else bytes(buf)
    m, n, hseed, digest = parse_header(data)
    if m != S.m:
        raise CodecError(f"stream alphabet m={m} does not match the constraint set (m={S.m})")
    if digest != S.digest():
        raise CodecError("constraint digest mismatch: stream was written with a different constraint set")
    if seed is not None and (seed & (2**64 - 1)) != hseed:
        raise CodecError("seed mismatch between stream header and caller")
    payload = data[HEADER_BYTES:]
    if n == 0:
        if payload:
            raise CodecError("trailing data after an empty stream")
        return []
    bit_length = buf.bit_length if isinstance(buf, BitBuffer) else 8 * len(payload)
    if bit_length > 8 * len(payload) or len(payload) < _FLUSH // 8:
        raise CodecError("truncated payload")
    est = ConstrainedKT(S, cfg, hseed if hseed < 2**63 else hseed - 2**64)
    dec = _Decoder(payload, bit_length)
    out = []
    for _ in range(n):
        f = quantize(est.predict().probs)
        s = dec.decode(f) + 1
        out.append(s)
        est.update(s)
    # a well-formed stream is never read further than the 32-bit register past its end
    if dec.pos > bit_length + PRECISION:
        raise CodecError("payload exhausted before all symbols were decoded")
    return out


def codelength_bits(x: Iterable[int], S: ConstraintSet, cfg: IntegrationConfig | None = None) -> float:
    """Ideal code length -log2 M(x^n)."""
    return -specfn.to_bits(log_mixture_direct(x, S, cfg))


def overhead_budget(n: int) -> float:
    """Allowed excess of the payload over the ideal length, in bits."""
    return n * 2.0 ** -16 * math.log2(math.e) + 64.0
