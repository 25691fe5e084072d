import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polykt import codec
from polykt.constraints import ConstraintSet, IntegrationConfig
from polykt.errors import CodecError, DomainError

FULL2 = ConstraintSet.full(2)
BOX = ConstraintSet.box([0.2], [0.6])
BOX4 = ConstraintSet.box([0.1, 0.1, 0.1], [0.5, 0.5, 0.5])
FAST = IntegrationConfig(samples=1000, quadrature_max_m=2)


def excess(x, S, cfg=None, seed=0):
    buf = codec.encode(x, S, cfg, seed)
    assert codec.decode(buf, S, cfg) == list(x)
    return buf.bit_length - codec.codelength_bits(x, S, cfg), buf


class TestQuantize:
    def test_sums_and_floor(self):
        f = codec.quantize(np.array([1 - 1e-12, 1e-12]))
        assert sum(f) == codec.TOTAL and min(f) >= 1

    def test_proportional(self):
        f = codec.quantize(np.array([0.5, 0.25, 0.25]))
        assert sum(f) == codec.TOTAL
        assert f[1] == f[2] and abs(f[0] - 2 * f[1]) <= 3

    def test_too_many_symbols(self):
        with pytest.raises(DomainError):
            codec.quantize(np.full(40_000, 1 / 40_000))


class TestRoundTrip:
    def test_empty(self):
        buf = codec.encode([], FULL2)
        assert buf.bit_length == 0 and len(buf.data) == codec.HEADER_BYTES
        assert codec.decode(buf, FULL2) == []

    def test_exhaustive_short_binary(self):
        for n in range(1, 9):
            for x in itertools.product((1, 2), repeat=n):
                e, _ = excess(x, FULL2)
                assert 0.0 <= e <= codec.overhead_budget(n)

    def test_box_binary(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            x = rng.choice([1, 2], size=int(rng.integers(1, 200)), p=[0.9, 0.1]).tolist()
            e, _ = excess(x, BOX)
            assert 0.0 <= e <= codec.overhead_budget(len(x))

    def test_monte_carlo_box(self):
        rng = np.random.default_rng(1)
        x = rng.integers(1, 5, size=300).tolist()
        e, _ = excess(x, BOX4, FAST, seed=4)
        assert 0.0 <= e <= codec.overhead_budget(300)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_source_outside_box(self, seed):
        # the posterior leaves S, so most steps run on importance sampling
        rng = np.random.default_rng(seed)
        x = (rng.choice(4, size=150, p=[0.05, 0.05, 0.05, 0.85]) + 1).tolist()
        e, _ = excess(x, BOX4, FAST, seed=seed)
        assert 0.0 <= e <= codec.overhead_budget(150)

    def test_raw_bytes_decode(self):
        x = [1, 2, 2, 1, 1, 1, 2]
        buf = codec.encode(x, BOX)
        assert codec.decode(buf.data, BOX) == x

    @given(st.lists(st.integers(1, 3), max_size=80), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_property_m3(self, x, seed):
        S = ConstraintSet.box([0.0, 0.2], [1.0, 0.7])  # single cut coordinate: exact backend
        buf = codec.encode(x, S, seed=seed)
        assert codec.decode(buf, S, seed=seed) == x


class TestCodelength:
    def test_examples(self):
        assert codec.codelength_bits([1, 1], FULL2) == pytest.approx(math.log2(8 / 3), abs=1e-13)
        assert codec.codelength_bits([1], FULL2) == pytest.approx(1.0, abs=1e-15)

    def test_fair_bits(self):
        rng = np.random.default_rng(2024)
        x = rng.integers(1, 3, size=1000).tolist()
        e, buf = excess(x, FULL2)
        assert buf.bit_length <= 1030
        assert 0.0 <= e <= codec.overhead_budget(1000)

    def test_narrow_box_beats_kt_near_half(self):
        # for a source at theta = 1/2 the box [.45,.55] pays -log2 C(S) less asymptotically
        narrow = ConstraintSet.box([0.45], [0.55])
        rng = np.random.default_rng(5)
        diffs = []
        for _ in range(100):
            x = rng.integers(1, 3, size=200).tolist()
            diffs.append(codec.encode(x, FULL2).bit_length - codec.encode(x, narrow).bit_length)
        assert np.mean(diffs) > 0


    def test_constraint_never_costs_much(self):
        # sources inside S: the constrained code is no worse than KT on average
        rng = np.random.default_rng(11)
        diffs = []
        for _ in range(200):
            theta = rng.uniform(0.2, 0.6)
            x = np.where(rng.uniform(size=2000) < theta, 1, 2).tolist()
            diffs.append(codec.encode(x, BOX).bit_length - codec.encode(x, FULL2).bit_length)
        assert np.mean(diffs) <= 0.5


class TestErrors:
    def test_bad_symbol(self):
        with pytest.raises(DomainError):
            codec.encode([1, 3], FULL2)

    def test_bad_magic(self):
        buf = codec.encode([1, 2, 1], FULL2)
        with pytest.raises(CodecError, match="magic"):
            codec.decode(b"XXXX" + buf.data[4:], FULL2)

    def test_bad_version(self):
        data = bytearray(codec.encode([1, 2, 1], FULL2).data)
        data[4] = 99
        with pytest.raises(CodecError, match="version"):
            codec.decode(bytes(data), FULL2)

    def test_short_header(self):
        with pytest.raises(CodecError):
            codec.decode(b"PKT1\x01", FULL2)

    def test_alphabet_mismatch(self):
        buf = codec.encode([1, 2, 1], FULL2)
        with pytest.raises(CodecError, match="alphabet"):
            codec.decode(buf, ConstraintSet.full(3))

    def test_digest_mismatch(self):
        buf = codec.encode([1, 2, 1], BOX)
        with pytest.raises(CodecError, match="digest"):
            codec.decode(buf, ConstraintSet.box([0.2], [0.7]))

    def test_seed_mismatch(self):
        buf = codec.encode([1, 2, 1], BOX, seed=3)
        with pytest.raises(CodecError, match="seed"):
            codec.decode(buf, BOX, seed=4)

    def test_truncated(self):
        x = np.random.default_rng(0).integers(1, 3, size=500).tolist()
        buf = codec.encode(x, FULL2)
        with pytest.raises(CodecError):
            codec.decode(buf.data[: codec.HEADER_BYTES + 10], FULL2)

    def test_trailing_data_on_empty(self):
        with pytest.raises(CodecError):
            codec.decode(codec.encode([], FULL2).data + b"\x00", FULL2)

    def test_header_fields(self):
        buf = codec.encode([2, 2, 1], BOX, seed=77)
        m, n, seed, digest = codec.parse_header(buf.data)
        assert (m, n, seed, digest) == (2, 3, 77, BOX.digest())
        assert buf.total_bits == 8 * codec.HEADER_BYTES + buf.bit_length
