"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

Each test records its line through the ``acceptance`` fixture (see conftest.py)
before asserting, so a failing criterion still shows up in the summary.
"""

import itertools
import math
import time

import numpy as np

from polykt import codec, mle
from polykt import redundancy as rd
from polykt.constraints import Backend, ConstraintSet, IntegrationConfig, dirichlet_measure, monte_carlo_measure
from polykt.estimator import ConstrainedKT, log_mixture_direct

LOG2E = math.log2(math.e)
BOX = ConstraintSet.box([0.2], [0.6])
LOG2_C_BOX = -1.8947135862632313  # mpmath arcsine mass of [0.2, 0.6], tests/oracles


def random_box2(rng, min_width=0.05):
    lo = rng.uniform(0.0, 0.8)
    hi = min(1.0, lo + rng.uniform(min_width, 0.5))
    return ConstraintSet.box([lo], [hi])


def test_kt_reduction(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, states = 0.0, 0
    for m in (2, 3, 8):
        S = ConstraintSet.full(m)
        for _ in range(3_334):
            s = ConstrainedKT(S)
            p = rng.dirichlet(np.ones(m))
            for sym in rng.choice(m, size=int(rng.integers(0, 40)), p=p) + 1:
                s.update(int(sym))
            want = (s.counts + 0.5) / (s.n + m / 2)
            worst = max(worst, float(np.max(np.abs(s.predict().probs - want))))
            states += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and states >= 10_000 and elapsed < 5
    acceptance("criterion 1 (KT reduction)", ok, f"max |diff| {worst:.1e} over {states} states, {elapsed:.1f} s")
    assert ok


def test_telescoping_exact_backend(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(500):
        S = random_box2(rng)
        s = ConstrainedKT(S)
        assert s.mode == "exact"
        n = int(rng.integers(1, 201))
        x = np.where(rng.uniform(size=n) < rng.uniform(), 1, 2).tolist()
        for sym in x:
            s.update(sym)
        direct = log_mixture_direct(x, S)
        worst = max(worst, abs(s.log_mixture - direct) * LOG2E)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30
    acceptance("criterion 2 (telescoping)", ok, f"max |diff| {worst:.1e} bits over 500 sequences, {elapsed:.1f} s")
    assert ok


def test_worst_case_full(acceptance):
    t0 = time.perf_counter()
    F = ConstraintSet.full(2)
    diffs = {n: abs(rd.worst_case_exact(n, F) - 0.5 * math.log2(n * math.pi / 2)) for n in (256, 1024, 4096)}
    elapsed = time.perf_counter() - t0
    ok = all(d <= 2 / math.sqrt(n) for n, d in diffs.items()) and elapsed < 60
    detail = ", ".join(f"n={n}: {d:.4f} <= {2 / math.sqrt(n):.4f}" for n, d in diffs.items())
    acceptance("criterion 3 (worst case, full simplex)", ok, f"{detail}, {elapsed:.1f} s")
    assert ok


def test_worst_case_box_shift(acceptance):
    t0 = time.perf_counter()
    n = 4096
    shift = rd.worst_case_exact(n, BOX) - rd.worst_case_exact(n, ConstraintSet.full(2))
    elapsed = time.perf_counter() - t0
    ok = abs(shift - LOG2_C_BOX) <= 0.1 and elapsed < 60
    acceptance("criterion 4 (box shift)", ok, f"shift {shift:.4f} vs log2 C {LOG2_C_BOX:.4f}, {elapsed:.1f} s")
    assert ok


def test_boundary_sum(acceptance):
    t0 = time.perf_counter()
    v = math.exp(mle.shtarkov_sum(10_000, BOX).log_boundary_sum)
    elapsed = time.perf_counter() - t0
    ok = abs(v - 1.0) <= 0.1 and elapsed < 60
    acceptance("criterion 5 (boundary sum)", ok, f"exp(log_boundary_sum) = {v:.4f}, {elapsed:.1f} s")
    assert ok


def test_average_exact(acceptance):
    t0 = time.perf_counter()
    F = ConstraintSet.full(2)
    pairs = {n: (rd.average_exact(n, F).bits, rd.average_exact_psi(n, 2)) for n in (1, 8, 32, 64)}
    agree = max(abs(a - b) for a, b in pairs.values())
    target = 0.5 * math.log2(64 / (2 * math.pi * math.e)) + math.log2(math.pi)
    near = max(abs(v - target) for v in pairs[64])
    elapsed = time.perf_counter() - t0
    ok = agree <= 1e-6 and near <= 0.15 and elapsed < 120
    acceptance(
        "criterion 6 (exact average)", ok,
        f"max disagreement {agree:.1e} bits, n=64 off by {near:.4f} from {target:.4f}, {elapsed:.1f} s",
    )
    assert ok


def test_worst_minus_average_identity(acceptance):
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(2, 7))
        n = float(rng.choice([rng.integers(1, 100), rng.integers(100, 10**7)]))
        if rng.uniform() < 0.3:
            S = ConstraintSet.full(m)
        else:
            lo = rng.uniform(0.0, 0.5 / m, size=m - 1)
            S = ConstraintSet.box(lo, lo + rng.uniform(0.2, 0.8, size=m - 1))
        cfg = IntegrationConfig(samples=20_000, seed=int(rng.integers(2**31)))
        gap = rd.worst_case_asymptotic(n, S, cfg) - rd.average_asymptotic(n, S, cfg)
        worst = max(worst, abs(gap - (m - 1) / 2 * LOG2E))
    ok = worst <= 1e-12
    acceptance("criterion 7 (worst minus average)", ok, f"max deviation {worst:.1e} over 100 (n, m, S)")
    assert ok


def test_mixture_regret_gap(acceptance):
    # the gap tends to 1/2 bit from below: the mixture pays 1/2 log2(pi n) on a
    # constant sequence against 1/2 log2(pi n / 2) for the minimax code
    t0 = time.perf_counter()
    F = ConstraintSet.full(2)
    ns = (64, 128, 256, 512)
    gaps = [rd.mixture_worst_regret(n, F) - rd.worst_case_exact(n, F) for n in ns]
    steps = np.diff(gaps)
    elapsed = time.perf_counter() - t0
    ok = (
        min(gaps) >= 0.0
        and max(gaps) <= 1.5
        and bool(np.all(np.diff(steps) <= 0))
        and max(gaps) <= 0.5
        and elapsed < 120
    )
    detail = ", ".join(f"n={n}: {g:.4f}" for n, g in zip(ns, gaps))
    acceptance("criterion 8 (mixture regret gap)", ok, f"{detail} (bounded, increments shrinking), {elapsed:.1f} s")
    assert ok


def test_cn_bounded(acceptance):
    t0 = time.perf_counter()
    F = ConstraintSet.full(2)
    vals = [rd.cn_gap(n, F) for n in range(16, 513)]
    elapsed = time.perf_counter() - t0
    ok = max(vals) <= 2.0 and elapsed < 120
    acceptance("criterion 9 (c_n bounded)", ok, f"max c_n {max(vals):.4f} bits over n=16..512, {elapsed:.1f} s")
    assert ok


def test_codec_round_trips(acceptance):
    t0 = time.perf_counter()
    F = ConstraintSet.full(2)
    lo_ex, hi_ex, count = math.inf, -math.inf, 0
    bad = 0
    for n in range(1, 11):
        for x in itertools.product((1, 2), repeat=n):
            buf = codec.encode(x, F)
            e = buf.bit_length - codec.codelength_bits(x, F)
            bad += codec.decode(buf, F) != list(x) or not 0.0 <= e <= codec.overhead_budget(n)
            lo_ex, hi_ex, count = min(lo_ex, e), max(hi_ex, e), count + 1
    rng = np.random.default_rng(1010)
    cfg = IntegrationConfig(samples=1000, quadrature_max_m=2)
    ideal_cfg = IntegrationConfig(samples=20_000, quadrature_max_m=2)
    for _ in range(1000):
        lo = rng.uniform(0.0, 0.2, size=3)
        S = ConstraintSet.box(lo, lo + rng.uniform(0.2, 0.6, size=3))
        theta = rng.dirichlet(np.ones(4))
        while not S.contains(theta):
            theta = rng.dirichlet(np.ones(4))
        x = (rng.choice(4, size=500, p=theta) + 1).tolist()
        seed = int(rng.integers(2**31))
        buf = codec.encode(x, S, cfg, seed)
        e = buf.bit_length - codec.codelength_bits(x, S, ideal_cfg)
        bad += codec.decode(buf, S, cfg, seed) != x or not 0.0 <= e <= codec.overhead_budget(500)
        lo_ex, hi_ex, count = min(lo_ex, e), max(hi_ex, e), count + 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and count == 3046 and elapsed < 120
    acceptance(
        "criterion 10 (codec)", ok,
        f"{count} round trips, {bad} failures, excess in [{lo_ex:.2f}, {hi_ex:.2f}] bits, {elapsed:.1f} s",
    )
    assert ok


def test_monte_carlo_against_exact(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1111)
    worst = 0.0
    for i in range(100):
        S = random_box2(rng)
        alpha = rng.uniform(0.3, 30.0, size=2)
        exact = dirichlet_measure(S, alpha)
        assert exact.backend is Backend.EXACT
        est = monte_carlo_measure(S, alpha, IntegrationConfig(seed=i))
        worst = max(worst, abs(est.value - exact.value) / est.std_error)
    elapsed = time.perf_counter() - t0
    ok = worst <= 4.0 and elapsed < 60
    acceptance("criterion 11 (Monte Carlo vs exact)", ok, f"max |error| {worst:.2f} SE over 100 instances, {elapsed:.1f} s")
    assert ok


def test_large_alphabet_formula(acceptance):
    t0 = time.perf_counter()
    diffs = {}
    for n, m in ((4096, 2), (2048, 3)):
        diffs[(n, m)] = abs(rd.unconstrained_large_m(n, m, "worst") - rd.worst_case_exact(n, ConstraintSet.full(m)))
    pair = max(
        abs(rd.unconstrained_large_m(n, m, "worst") - rd.unconstrained_large_m(n, m, "average") - (m - 1) / 2 * LOG2E)
        for n, m in ((4096, 2), (2048, 3), (10**6, 10), (50, 40))
    )
    elapsed = time.perf_counter() - t0
    ok = max(diffs.values()) <= 1.0 and pair <= 1e-12
    detail = ", ".join(f"(n={n}, m={m}): {d:.4f}" for (n, m), d in diffs.items())
    acceptance("large-alphabet formula", ok, f"{detail}; pair identity off by {pair:.1e}, {elapsed:.1f} s")
    assert ok
