import math

import numpy as np
import pytest
from scipy import integrate, stats

from polykt import redundancy as rd
from polykt.constraints import ConstraintSet, IntegrationConfig
from polykt.errors import DomainError

FULL2 = ConstraintSet.full(2)
BOX = ConstraintSet.box([0.2], [0.6])
LOG2_C_BOX = -1.8947135862632313  # mpmath, tests/oracles
LOG2E = math.log2(math.e)


class TestAsymptotic:
    def test_worst_full(self):
        assert rd.worst_case_asymptotic(1024, FULL2) == pytest.approx(0.5 * math.log2(1024 * math.pi / 2), abs=1e-12)

    def test_worst_box_shift(self):
        base = rd.worst_case_asymptotic(1024, FULL2)
        assert rd.worst_case_asymptotic(1024, BOX) - base == pytest.approx(LOG2_C_BOX, abs=1e-12)

    def test_average_full(self):
        want = 0.5 * math.log2(1024 * math.pi / (2 * math.e))
        assert rd.average_asymptotic(1024, FULL2) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("m", [2, 3, 5, 9])
    def test_worst_minus_average(self, m):
        S = ConstraintSet.full(m)
        gap = rd.worst_case_asymptotic(500, S) - rd.average_asymptotic(500, S)
        assert gap == pytest.approx((m - 1) / 2 * LOG2E, abs=1e-12)

    def test_large_m_pair(self):
        for n, m in [(10**6, 10), (4096, 2), (2048, 3)]:
            gap = rd.unconstrained_large_m(n, m, "worst") - rd.unconstrained_large_m(n, m, "average")
            assert gap == pytest.approx((m - 1) / 2 * LOG2E, abs=1e-12)

    def test_large_m_monotone(self):
        vals = [rd.unconstrained_large_m(n, 10) for n in (10**6, 10**7, 10**8)]
        assert 0 < vals[0] < vals[1] < vals[2]

    def test_pre_stirling(self):
        want = 0.5 * math.log2(64 / (2 * math.pi * math.e)) + math.log2(math.pi)
        assert rd.unconstrained_average_pre_stirling(64, 2) == pytest.approx(want, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            rd.worst_case_asymptotic(0, FULL2)
        with pytest.raises(DomainError):
            rd.unconstrained_large_m(100, 3, "median")


class TestExactWorst:
    def test_small(self):
        assert rd.worst_case_exact(1, FULL2) == pytest.approx(1.0, abs=1e-15)
        assert rd.worst_case_exact(2, FULL2) == pytest.approx(math.log2(2.5), abs=1e-14)
        assert rd.worst_case_exact(2, BOX) == pytest.approx(math.log2(1.5), abs=1e-14)

    def test_approaches_asymptote(self):
        gaps = [abs(rd.worst_case_exact(n, FULL2) - rd.worst_case_asymptotic(n, FULL2)) for n in (64, 256, 1024)]
        assert gaps[0] > gaps[1] > gaps[2]


def constrained_average_oracle(n, lo, hi):
    """scipy quad of D(P^theta || M) against the truncated arcsine prior (bits)."""
    w = lambda t: 1.0 / (math.pi * math.sqrt(t * (1 - t)))
    C = integrate.quad(w, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
    M = []
    for k in range(n + 1):
        f = lambda t: t**k * (1 - t) ** (n - k) * w(t)
        M.append(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0] / C)
    logM = np.log(M)

    def D(t):
        pmf = stats.binom.pmf(np.arange(n + 1), n, t)
        ll = np.array([k * math.log(t) + (n - k) * math.log1p(-t) for k in range(n + 1)])
        return float(np.sum(pmf * (ll - logM))) / math.log(2)

    return integrate.quad(lambda t: D(t) * w(t), lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0] / C


class TestExactAverage:
    def test_n1_closed_form(self):
        # D averaged over the arcsine law equals 1 - ln 2 nats
        assert rd.average_exact(1, FULL2).bits == pytest.approx(LOG2E - 1.0, abs=1e-10)
        assert rd.average_exact_psi(1, 2) == pytest.approx(LOG2E - 1.0, abs=1e-10)

    @pytest.mark.parametrize("n", [1, 8, 32, 64])
    def test_psi_cross_oracle(self, n):
        assert rd.average_exact(n, FULL2).bits == pytest.approx(rd.average_exact_psi(n, 2), abs=1e-6)

    def test_n64_near_asymptote(self):
        v = rd.average_exact(64, FULL2).bits
        assert abs(v - rd.average_asymptotic(64, FULL2)) <= 0.15
        assert abs(v - rd.unconstrained_average_pre_stirling(64, 2)) <= 0.15

    @pytest.mark.parametrize("n", [3, 10])
    def test_box_against_scipy(self, n):
        assert rd.average_exact(n, BOX).bits == pytest.approx(constrained_average_oracle(n, 0.2, 0.6), abs=1e-8)

    def test_sampled_m3(self):
        est = rd.average_exact(6, ConstraintSet.full(3), IntegrationConfig(samples=20_000, seed=3))
        assert est.std_error > 0
        assert abs(est.bits - rd.average_exact_psi(6, 3)) <= 4 * est.std_error

    def test_psi_m3_below_worst(self):
        for n in (4, 16):
            assert rd.average_exact_psi(n, 3) < rd.worst_case_exact(n, ConstraintSet.full(3))


class TestMixtureRegret:
    def test_n2(self):
        # regrets of the three types: log2(8/3), 1, log2(8/3)
        assert rd.mixture_worst_regret(2, FULL2) == pytest.approx(math.log2(8 / 3), abs=1e-13)

    def test_at_least_minimax(self):
        for n in (5, 20, 80):
            assert rd.mixture_worst_regret(n, FULL2) >= rd.worst_case_exact(n, FULL2) - 1e-12
            assert rd.mixture_worst_regret(n, BOX) >= rd.worst_case_exact(n, BOX) - 1e-12


class TestCn:
    def test_n1_full(self):
        assert rd.cn_gap(1, FULL2) == pytest.approx(1.0, abs=1e-9)

    def test_n1_box(self):
        # sup over [.2,.6] of theta lg(0.6/theta) + (1-theta) lg(0.8/(1-theta)); optimum at 3/7
        assert rd.cn_gap(1, BOX) == pytest.approx(math.log2(1.4), abs=1e-9)

    def test_bounded(self):
        assert 0 < rd.cn_gap(100, FULL2) < 2
        assert 0 < rd.cn_gap(10, ConstraintSet.full(3)) < 3


class TestReport:
    def test_row(self):
        rep = rd.redundancy_report(1, FULL2)
        row = dict(zip(rd.CSV_COLUMNS, rep.csv_row()))
        assert row["n"] == "1" and row["m"] == "2"
        assert float(row["exact_worst"]) == 1.0
        assert float(row["log2_C"]) == 0.0
        assert row["exact_avg"] == "" and row["cn_gap"] == ""

    def test_box_log2c_negative(self):
        rep = rd.redundancy_report(8, BOX, columns=["log2_C"])
        assert rep.log2_C == pytest.approx(LOG2_C_BOX, abs=1e-12)

    def test_errors_recorded(self):
        rep = rd.redundancy_report(10**6, ConstraintSet.full(6), columns=["asym_worst", "exact_worst"])
        assert rep.asym_worst is not None and rep.exact_worst is None
        assert len(rep.errors) == 1 and rep.errors[0].startswith("exact_worst")

    def test_unknown_column(self):
        with pytest.raises(DomainError):
            rd.redundancy_report(4, FULL2, columns=["bogus"])
