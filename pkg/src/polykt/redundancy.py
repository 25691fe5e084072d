"""Exact and asymptotic minimax redundancies, in bits.

Internal arithmetic is in nats; every public function returns bits.

Worst-case (maximal) redundancy is log2 of the Shtarkov sum. The average
redundancy is the Bayes risk of the mixture under the truncated Jeffreys
prior w*(theta), i.e. the integral over S of D(P^theta || M) dw*(theta).
That is the redundancy *of this prior's mixture*; the prior is only
asymptotically the maximin one, so at finite n the value is a lower bound on
the true minimax average redundancy, not an upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy import special as _sp

from . import specfn
from ._quadrature import gk21
from .constraints import DEFAULT_CONFIG, ConstraintSet, IntegrationConfig, dirichlet_measure, jeffreys_constant, sample_dirichlet
from .errors import DomainError, EnumerationLimitError
from .mle import ENUMERATION_GUARD, _sup_rows, compositions, iter_types, log_multinomial, shtarkov_sum, type_count

LOG2E = 1.0 / specfn.LN2
GRID_STEP = 1e-3


@dataclass(frozen=True)
class Estimate:
    """A value in bits with the standard error of a sampled backend (0 if deterministic)."""

    bits: float
    std_error: float = 0.0

    def __float__(self):
        return self.bits


# asymptotic formulas -------------------------------------------------------------


def _log_c(S: ConstraintSet, cfg: IntegrationConfig | None) -> float:
    return 0.0 if S.is_full else jeffreys_constant(S, cfg).log_value


def _fixed_m_formula(n: float, m: int, log_c: float, average: bool) -> float:
    scale = n / (2.0 * math.e) if average else n / 2.0
    nats = (m - 1) / 2.0 * math.log(scale) - math.lgamma(m / 2.0) + log_c + 0.5 * math.log(math.pi)
    return specfn.to_bits(nats)


def worst_case_asymptotic(n: float, S: ConstraintSet, cfg: IntegrationConfig | None = None) -> float:
    """(m-1)/2 log(n/2) - log Gamma(m/2) + log C(S) + 1/2 log pi, in bits."""
    if n <= 0:
        raise DomainError("n must be positive")
    return _fixed_m_formula(n, S.m, _log_c(S, cfg), average=False)


def average_asymptotic(n: float, S: ConstraintSet, cfg: IntegrationConfig | None = None) -> float:
    """The worst-case formula with n/2 replaced by n/(2e), in bits."""
    if n <= 0:
        raise DomainError("n must be positive")
    return _fixed_m_formula(n, S.m, _log_c(S, cfg), average=True)


def unconstrained_large_m(n: float, m: int, kind: str = "worst") -> float:
    """Large-alphabet unconstrained redundancy (regime m = o(n)), in bits.

    worst:   (m-1)/2 log(e n / m) + (1 - log 2)/2
    average: (m-1)/2 log(n / m)   + (1 - log 2)/2
    """
    if n <= 0 or m < 2:
        raise DomainError("need n > 0 and m >= 2")
    tail = 0.5 * (1.0 - math.log(2.0))
    if kind == "worst":
        nats = (m - 1) / 2.0 * math.log(math.e * n / m) + tail
    elif kind == "average":
        nats = (m - 1) / 2.0 * math.log(n / m) + tail
    else:
        raise DomainError(f"kind must be 'worst' or 'average', got {kind!r}")
    return specfn.to_bits(nats)


def unconstrained_average_pre_stirling(n: float, m: int) -> float:
    """(m-1)/2 log(n / (2 pi e)) + log(Gamma(1/2)^m / Gamma(m/2)), in bits."""
    nats = (m - 1) / 2.0 * math.log(n / (2.0 * math.pi * math.e)) + m * math.lgamma(0.5) - math.lgamma(m / 2.0)
    return specfn.to_bits(nats)


# exact worst case ------------------------------------------------------------------


def worst_case_exact(n: int, S: ConstraintSet, guard: int = ENUMERATION_GUARD) -> float:
    """log2 S_n by exact type enumeration."""
    return shtarkov_sum(n, S, guard).bits


# mixture over types ------------------------------------------------------------------


def _log_mixture_table(K: np.ndarray, S: ConstraintSet, cfg: IntegrationConfig) -> tuple[np.ndarray, np.ndarray]:
    """ln M(k) for every type row and its standard error (nats)."""
    A = K + 0.5
    core = specfn.log_beta_rows(A) - specfn.log_beta_rows(np.full((1, S.m), 0.5))[0]
    if S.is_full:
        return core, np.zeros(K.shape[0])
    c = jeffreys_constant(S, cfg)
    c_rel = c.std_error / c.value if c.std_error else 0.0
    out = np.empty(K.shape[0])
    se = np.empty(K.shape[0])
    for r, a in enumerate(A):
        d = dirichlet_measure(S, a, cfg)
        out[r] = core[r] - c.log_value + d.log_value
        se[r] = math.hypot(c_rel, d.std_error / d.value if d.std_error else 0.0)
    return out, se


def mixture_worst_regret(n: int, S: ConstraintSet, cfg: IntegrationConfig | None = None,
                         guard: int = ENUMERATION_GUARD) -> float:
    """max over sequences of log2 [sup_{theta in S} P^theta(x^n) / M(x^n)]."""
    cfg = cfg or DEFAULT_CONFIG
    best = -math.inf
    for K in iter_types(n, S.m, guard):
        sup, _ = _sup_rows(K, S)
        lm, _ = _log_mixture_table(K, S, cfg)
        best = max(best, float(np.max(sup - lm)))
    return specfn.to_bits(best)


# exact average case ----------------------------------------------------------------


def average_exact_psi(n: int, m: int, guard: int = ENUMERATION_GUARD) -> float:
    """Unconstrained average redundancy through the digamma identity, in bits.

    R = sum_k w_k [ sum_i k_i (psi(k_i + 1/2) - psi(n + m/2)) - ln B(k + 1/2) + ln B(1/2) ]
    with w_k = multinomial(n; k) B(k + 1/2) / B(1/2), the prior predictive of type k.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    lb_half = m * math.lgamma(0.5) - math.lgamma(m / 2.0)
    psi_n = specfn.digamma(n + m / 2.0)
    total = 0.0
    for K in iter_types(n, m, guard):
        A = K + 0.5
        lbk = specfn.log_beta_rows(A)
        logw = log_multinomial(K) + lbk - lb_half
        inner = (K * (specfn.digamma(A) - psi_n)).sum(axis=1) - lbk + lb_half
        total += math.fsum(np.exp(logw) * inner)
    return specfn.to_bits(total)


def _kl_profile(theta1: np.ndarray, n: int, log_m: np.ndarray) -> np.ndarray:
    # D(P^theta || M) for m = 2 at each theta1, over types k1 = 0..n
    k = np.arange(n + 1)
    t = theta1[:, None]
    log_p = _sp.xlogy(k, t) + _sp.xlog1py(n - k, -t)
    pmf = np.exp(log_multinomial(np.stack([k, n - k], axis=1))[None, :] + log_p)
    log_p = np.where(pmf > 0.0, log_p, 0.0)
    return np.sum(pmf * (log_p - log_m[None, :]), axis=1)


def average_exact(n: int, S: ConstraintSet, cfg: IntegrationConfig | None = None,
                  guard: int = ENUMERATION_GUARD) -> Estimate:
    """Integral over S of D(P^theta || M) dw*(theta), in bits.

    For m = 2 the prior integral is one-dimensional quadrature after the
    substitution theta = sin^2(phi), which turns the arcsine density into a
    constant. For larger alphabets theta is drawn from w* (Dirichlet(1/2)
    draws kept when inside S) and the reported error is the sample standard
    error.
    """
    cfg = cfg or DEFAULT_CONFIG
    if n < 1:
        raise DomainError("n must be >= 1")
    if type_count(n, S.m) > guard:
        raise EnumerationLimitError("type enumeration exceeds the guard")
    K = compositions(n, S.m)
    log_m, m_se = _log_mixture_table(K, S, cfg)
    if S.m == 2:
        if S.kind == "polytope":
            lo, hi = _interval_of(S)
        else:
            lo, hi = (0.0, 1.0) if S.is_full else (float(S.lower[0]), float(S.upper[0]))
        p_lo, p_hi = math.asin(math.sqrt(lo)), math.asin(math.sqrt(hi))
        c = 1.0 if S.is_full else jeffreys_constant(S, cfg).value

        def f(phi):
            return _kl_profile(np.sin(phi) ** 2, n, log_m)

        val, _ = gk21(f, p_lo, p_hi, rtol=1e-12, atol=1e-15)
        nats = 2.0 / (math.pi * c) * val
        return Estimate(specfn.to_bits(nats), specfn.to_bits(float(np.max(m_se))))
    # sampled backend
    draws = sample_dirichlet(np.full(S.m, 0.5), cfg.samples, cfg.seed)
    draws = draws[S.contains_many(draws)]
    if draws.shape[0] < 2:
        raise DomainError("too few prior draws fell inside S")
    logpmf_base = log_multinomial(K)
    vals = np.concatenate([
        np.sum(np.exp(logpmf_base + lp) * (lp - log_m), axis=1)
        for lp in (_sp.xlogy(K[None, :, :], chunk[:, None, :]).sum(axis=2)
                   for chunk in np.array_split(draws, max(1, draws.shape[0] * K.shape[0] // 1_000_000)))
    ])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    return Estimate(specfn.to_bits(mean), specfn.to_bits(math.hypot(se, float(np.max(m_se)))))


def _interval_of(S: ConstraintSet) -> tuple[float, float]:
    V = S.vertices()
    return float(V[:, 0].min()), float(V[:, 0].max())


# c_n gap -------------------------------------------------------------------------------


def _cn_objective(thetas: np.ndarray, K: np.ndarray, sup: np.ndarray, log_mult: np.ndarray) -> np.ndarray:
    # E_theta[ sup log P - log P^theta ] for each row of thetas
    log_p = _sp.xlogy(K[None, :, :], thetas[:, None, :]).sum(axis=2)
    pmf = np.exp(log_mult[None, :] + log_p)
    # types of probability zero contribute nothing (avoids 0 * inf)
    log_p = np.where(pmf > 0.0, log_p, 0.0)
    return np.sum(pmf * (sup[None, :] - log_p), axis=1)


def cn_gap(n: int, S: ConstraintSet, cfg: IntegrationConfig | None = None, grid_step: float = GRID_STEP,
           guard: int = ENUMERATION_GUARD) -> float:
    """c_n(S) = sup over theta in S of E_theta[log2 sup_S P(X^n) / P^theta(X^n)].

    The supremum is located on a grid (step ``grid_step`` per coordinate for
    m = 2, a coarser simplex lattice otherwise) and refined locally
    (bounded Brent search for m = 2, Nelder-Mead otherwise).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if type_count(n, S.m) > guard:
        raise EnumerationLimitError("type enumeration exceeds the guard")
    K = compositions(n, S.m)
    sup, _ = _sup_rows(K, S)
    log_mult = log_multinomial(K)

    def obj(thetas):
        return _cn_objective(np.atleast_2d(thetas), K, sup, log_mult)

    if S.m == 2:
        if S.is_full:
            lo, hi = 0.0, 1.0
        elif S.kind == "box":
            lo, hi = float(S.lower[0]), float(S.upper[0])
        else:
            lo, hi = _interval_of(S)
        steps = max(2, int(math.ceil((hi - lo) / grid_step)))
        grid = np.linspace(lo, hi, steps + 1)
        vals = np.concatenate([obj(np.stack([chunk, 1.0 - chunk], axis=1)) for chunk in np.array_split(grid, max(1, grid.size // 256))])
        j = int(np.argmax(vals))
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
        res = optimize.minimize_scalar(
            lambda t: -float(obj(np.array([[t, 1.0 - t]]))[0]), bounds=(a, b), method="bounded",
            options={"xatol": 1e-10},
        )
        best = max(float(vals[j]), -float(res.fun))
        return specfn.to_bits(best)
    lattice = compositions(40, S.m) / 40.0
    lattice = lattice[S.contains_many(lattice)]
    if lattice.shape[0] == 0:
        lattice = S.vertices().mean(axis=0, keepdims=True)
    vals = np.concatenate([obj(chunk) for chunk in np.array_split(lattice, max(1, lattice.shape[0] // 64))])
    start = lattice[int(np.argmax(vals))]

    def neg(z):
        t = np.append(z, 1.0 - z.sum())
        if np.any(t < 0.0) or not S.contains(t):
            return math.inf
        return -float(obj(t)[0])

    res = optimize.minimize(neg, start[:-1], method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12})
    best = max(float(vals.max()), -float(res.fun) if np.isfinite(res.fun) else -math.inf)
    return specfn.to_bits(best)


# report ------------------------------------------------------------------------------

CSV_COLUMNS = (
    "n", "m", "constraints_id", "log2_C", "exact_worst", "asym_worst", "asym_avg", "exact_avg",
    "mixture_worst_regret", "cn_gap",
)


@dataclass
class RedundancyReport:
    n: int
    m: int
    constraints_id: str
    log2_C: float | None = None
    exact_worst: float | None = None
    asym_worst: float | None = None
    asym_avg: float | None = None
    exact_avg: float | None = None
    mixture_worst_regret: float | None = None
    cn_gap: float | None = None
    errors: list[str] = field(default_factory=list)

    def csv_row(self) -> list[str]:
        row = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if v is None:
                row.append("")
            elif isinstance(v, float):
                row.append(repr(v))
            else:
                row.append(str(v))
        return row


def redundancy_report(n: int, S: ConstraintSet, cfg: IntegrationConfig | None = None,
                      columns: Sequence[str] = ("log2_C", "exact_worst", "asym_worst", "asym_avg")) -> RedundancyReport:
    """Evaluate the requested columns; a failing column is left empty and its error recorded."""
    cfg = cfg or DEFAULT_CONFIG
    rep = RedundancyReport(n, S.m, S.digest().hex())
    jobs = {
        "log2_C": lambda: specfn.to_bits(_log_c(S, cfg)),
        "exact_worst": lambda: worst_case_exact(n, S),
        "asym_worst": lambda: worst_case_asymptotic(n, S, cfg),
        "asym_avg": lambda: average_asymptotic(n, S, cfg),
        "exact_avg": lambda: average_exact(n, S, cfg).bits,
        "mixture_worst_regret": lambda: mixture_worst_regret(n, S, cfg),
        "cn_gap": lambda: cn_gap(n, S, cfg),
    }
    for col in columns:
        if col not in jobs:
            raise DomainError(f"unknown report column {col!r}")
        try:
            setattr(rep, col, float(jobs[col]()))
        except Exception as exc:  # reported in-row; the run carries on
            rep.errors.append(f"{col}: {exc}")
    return rep
