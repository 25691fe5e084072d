"""Log-domain special functions.

Everything here works in natural logarithms. Conversion to bits happens only
where results are reported.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special as _sp

from .errors import DomainError

NEG_INF = -math.inf
LN2 = math.log(2.0)

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 100_000


def log_gamma(x):
    """ln Gamma(x) for positive scalars or arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if not x > 0.0:
            raise DomainError(f"log_gamma requires x > 0, got {x!r}")
        return math.lgamma(x)
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0.0):
        raise DomainError("log_gamma requires every x > 0")
    return _sp.gammaln(arr)


def log_beta(alpha: Sequence[float]) -> float:
    """ln B(alpha) = sum ln Gamma(alpha_i) - ln Gamma(sum alpha_i)."""
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise DomainError("log_beta needs a vector of length >= 2")
    if not np.all(a > 0.0):
        raise DomainError("log_beta requires every alpha_i > 0")
    return math.fsum(math.lgamma(v) for v in a) - math.lgamma(math.fsum(a))


def log_beta_rows(alpha: np.ndarray) -> np.ndarray:
    """Row-wise ln B for a 2-D array of parameters (no validation)."""
    alpha = np.asarray(alpha, dtype=float)
    return _sp.gammaln(alpha).sum(axis=-1) - _sp.gammaln(alpha.sum(axis=-1))


def digamma(x):
    """Psi(x) = Gamma'(x)/Gamma(x) for x > 0 (scalar or array).

    Upward recurrence to x >= 10, then the asymptotic Bernoulli series.
    """
    scalar = np.ndim(x) == 0
    v = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    if not np.all(v > 0.0):
        raise DomainError("digamma requires x > 0")
    # the 1/x term for x < 1 dominates; it is subtracted last to keep it exact
    lead = np.where(v < 1.0, 1.0 / v, 0.0)
    v = np.where(v < 1.0, v + 1.0, v)
    acc = np.zeros_like(v)
    small = v < 10.0
    while np.any(small):
        acc[small] -= 1.0 / v[small]
        v[small] += 1.0
        small = v < 10.0
    inv2 = 1.0 / (v * v)
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
        1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12.0))))))
    out = (acc + np.log(v) - 0.5 / v - series) - lead
    return float(out[0]) if scalar else out


def log_sum_exp(values) -> float:
    """Stable ln sum exp(v_i); exactly -inf when every input is -inf."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("log_sum_exp of an empty vector")
    top = float(v.max())
    if top == NEG_INF:
        return NEG_INF
    if top == math.inf:
        return math.inf
    return top + math.log(float(np.sum(np.exp(v - top))))


def log_add(a: float, b: float) -> float:
    """ln(e^a + e^b) for two scalars."""
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


def log_sub(a: float, b: float) -> float:
    """ln(e^a - e^b) for a >= b; -inf when equal."""
    if b > a:
        if b - a < 1e-12 * max(1.0, abs(a)):
            return NEG_INF
        raise DomainError("log_sub needs a >= b")
    if b == NEG_INF:
        return a
    d = b - a
    if d == 0.0:
        return NEG_INF
    return a + math.log(-math.expm1(d))


def _betacf(x: float, a: float, b: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for i in range(1, _CF_MAXIT + 1):
        i2 = 2 * i
        aa = i * (b - i) * x / ((qam + i2) * (a + i2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + i) * (qab + i) * x / ((a + i2) * (qap + i2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise DomainError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def _check_beta_args(x: float, a: float, b: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"reg_inc_beta requires 0 <= x <= 1, got {x!r}")
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"reg_inc_beta requires a, b > 0, got a={a!r}, b={b!r}")


def log_reg_inc_beta_pair(x: float, a: float, b: float) -> tuple[float, float]:
    """Return (ln I_x(a,b), ln(1 - I_x(a,b))), each accurate in its own tail.

    The continued fraction is evaluated on whichever side converges fast and
    the complement is obtained with log1p, so tiny tail masses keep full
    relative precision instead of underflowing.
    """
    x = float(x)
    a = float(a)
    b = float(b)
    _check_beta_args(x, a, b)
    if x == 0.0:
        return NEG_INF, 0.0
    if x == 1.0:
        return 0.0, NEG_INF
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    if x < (a + 1.0) / (a + b + 2.0):
        lo = a * math.log(x) + b * math.log1p(-x) - lbeta + math.log(_betacf(x, a, b)) - math.log(a)
        lo = min(lo, 0.0)
        return lo, _log1m_exp(lo)
    hi = b * math.log1p(-x) + a * math.log(x) - lbeta + math.log(_betacf(1.0 - x, b, a)) - math.log(b)
    hi = min(hi, 0.0)
    return _log1m_exp(hi), hi


def _log1m_exp(v: float) -> float:
    # ln(1 - e^v) for v <= 0
    if v == NEG_INF:
        return 0.0
    if v == 0.0:
        return NEG_INF
    if v > -LN2:
        return math.log(-math.expm1(v))
    return math.log1p(-math.exp(v))


def log_reg_inc_beta(x: float, a: float, b: float) -> float:
    """ln I_x(a, b)."""
    return log_reg_inc_beta_pair(x, a, b)[0]


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    lo, hi = log_reg_inc_beta_pair(x, a, b)
    if lo < hi:
        return math.exp(lo)
    return -math.expm1(hi)


def log_beta_interval_mass(lo: float, hi: float, a: float, b: float) -> float:
    """ln P(lo <= X <= hi) for X ~ Beta(a, b), robust when the mass is tiny.

    Whichever representation (lower tail difference, upper tail difference or
    one minus both tails) avoids cancellation best is used.
    """
    lo = max(0.0, float(lo))
    hi = min(1.0, float(hi))
    if hi < lo:
        return NEG_INF
    if hi == lo:
        return NEG_INF
    f_lo, g_lo = log_reg_inc_beta_pair(lo, a, b)
    f_hi, g_hi = log_reg_inc_beta_pair(hi, a, b)
    if f_hi <= -LN2:
        return log_sub(f_hi, f_lo) if f_lo < f_hi else NEG_INF
    if g_lo <= -LN2:
        return log_sub(g_lo, g_hi) if g_hi < g_lo else NEG_INF
    outside = log_add(f_lo, g_hi)
    return _log1m_exp(min(outside, 0.0))


def to_bits(nats):
    """Convert natural-log quantities to bits."""
    return nats / LN2
