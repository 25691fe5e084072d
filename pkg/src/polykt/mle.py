"""Constrained maximum likelihood, Shtarkov sums and the NML distribution.

Every per-sequence quantity for a memoryless source depends on the sequence
only through its type ``k`` (the vector of symbol counts), so the Shtarkov sum
is evaluated over type classes weighted by multinomial coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import special as _sp

from . import specfn
from .constraints import ConstraintSet
from .errors import ConvergenceError, DomainError, EnumerationLimitError

ENUMERATION_GUARD = 100_000_000
FW_TOL = 1e-8
FW_MAX_ITER = 10_000
_BLOCK_ROWS = 1 << 20


def count_vector(k: Sequence[int], m: int | None = None) -> np.ndarray:
    """Validate a type (count vector) and return it as an int64 array."""
    arr = np.asarray(k)
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError("a count vector needs at least two entries")
    if not np.all(np.equal(np.mod(arr, 1), 0)) or np.any(arr < 0):
        raise DomainError("counts must be nonnegative integers")
    if m is not None and arr.size != m:
        raise DomainError(f"count vector has {arr.size} entries, expected {m}")
    return arr.astype(np.int64)


# water-filling ---------------------------------------------------------------


def _box_bounds(S: ConstraintSet) -> tuple[np.ndarray, np.ndarray]:
    # the last coordinate is only bounded by the simplex itself
    return np.append(S.lower, 0.0), np.append(S.upper, 1.0)


def waterfill(W: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Row-wise argmax of sum_i w_i ln theta_i over {lo <= theta <= hi, sum theta = 1}.

    ``W`` is an (N, m) array of nonnegative weights. The solution has the
    form theta_i = clip(w_i / lam, lo_i, hi_i). Coordinates with zero weight
    sit at their lower bound; if the weighted coordinates are all pinned at
    their upper bounds and mass is left over, it goes to the zero-weight
    coordinates from the highest index down, which gives the
    lexicographically smallest maximizer.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    N, m = W.shape
    # the problem is scale-free; unit row maxima keep the multiplier in range,
    # and relative weights below the normal range are treated as zero
    top = W.max(axis=1, keepdims=True)
    W = W / np.where(top > 0.0, top, 1.0)
    W[W < np.finfo(float).tiny] = 0.0
    pos = W > 0.0
    theta = np.empty_like(W)

    base = np.where(pos, hi, lo)
    base_sum = base.sum(axis=1)
    sat = base_sum <= 1.0
    if np.any(sat):
        t = base[sat].copy()
        excess = 1.0 - base_sum[sat]
        zero = ~pos[sat]
        for j in range(m - 1, -1, -1):
            room = np.where(zero[:, j], hi[j] - lo[j], 0.0)
            add = np.minimum(room, excess)
            t[:, j] += add
            excess -= add
        theta[sat] = t

    rows = ~sat
    if np.any(rows):
        w = W[rows]
        p = pos[rows]
        lo_sum = float(lo.sum())
        with np.errstate(divide="ignore"):
            ratio = np.where(p, w / np.where(hi > 0.0, hi, np.inf), np.inf)
        lam_lo = ratio.min(axis=1)
        lam_hi = w.sum(axis=1) / (1.0 - lo_sum)
        lam_lo = np.minimum(lam_lo, lam_hi)
        # geometric bisection isolates the clipping pattern; the exact
        # multiplier then follows in closed form from that pattern
        for _ in range(100):
            mid = np.sqrt(lam_lo) * np.sqrt(lam_hi)  # no underflow for tiny weights
            with np.errstate(over="ignore"):
                s = np.clip(w / mid[:, None], lo, hi).sum(axis=1)
            big = s > 1.0
            lam_lo = np.where(big, mid, lam_lo)
            lam_hi = np.where(big, lam_hi, mid)
        lam = np.sqrt(lam_lo) * np.sqrt(lam_hi)
        for _ in range(2 * m):
            with np.errstate(over="ignore"):
                raw = w / lam[:, None]
            free = p & (raw > lo) & (raw < hi)
            clipped = np.clip(raw, lo, hi)
            fixed_sum = np.where(free, 0.0, clipped).sum(axis=1)
            free_w = np.where(free, w, 0.0).sum(axis=1)
            ok = (free_w > 0.0) & (fixed_sum < 1.0)
            new = np.where(ok, free_w / np.where(ok, 1.0 - fixed_sum, 1.0), lam)
            if np.array_equal(new, lam):
                break
            lam = new
        with np.errstate(over="ignore"):
            t = np.clip(w / lam[:, None], lo, hi)
        free = p & (t > lo) & (t < hi)
        # hand the last rounding residue to a free coordinate
        resid = 1.0 - t.sum(axis=1)
        j = np.argmax(np.where(free, t, -1.0), axis=1)
        has = free.any(axis=1)
        idx = np.flatnonzero(has)
        t[idx, j[has]] += resid[has]
        theta[rows] = t
    return theta


# Frank-Wolfe over polytopes ------------------------------------------------


def _line_search(theta: np.ndarray, d: np.ndarray, w: np.ndarray, gmax: float) -> float:
    # maximize sum w_i ln(theta_i + g d_i) on [0, gmax]; the derivative is decreasing
    act = w > 0.0

    def deriv(g):
        x = theta[act] + g * d[act]
        if np.any(x <= 0.0):
            return -math.inf
        return float(np.sum(w[act] * d[act] / x))

    if deriv(gmax) >= 0.0:
        return gmax
    lo, hi = 0.0, gmax
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 * max(1.0, gmax):
            break
    return lo


def frank_wolfe(w: np.ndarray, V: np.ndarray, tol: float = FW_TOL, max_iter: int = FW_MAX_ITER) -> tuple[np.ndarray, float]:
    """Pairwise Frank-Wolfe for max sum w_i ln theta_i over conv(V).

    Returns (theta, duality gap). Starts from the vertex barycentre, which is
    interior whenever the hull has positive volume.
    """
    nv = V.shape[0]
    lam = np.full(nv, 1.0 / nv)
    theta = lam @ V
    act = w > 0.0
    gap = math.inf
    for _ in range(max_iter):
        grad = np.zeros_like(theta)
        grad[act] = w[act] / theta[act]
        scores = V @ grad
        fw = int(np.argmax(scores))
        gap = float(scores[fw] - grad @ theta)
        if gap <= tol:
            return theta, gap
        support = np.flatnonzero(lam > 0.0)
        away = int(support[np.argmin(scores[support])])
        d = V[fw] - V[away]
        gmax = float(lam[away])
        g = _line_search(theta, d, w, gmax)
        if g <= 0.0:
            break
        lam[fw] += g
        lam[away] -= g
        if g == gmax:
            lam[away] = 0.0
        theta = lam @ V
    raise ConvergenceError(f"Frank-Wolfe stopped with duality gap {gap:.3e} > {tol:.1e}", achieved=gap)


# public estimators -------------------------------------------------------------


def constrained_argmax(weights: Sequence[float], S: ConstraintSet) -> np.ndarray:
    """argmax over theta in S of sum_i w_i ln theta_i for nonnegative real weights."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (S.m,):
        raise DomainError(f"weights must have {S.m} entries")
    if np.any(w < 0.0) or not np.any(w > 0.0):
        raise DomainError("weights must be nonnegative and not all zero")
    free = w / w.sum()
    if S.is_full:
        return free
    if S.contains(free):
        return free
    if S.kind == "box":
        lo, hi = _box_bounds(S)
        return waterfill(w[None, :], lo, hi)[0]
    theta, _ = frank_wolfe(w, S.vertices())
    return theta


def constrained_mle(k: Sequence[int], S: ConstraintSet) -> np.ndarray:
    """Maximum-likelihood parameter for type ``k`` restricted to S.

    When k/n already lies in S it is returned as is, without any solver step.
    """
    k = count_vector(k, S.m)
    n = int(k.sum())
    if n < 1:
        raise DomainError("constrained_mle needs n >= 1")
    return constrained_argmax(k.astype(float), S)


def _loglik(k: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return _sp.xlogy(k, theta).sum(axis=-1)


def sup_log_prob(k: Sequence[int], S: ConstraintSet) -> float:
    """max over theta in S of sum_i k_i ln theta_i (natural log)."""
    k = count_vector(k, S.m)
    return float(_loglik(k, constrained_mle(k, S)))


def _sup_rows(K: np.ndarray, S: ConstraintSet) -> tuple[np.ndarray, np.ndarray]:
    """(sup log-likelihood, interior flag) for every type row of K."""
    n = int(K[0].sum())
    emp = K / n
    inside = S.contains_many(emp)
    out = _loglik(K, emp)
    if S.is_full or inside.all():
        return out, inside
    rows = np.flatnonzero(~inside)
    if S.kind == "box":
        lo, hi = _box_bounds(S)
        theta = waterfill(K[rows].astype(float), lo, hi)
        out[rows] = _loglik(K[rows], theta)
    else:
        V = S.vertices()
        for r in rows:
            theta, _ = frank_wolfe(K[r].astype(float), V)
            out[r] = _loglik(K[r], theta)
    return out, inside


# type enumeration ------------------------------------------------------------


def type_count(n: int, m: int) -> int:
    return math.comb(n + m - 1, m - 1)


def compositions(n: int, m: int) -> np.ndarray:
    """All count vectors of length m summing to n, as an int64 array."""
    if m == 1:
        return np.array([[n]], dtype=np.int64)
    if m == 2:
        k1 = np.arange(n + 1, dtype=np.int64)
        return np.stack([k1, n - k1], axis=1)
    parts = []
    for first in range(n + 1):
        tail = compositions(n - first, m - 1)
        parts.append(np.column_stack([np.full(tail.shape[0], first, dtype=np.int64), tail]))
    return np.vstack(parts)


def iter_types(n: int, m: int, guard: int = ENUMERATION_GUARD) -> Iterator[np.ndarray]:
    """Yield all types of length-n sequences over m symbols in blocks."""
    total = type_count(n, m)
    if total > guard:
        raise EnumerationLimitError(f"{total} type classes exceed the enumeration guard of {guard}")
    if total <= _BLOCK_ROWS or m == 2:
        yield compositions(n, m)
        return
    for first in range(n + 1):
        tail_count = type_count(n - first, m - 1)
        if tail_count <= _BLOCK_ROWS:
            tail = compositions(n - first, m - 1)
            yield np.column_stack([np.full(tail.shape[0], first, dtype=np.int64), tail])
        else:
            for block in iter_types(n - first, m - 1, guard):
                yield np.column_stack([np.full(block.shape[0], first, dtype=np.int64), block])


def log_multinomial(K: np.ndarray) -> np.ndarray:
    """Row-wise ln of n! / prod k_i!."""
    K = np.asarray(K)
    n = K.sum(axis=-1)
    return _sp.gammaln(n + 1.0) - _sp.gammaln(K + 1.0).sum(axis=-1)


# Shtarkov sum and NML ------------------------------------------------------------


@dataclass(frozen=True)
class ShtarkovResult:
    """ln S_n split into types with k/n inside S and the remainder."""

    n: int
    m: int
    log_sum: float
    log_interior_sum: float
    log_boundary_sum: float
    constraints_digest: bytes = b""

    @property
    def bits(self) -> float:
        return specfn.to_bits(self.log_sum)


def shtarkov_sum(n: int, S: ConstraintSet, guard: int = ENUMERATION_GUARD) -> ShtarkovResult:
    """Exact ln S_n by type-class enumeration in the log domain."""
    n = int(n)
    if n < 1:
        raise DomainError("shtarkov_sum needs n >= 1")
    inner: list[float] = []
    outer: list[float] = []
    for K in iter_types(n, S.m, guard):
        sup, inside = _sup_rows(K, S)
        terms = log_multinomial(K) + sup
        if inside.any():
            inner.append(specfn.log_sum_exp(terms[inside]))
        if (~inside).any():
            outer.append(specfn.log_sum_exp(terms[~inside]))
    li = specfn.log_sum_exp(inner) if inner else specfn.NEG_INF
    lb = specfn.log_sum_exp(outer) if outer else specfn.NEG_INF
    return ShtarkovResult(n, S.m, specfn.log_add(li, lb), li, lb, S.digest())


def nml_log_prob(k: Sequence[int], S: ConstraintSet, precomputed: ShtarkovResult | None = None) -> float:
    """ln P*(x^n) of any single sequence with type ``k`` under the NML distribution."""
    k = count_vector(k, S.m)
    n = int(k.sum())
    if precomputed is None:
        precomputed = shtarkov_sum(n, S)
    if precomputed.n != n or precomputed.m != S.m:
        raise DomainError(f"Shtarkov sum was computed for n={precomputed.n}, m={precomputed.m}")
    if precomputed.constraints_digest and precomputed.constraints_digest != S.digest():
        raise DomainError("Shtarkov sum was computed for a different constraint set")
    return sup_log_prob(k, S) - precomputed.log_sum
