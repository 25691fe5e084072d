"""Incremental Monte Carlo estimate of the constrained posterior mean.

A Dirichlet(alpha) draw is a normalized vector of independent Gamma(alpha_i)
variates, and Gamma(a) + Exp(1) is Gamma(a + 1). The sampler therefore keeps
one bank of Gamma variates and, when symbol i is observed, adds a fresh
Exp(1) variate to coordinate i of every sample. After every step the bank is
an exact i.i.d. sample from the current posterior Dirichlet(counts + 1/2), at
O(samples) cost instead of O(samples * m) fresh Gamma draws.

All randomness comes from per-block derived seeds, so two samplers built
with the same seed and fed the same symbols agree bit for bit.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .constraints import TOL, ConstraintSet

_BLOCK = 64


@numba.njit(cache=True)
def _step(G, tot, e, i, lower, upper, A, d, tol, mean, se):
    """Optionally add ``e`` to coordinate ``i`` (skipped when i < 0), then scan.

    Fills ``mean`` and ``se`` with the in-S sample mean and its standard error
    and returns the number of samples inside S.
    """
    N, m = G.shape
    if i >= 0:
        for s in range(N):
            G[s, i] += e[s]
            tot[s] += e[s]
    r = A.shape[0]
    acc = np.zeros(m)
    acc2 = np.zeros(m)
    theta = np.empty(m)
    hits = 0
    for s in range(N):
        inv = 1.0 / tot[s]
        ok = True
        for j in range(m):
            t = G[s, j] * inv
            theta[j] = t
            if t < lower[j] - tol or t > upper[j] + tol:
                ok = False
                break
        if ok:
            for q in range(r):
                v = 0.0
                for j in range(m):
                    v += A[q, j] * theta[j]
                if v > d[q] + tol:
                    ok = False
                    break
        if ok:
            hits += 1
            for j in range(m):
                acc[j] += theta[j]
                acc2[j] += theta[j] * theta[j]
    for j in range(m):
        if hits == 0:
            mean[j] = np.nan
            se[j] = np.inf
        else:
            mu = acc[j] / hits
            mean[j] = mu
            if hits < 2:
                se[j] = np.inf
            else:
                var = (acc2[j] - hits * mu * mu) / (hits - 1)
                se[j] = np.sqrt(max(var, 0.0) / hits)
    return hits


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**63 - 1), *key])))


class IncrementalSampler:
    """Gamma-variate bank tracking Dirichlet(counts + 1/2) along a sequence."""

    def __init__(self, S: ConstraintSet, samples: int, seed: int):
        self.m = S.m
        self.samples = int(samples)
        self.seed = int(seed)
        if S.kind == "box":
            self._lower = np.append(S.lower, 0.0)
            self._upper = np.append(S.upper, 1.0)
            self._A = np.zeros((0, S.m))
            self._d = np.zeros(0)
        else:
            self._lower = np.zeros(S.m)
            self._upper = np.ones(S.m)
            A, d = S.halfspaces()
            self._A = np.ascontiguousarray(A, dtype=float)
            self._d = np.ascontiguousarray(d, dtype=float)
        self._G = _rng(seed, 0).standard_gamma(0.5, size=(self.samples, self.m))
        self._tot = self._G.sum(axis=1)
        self.step = 0
        self._block_id = -1
        self._block = None

    def _exponentials(self, step: int) -> np.ndarray:
        b = step // _BLOCK
        if b != self._block_id:
            self._block = _rng(self.seed, 1, b).standard_exponential((_BLOCK, self.samples))
            self._block_id = b
        return self._block[step % _BLOCK]

    def _run(self, i: int, e: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
        mean = np.empty(self.m)
        se = np.empty(self.m)
        hits = _step(self._G, self._tot, e, i, self._lower, self._upper, self._A, self._d, TOL, mean, se)
        return hits, mean, se

    def advance(self, symbol: int) -> tuple[int, np.ndarray, np.ndarray]:
        """Move the bank to the posterior after observing 0-based ``symbol``.

        Returns the fresh :meth:`estimate`.
        """
        e = self._exponentials(self.step)
        self.step += 1
        return self._run(int(symbol), e)

    def estimate(self) -> tuple[int, np.ndarray, np.ndarray]:
        """(hits, conditional mean, standard error of the mean) for the current bank."""
        return self._run(-1, self._tot)

    def mass(self, hits: int) -> tuple[float, float]:
        """ln of the in-S fraction and its linear-scale standard error."""
        p = hits / self.samples
        return (math.log(p) if hits else -math.inf), math.sqrt(p * (1.0 - p) / self.samples)
