"""Sequential Krichevsky-Trofimov probability assignment restricted to S.

The prior is the Jeffreys (Dirichlet(1/2)) density truncated to S. After
observing counts k the predictive probability of symbol i is the posterior
mean of theta_i under Dirichlet(k + 1/2) conditioned on theta in S:

    M(i | x^n) = (k_i + 1/2) / (n + m/2) * Dir(S; k + 1/2 + e_i) / Dir(S; k + 1/2)

With S the whole simplex the ratio is one and this is the plain KT rule.

Backends, chosen once per estimator:

* ``kt``          -- S is the whole simplex (or a box whose bounds do not cut it).
* ``exact``       -- box that constrains a single coordinate; two
  incomplete-beta evaluations per step, the base measure is carried over.
* ``quadrature``  -- boxes with at most ``cfg.quadrature_max_m`` reduced coordinates.
* ``monte_carlo`` -- everything else; an incrementally updated Gamma bank
  (see :mod:`polykt._mc`) with importance-sampling escalation when the
  posterior has nearly left S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import specfn
from ._mc import IncrementalSampler
from .constraints import (
    DEFAULT_CONFIG,
    Backend,
    ConstraintSet,
    IntegrationConfig,
    constrained_moment_ratio,
    dirichlet_measure,
    importance_mean,
    jeffreys_constant,
)
from .errors import DomainError, IntegrationError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class PredictiveDistribution:
    probs: np.ndarray
    std_errors: np.ndarray
    backend: Backend
    clamped: bool = False


@dataclass(frozen=True)
class MixtureValue:
    log_value: float
    std_error: float = 0.0  # standard error of log_value (nats)

    def __float__(self):
        return self.log_value


def _seq_to_counts(x: Iterable[int], m: int) -> np.ndarray:
    k = np.zeros(m, dtype=np.int64)
    for s in x:
        s = int(s)
        if not 1 <= s <= m:
            raise DomainError(f"symbol {s} outside 1..{m}")
        k[s - 1] += 1
    return k


def _mode(S: ConstraintSet, cfg: IntegrationConfig) -> str:
    if S.is_full:
        return "kt"
    if S.kind == "box":
        dim = S.active_coords().size + 1
        if dim == 1:
            return "kt"
        if dim == 2:
            return "exact"
        if dim <= cfg.quadrature_max_m:
            return "quadrature"
    return "monte_carlo"


class ConstrainedKT:
    """Mutable estimator state: counts, cached measures and ln M(x^n).

    ``predict`` is read-only; ``update`` advances the state by one symbol
    (1-based) and accumulates the log probability that was assigned to it.
    """

    def __init__(self, S: ConstraintSet, cfg: IntegrationConfig | None = None, seed: int = 0):
        self.S = S
        self.cfg = cfg or DEFAULT_CONFIG
        self.seed = int(seed)
        self.counts = np.zeros(S.m, dtype=np.int64)
        self._n = 0
        self._zero_se = np.zeros(S.m)
        self._zero_se.flags.writeable = False
        self.log_mixture = 0.0
        self.clamp_count = 0
        self.mode = _mode(S, self.cfg)
        self._pred: PredictiveDistribution | None = None
        # ln C(S); validates positive measure before anything else happens
        c = jeffreys_constant(S, self.cfg) if self.mode != "monte_carlo" else None
        if c is not None and not c.log_value > specfn.NEG_INF:
            raise IntegrationError("the constraint set has zero Jeffreys measure")
        self.log_dir_current = 0.0 if c is None else c.log_value
        self.log_dir_std_error = 0.0 if c is None else c.std_error
        self._sampler = None
        if self.mode == "exact":
            self._J = int(S.active_coords()[0])
            self._bumped: dict[int, float] = {}
        elif self.mode == "monte_carlo":
            self._sampler = IncrementalSampler(S, self.cfg.samples, self.seed)
            self._scan = self._sampler.estimate()
            hits = self._scan[0]
            if hits == 0:
                raise IntegrationError("no Monte Carlo draw from the Jeffreys prior fell inside S")
            self.log_dir_current, self.log_dir_std_error = self._sampler.mass(hits)

    @property
    def m(self) -> int:
        return self.S.m

    @property
    def n(self) -> int:
        return self._n

    @property
    def alpha(self) -> np.ndarray:
        return self.counts + 0.5

    # prediction ---------------------------------------------------------------

    def _exact_bumped(self, group: int) -> float:
        # reduced two-coordinate measure with coordinate group (0 = J, 1 = rest) bumped
        if group not in self._bumped:
            a = self.alpha
            aj = a[self._J]
            ar = a.sum() - aj
            if group == 0:
                aj += 1.0
            else:
                ar += 1.0
            self._bumped[group] = specfn.log_beta_interval_mass(
                self.S.lower[self._J], self.S.upper[self._J], aj, ar
            )
        return self._bumped[group]

    def _raw_predict(self) -> tuple[np.ndarray, np.ndarray, Backend]:
        a = self.alpha
        kt = a / (self._n + 0.5 * self.m)
        if self.mode == "kt":
            return kt, self._zero_se, Backend.EXACT
        if self.mode == "exact":
            base = self.log_dir_current
            if base == specfn.NEG_INF:
                raise IntegrationError("conditioning mass underflowed to zero")
            ratio = np.full(self.m, math.exp(self._exact_bumped(1) - base))
            ratio[self._J] = math.exp(self._exact_bumped(0) - base)
            r = kt * ratio
            s = float(r.sum())
            if not abs(s - 1.0) <= 1e-9:
                raise IntegrationError(f"posterior mean fails to normalize (residual {abs(s - 1.0):.3e})")
            return r / s, self._zero_se, Backend.EXACT
        if self.mode == "quadrature":
            cm = constrained_moment_ratio(self.S, a, self.cfg)
            return cm.mean, cm.std_error, cm.backend
        hits, mean, se = self._scan
        if hits == 0 or hits < self.cfg.mass_floor * self._sampler.samples:
            # per-step seed: encoder and decoder must draw identical samples
            cfg = replace(self.cfg, seed=(self.seed * 1_000_003 + self.n) & (2**63 - 1))
            res = importance_mean(self.S, a, cfg)
            return res.mean, res.std_error, Backend.MONTE_CARLO
        return mean, se, Backend.MONTE_CARLO

    def predict(self) -> PredictiveDistribution:
        """M(. | x^n) for the current counts."""
        if self._pred is None:
            probs, se, backend = self._raw_predict()
            clamped = float(probs.min()) < PROB_FLOOR
            if clamped:
                probs = np.maximum(probs, PROB_FLOOR)
                probs = probs / probs.sum()
            self._pred = PredictiveDistribution(probs, se, backend, clamped)
        return self._pred

    # update -------------------------------------------------------------------------

    def update(self, symbol: int) -> "ConstrainedKT":
        """Consume one symbol in 1..m."""
        symbol = int(symbol)
        if not 1 <= symbol <= self.m:
            raise DomainError(f"symbol {symbol} outside 1..{self.m}")
        pred = self.predict()
        if pred.clamped:
            self.clamp_count += 1
        self.log_mixture += math.log(pred.probs[symbol - 1])
        i = symbol - 1
        if self.mode == "exact":
            new_base = self._exact_bumped(0 if i == self._J else 1)
            self._bumped = {}
            self.log_dir_current = new_base
        self.counts[i] += 1
        self._n += 1
        if self.mode == "quadrature":
            est = dirichlet_measure(self.S, self.alpha, self.cfg)
            self.log_dir_current, self.log_dir_std_error = est.log_value, est.std_error
        elif self.mode == "monte_carlo":
            self._scan = self._sampler.advance(i)
            hits = self._scan[0]
            self.log_dir_current, self.log_dir_std_error = self._sampler.mass(hits)
        self._pred = None
        return self

    def __repr__(self):
        return f"ConstrainedKT({self.S!r}, n={self.n}, mode={self.mode!r})"


def new_estimator(S: ConstraintSet, cfg: IntegrationConfig | None = None, seed: int = 0) -> ConstrainedKT:
    return ConstrainedKT(S, cfg, seed)


def predict(state: ConstrainedKT) -> PredictiveDistribution:
    return state.predict()


def update(state: ConstrainedKT, symbol: int) -> ConstrainedKT:
    return state.update(symbol)


def sequential_log_prob(x: Sequence[int], S: ConstraintSet, cfg: IntegrationConfig | None = None, seed: int = 0) -> float:
    """ln M(x^n) accumulated symbol by symbol."""
    st = ConstrainedKT(S, cfg, seed)
    for s in x:
        st.update(s)
    return st.log_mixture


def log_mixture_counts(k: Sequence[int], S: ConstraintSet, cfg: IntegrationConfig | None = None) -> MixtureValue:
    """ln M(x^n) for any sequence of type ``k``, in closed form."""
    cfg = cfg or DEFAULT_CONFIG
    k = np.asarray(k, dtype=float)
    if k.shape != (S.m,):
        raise DomainError(f"count vector must have {S.m} entries")
    a = k + 0.5
    core = specfn.log_beta(a) - specfn.log_beta(np.full(S.m, 0.5))
    if S.is_full:
        return MixtureValue(core, 0.0)
    c = jeffreys_constant(S, cfg)
    d = dirichlet_measure(S, a, cfg)
    # delta method on ln D - ln C
    rel = math.hypot(c.std_error / c.value if c.std_error else 0.0, d.std_error / d.value if d.std_error else 0.0)
    return MixtureValue(core - c.log_value + d.log_value, rel)


def log_mixture_direct(x: Iterable[int], S: ConstraintSet, cfg: IntegrationConfig | None = None) -> float:
    """ln M(x^n) = ln B(k+1/2) - ln B(1/2) - ln C(S) + ln Dir(S; k+1/2), from the final counts."""
    return log_mixture_counts(_seq_to_counts(x, S.m), S, cfg).log_value
