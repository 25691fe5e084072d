"""Constraint sets inside the probability simplex and their Dirichlet measures.

A :class:`ConstraintSet` is one of

* ``full``      -- the whole simplex,
* ``box``       -- ``a_i <= theta_i <= b_i`` for the first ``m - 1`` coordinates,
* ``polytope``  -- a list of half-spaces ``c . theta <= d`` intersected with the simplex.

``dirichlet_measure`` returns ``P(Dirichlet(alpha) in S)`` through one of three
backends. Boxes are first reduced with the aggregation property of the
Dirichlet law: coordinates without an active bound are merged into a single
free coordinate, so a box that constrains a single coordinate is an exact
incomplete-beta evaluation whatever ``m`` is.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy import special as _sp

from . import specfn
from ._quadrature import gk21
from .errors import DomainError, InfeasibleConstraintError, IntegrationError

TOL = 1e-12
_CHUNK = 1 << 16
_ADAPT_ROUNDS = 3
_IS_ESCALATIONS = 3


@dataclass(frozen=True)
class IntegrationConfig:
    """Numerical knobs shared by every integration backend."""

    quad_tol: float = 1e-9
    quadrature_max_m: int = 4
    samples: int = 100_000
    seed: int = 0
    mass_floor: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.quad_tol <= 1e-3):
            raise ValueError("quad_tol must lie in (0, 1e-3]")
        if self.quadrature_max_m < 2:
            raise ValueError("quadrature_max_m must be at least 2")
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if not (0.0 <= self.mass_floor < 1.0):
            raise ValueError("mass_floor must lie in [0, 1)")


DEFAULT_CONFIG = IntegrationConfig()


class Backend(str, enum.Enum):
    EXACT = "exact"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class MeasureEstimate:
    """ln Dir(S; alpha) together with the standard error of Dir(S; alpha)."""

    log_value: float
    std_error: float
    backend: Backend

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


@dataclass(frozen=True)
class ConditionalMean:
    """Posterior mean of theta under Dirichlet(alpha) conditioned on theta in S."""

    mean: np.ndarray
    std_error: np.ndarray
    log_mass: float
    backend: Backend
    residual: float = 0.0
    importance: bool = False


def simplex_point(theta: Sequence[float]) -> np.ndarray:
    """Validate and return a point of the probability simplex."""
    t = np.asarray(theta, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise DomainError("a simplex point needs at least two coordinates")
    if np.any(t < 0.0) or abs(math.fsum(t) - 1.0) > TOL * t.size:
        raise DomainError(f"not a probability vector: {t}")
    return t


class ConstraintSet:
    """Convex polytope S inside the simplex of dimension m - 1. Immutable."""

    __slots__ = ("m", "kind", "lower", "upper", "A", "d", "_vertices", "_digest")

    def __init__(self, m, kind, lower=None, upper=None, A=None, d=None):
        m = int(m)
        if m < 2:
            raise DomainError("alphabet size must be at least 2")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lower", None if lower is None else np.array(lower, dtype=float))
        object.__setattr__(self, "upper", None if upper is None else np.array(upper, dtype=float))
        object.__setattr__(self, "A", None if A is None else np.array(A, dtype=float))
        object.__setattr__(self, "d", None if d is None else np.array(d, dtype=float))
        object.__setattr__(self, "_vertices", None)
        object.__setattr__(self, "_digest", None)
        for arr in (self.lower, self.upper, self.A, self.d):
            if arr is not None:
                arr.setflags(write=False)
        self._validate()

    def __setattr__(self, name, value):
        raise AttributeError("ConstraintSet is immutable")

    # construction -------------------------------------------------------

    @classmethod
    def full(cls, m: int) -> "ConstraintSet":
        return cls(m, "full")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "ConstraintSet":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DomainError("box bounds must be vectors of equal length m - 1")
        return cls(lower.size + 1, "box", lower=lower, upper=upper)

    @classmethod
    def polytope(cls, A, d) -> "ConstraintSet":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if A.shape[0] != d.shape[0]:
            raise DomainError("one right-hand side per half-space required")
        return cls(A.shape[1], "polytope", A=A, d=d)

    def _validate(self) -> None:
        if self.kind == "full":
            return
        if self.kind == "box":
            a, b = self.lower, self.upper
            if a.size != self.m - 1:
                raise DomainError("box needs bounds for coordinates 1..m-1")
            if np.any(a < 0.0) or np.any(b > 1.0) or np.any(a > b):
                raise InfeasibleConstraintError("box bounds must satisfy 0 <= a_i <= b_i <= 1")
            if math.fsum(a) > 1.0 + TOL:
                raise InfeasibleConstraintError("box is empty: lower bounds sum above 1")
            # positive (m-1)-volume: a strictly feasible point exists
            if np.any(b - a <= TOL) or math.fsum(a) >= 1.0 - TOL:
                raise InfeasibleConstraintError("box has zero Dirichlet measure (lower-dimensional face)")
            return
        if self.kind == "polytope":
            if self.A.shape[1] != self.m:
                raise DomainError("half-space normals must have m entries")
            radius = _chebyshev_radius(self.A, self.d)
            if radius is None:
                raise InfeasibleConstraintError("polytope does not intersect the simplex")
            if radius <= 1e-10:
                raise InfeasibleConstraintError("polytope has zero Dirichlet measure (lower-dimensional)")
            return
        raise DomainError(f"unknown constraint kind {self.kind!r}")

    # views --------------------------------------------------------------

    @property
    def is_full(self) -> bool:
        return self.kind == "full"

    def active_coords(self) -> np.ndarray:
        """Box coordinates (0-based, < m-1) whose bounds actually cut the simplex."""
        if self.kind != "box":
            raise DomainError("active_coords is defined for boxes only")
        return np.flatnonzero((self.lower > 0.0) | (self.upper < 1.0))

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """All non-trivial constraints as (A, d) with A theta <= d."""
        if self.kind == "full":
            return np.zeros((0, self.m)), np.zeros(0)
        if self.kind == "polytope":
            return np.array(self.A), np.array(self.d)
        rows, rhs = [], []
        for i in self.active_coords():
            if self.lower[i] > 0.0:
                r = np.zeros(self.m)
                r[i] = -1.0
                rows.append(r)
                rhs.append(-self.lower[i])
            if self.upper[i] < 1.0:
                r = np.zeros(self.m)
                r[i] = 1.0
                rows.append(r)
                rhs.append(self.upper[i])
        if not rows:
            return np.zeros((0, self.m)), np.zeros(0)
        return np.array(rows), np.array(rhs)

    def contains(self, theta: Sequence[float]) -> bool:
        t = np.asarray(theta, dtype=float)
        if t.shape != (self.m,):
            raise DomainError(f"dimension mismatch: expected {self.m} coordinates, got {t.shape}")
        return bool(self.contains_many(t[None, :])[0])

    def contains_many(self, thetas: np.ndarray) -> np.ndarray:
        """Vectorized membership for an (N, m) array of simplex points."""
        t = np.asarray(thetas, dtype=float)
        inside = np.all(t >= -TOL, axis=1)
        if self.kind == "box":
            head = t[:, : self.m - 1]
            inside &= np.all((head >= self.lower - TOL) & (head <= self.upper + TOL), axis=1)
        elif self.kind == "polytope":
            inside &= np.all(t @ self.A.T <= self.d + TOL, axis=1)
        return inside

    def vertices(self) -> np.ndarray:
        """Vertices of S (cached), by enumeration of active constraint sets."""
        if self._vertices is None:
            A, d = self.halfspaces()
            object.__setattr__(self, "_vertices", _enumerate_vertices(A, d, self.m))
        return self._vertices

    def to_config(self) -> str:
        """Canonical text form in the constraint-config format."""
        lines = [f"alphabet {self.m}"]
        if self.kind == "box":
            for i in self.active_coords():
                lines.append(f"box {i + 1} {float(self.lower[i])!r} {float(self.upper[i])!r}")
        elif self.kind == "polytope":
            for row, rhs in zip(self.A, self.d):
                lines.append("halfspace " + " ".join(repr(float(v)) for v in row) + f" {float(rhs)!r}")
        return "\n".join(lines) + "\n"

    def digest(self) -> bytes:
        """8-octet fingerprint identifying the set (used in stream headers)."""
        if self._digest is None:
            h = hashlib.sha256(self.to_config().encode("ascii")).digest()[:8]
            object.__setattr__(self, "_digest", h)
        return self._digest

    def __eq__(self, other):
        return isinstance(other, ConstraintSet) and self.to_config() == other.to_config()

    def __hash__(self):
        return hash(self.to_config())

    def __repr__(self):
        if self.kind == "full":
            return f"ConstraintSet.full({self.m})"
        if self.kind == "box":
            return f"ConstraintSet.box({self.lower.tolist()}, {self.upper.tolist()})"
        return f"ConstraintSet.polytope(<{len(self.d)} half-spaces>, m={self.m})"


def _chebyshev_radius(A: np.ndarray, d: np.ndarray) -> float | None:
    """Largest ball (within the simplex hyperplane) inside {theta >= 0, A theta <= d}."""
    m = A.shape[1]
    G = np.vstack([A, -np.eye(m)])
    h = np.concatenate([d, np.zeros(m)])
    proj = G - G.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(proj, axis=1)
    flat = norms < 1e-14
    # constraints constant on the hyperplane: c . theta == mean(c)
    if np.any(G[flat].mean(axis=1) > h[flat] + TOL):
        return None
    G, h, norms = G[~flat], h[~flat], norms[~flat]
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = optimize.linprog(
        c,
        A_ub=np.hstack([G, norms[:, None]]),
        b_ub=h,
        A_eq=np.concatenate([np.ones(m), [0.0]])[None, :],
        b_eq=[1.0],
        bounds=[(None, None)] * m + [(0.0, 1.0)],
        method="highs",
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise InfeasibleConstraintError(f"feasibility program failed: {res.message}")
    return float(res.x[-1])


def _enumerate_vertices(A: np.ndarray, d: np.ndarray, m: int) -> np.ndarray:
    G = np.vstack([A, -np.eye(m)])
    h = np.concatenate([d, np.zeros(m)])
    combos = math.comb(G.shape[0], m - 1)
    if combos > 500_000:
        raise DomainError(f"vertex enumeration too large ({combos} candidate bases)")
    found = []
    ones = np.ones((1, m))
    for idx in itertools.combinations(range(G.shape[0]), m - 1):
        M = np.vstack([G[list(idx)], ones])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, np.concatenate([h[list(idx)], [1.0]]))
        if np.all(G @ v <= h + 1e-9):
            v = np.clip(v, 0.0, None)
            v /= v.sum()
            if not any(np.allclose(v, u, atol=1e-10) for u in found):
                found.append(v)
    if not found:
        raise InfeasibleConstraintError("polytope has no vertices inside the simplex")
    return np.array(found)


# configuration text ------------------------------------------------------


def parse_constraints(text: str) -> ConstraintSet:
    """Parse the line-oriented constraint format.

    ::

        alphabet <m>
        box <i> <a_i> <b_i>          # 1-based coordinate, i <= m-1
        halfspace <c_1> ... <c_m> <d>

    Without box/halfspace lines the set is the whole simplex. Mixing box and
    halfspace lines yields a polytope.
    """
    m = None
    boxes: dict[int, tuple[float, float]] = {}
    spaces: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        try:
            if word == "alphabet":
                if len(args) != 1:
                    raise ValueError("alphabet takes one argument")
                m = int(args[0])
            elif word == "box":
                if len(args) != 3:
                    raise ValueError("box takes <i> <a_i> <b_i>")
                i = int(args[0])
                if i in boxes:
                    raise ValueError(f"coordinate {i} boxed twice")
                boxes[i] = (float(args[1]), float(args[2]))
            elif word == "halfspace":
                spaces.append([float(v) for v in args])
            else:
                raise ValueError(f"unknown directive {word!r}")
        except ValueError as exc:
            raise DomainError(f"line {lineno}: {exc}") from None
    if m is None:
        raise DomainError("constraint file lacks an 'alphabet' line")
    for i in boxes:
        if not 1 <= i <= m - 1:
            raise DomainError(f"box coordinate {i} outside 1..{m - 1}")
    for row in spaces:
        if len(row) != m + 1:
            raise DomainError(f"halfspace needs {m} coefficients and a bound")
    if not boxes and not spaces:
        return ConstraintSet.full(m)
    lower = np.zeros(m - 1)
    upper = np.ones(m - 1)
    for i, (a, b) in boxes.items():
        lower[i - 1], upper[i - 1] = a, b
    if not spaces:
        return ConstraintSet.box(lower, upper)
    rows = [r[:-1] for r in spaces]
    rhs = [r[-1] for r in spaces]
    for i, (a, b) in boxes.items():
        e = np.zeros(m)
        e[i - 1] = 1.0
        rows += [-e, e]
        rhs += [-a, b]
    return ConstraintSet.polytope(rows, rhs)


def load_constraints(path) -> ConstraintSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_constraints(fh.read())


# sampling ------------------------------------------------------------------


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**63 - 1), chunk])))


def sample_dirichlet(alpha: Sequence[float], count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. Dirichlet(alpha) draws as an (count, m) array.

    Draws come in fixed chunks of 65536, each with its own derived seed, so the
    output does not depend on how the work is split.
    """
    alpha = _check_alpha(alpha)
    if count < 1:
        raise DomainError("count must be >= 1")
    out = np.empty((count, alpha.size))
    for c in range((count + _CHUNK - 1) // _CHUNK):
        lo = c * _CHUNK
        hi = min(count, lo + _CHUNK)
        g = _chunk_rng(seed, c).standard_gamma(alpha, size=(hi - lo, alpha.size))
        out[lo:hi] = _normalize_gammas(g, alpha, _chunk_rng(seed ^ 0x5A5A5A5A, c))
    return out


def _normalize_gammas(g: np.ndarray, alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # tiny shapes underflow to 0; regenerate through the log-gamma trick
    # Gamma(a) = Gamma(a + 1) * U^(1/a)
    tot = g.sum(axis=1)
    bad = tot <= 0.0
    if np.any(bad):
        k = int(bad.sum())
        lg = np.log(rng.standard_gamma(alpha + 1.0, size=(k, alpha.size))) + np.log(
            rng.random((k, alpha.size))
        ) / alpha
        lg -= lg.max(axis=1, keepdims=True)
        g = g.copy()
        g[bad] = np.exp(lg)
        tot = g.sum(axis=1)
    return g / tot[:, None]


def _check_alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise DomainError("Dirichlet parameters must be a vector of length >= 2")
    if not np.all(a > 0.0) or not np.all(np.isfinite(a)):
        raise DomainError("Dirichlet parameters must be positive and finite")
    return a


def dirichlet_logpdf(thetas: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Row-wise log density of Dirichlet(alpha)."""
    return _sp.xlogy(alpha - 1.0, thetas).sum(axis=1) - specfn.log_beta(alpha)


# measure backends ------------------------------------------------------------


def _reduce_box(S: ConstraintSet, alpha: np.ndarray):
    """Aggregate unconstrained coordinates: returns (alpha', lower', upper')."""
    J = S.active_coords()
    rest = np.ones(S.m, dtype=bool)
    rest[J] = False
    a = np.concatenate([alpha[J], [alpha[rest].sum()]])
    return a, S.lower[J], S.upper[J]


def _beta_logpdf(t, a, b):
    return _sp.xlogy(a - 1.0, t) + _sp.xlog1py(b - 1.0, -t) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def _pair_mass_vec(a: float, b: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """P(lo <= X <= hi), X ~ Beta(a, b), vectorized over interval endpoints."""
    lo = np.clip(lo, 0.0, 1.0)
    hi = np.clip(hi, 0.0, 1.0)
    f_lo, f_hi = _sp.betainc(a, b, lo), _sp.betainc(a, b, hi)
    g_lo, g_hi = _sp.betaincc(a, b, lo), _sp.betaincc(a, b, hi)
    out = np.where(f_hi <= 0.5, f_hi - f_lo, np.where(g_lo <= 0.5, g_lo - g_hi, 1.0 - f_lo - g_hi))
    return np.where(hi > lo, np.maximum(out, 0.0), 0.0)


def _integrate(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    return gk21(f, lo, hi, rtol=tol)


_WARPS = {
    (True, True): lambda s: (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s)),
    (True, False): lambda s: (s * s, 2.0 * s),
    (False, True): lambda s: (s * (2.0 - s), 2.0 * (1.0 - s)),
    (False, False): lambda s: (s, np.ones_like(s)),
}


def _box_mass(alpha, lo, hi, tol, shift_pdf=False):
    """P(theta_J in box) for theta ~ Dirichlet(alpha) with the last coordinate free.

    Stick-breaking: theta_1 ~ Beta(alpha_1, sum(rest)); given theta_1 the
    remaining coordinates are (1 - theta_1) * Dirichlet(rest), so their bounds
    rescale by 1 / (1 - theta_1). The innermost pair is an exact incomplete
    beta. Returns (value, error estimate, log scale); the true mass is
    value * exp(log scale).
    """
    a0 = float(alpha[0])
    b0 = float(alpha[1:].sum())
    t_lo = float(lo[0])
    t_hi = min(float(hi[0]), 1.0 - float(lo[1:].sum()))
    if t_hi <= t_lo:
        return 0.0, 0.0, 0.0
    rest = alpha[1:]
    mode = (a0 - 1.0) / (a0 + b0 - 2.0) if a0 > 1.0 and b0 > 1.0 else None
    if mode is not None and not t_lo < mode < t_hi:
        mode = None
    shift = 0.0
    if shift_pdf:
        probe = np.linspace(t_lo, t_hi, 65)[1:-1]
        if mode is not None:
            probe = np.append(probe, mode)
        shift = float(np.max(_beta_logpdf(probe, a0, b0)))

    def density(t):
        s = 1.0 - t
        if rest.size == 2:
            inner = _pair_mass_vec(rest[0], rest[1], lo[1] / s, hi[1] / s)
        else:
            inner = np.array([_box_mass(rest, lo[1:] / sk, np.minimum(hi[1:] / sk, 1.0), tol * 0.1)[0] for sk in s])
        return np.exp(_beta_logpdf(t, a0, b0) - shift) * inner

    # the cross-section of the box changes shape where 1 - t equals a sum of
    # the remaining bounds; the integrand has kinks there
    cuts = {mode} if mode is not None else set()
    for combo in itertools.product(*[(0.0, l, h) for l, h in zip(lo[1:], hi[1:])]):
        c = 1.0 - math.fsum(combo)
        if t_lo < c < t_hi:
            cuts.add(c)
    edges = [t_lo] + sorted(cuts) + [t_hi]
    total = err = 0.0
    for p_lo, p_hi in zip(edges[:-1], edges[1:]):
        if p_hi - p_lo <= 1e-15:
            continue
        # a polynomial change of variable flattens algebraic behaviour at piece
        # ends (density singularities, square-root kinks of the inner mass);
        # the mode is smooth and is left alone
        warp = _WARPS[(p_lo != mode, p_hi != mode)]
        w = p_hi - p_lo

        def f(sv, w=w, p_lo=p_lo, warp=warp):
            g, dg = warp(sv)
            return density(p_lo + w * g) * (w * dg)

        v, e = _integrate(f, 0.0, 1.0, tol)
        total += v
        err += e
    return total, err, shift


def dirichlet_measure(S: ConstraintSet, alpha: Sequence[float], cfg: IntegrationConfig | None = None) -> MeasureEstimate:
    """Dir(S; alpha) = P(Dirichlet(alpha) lies in S)."""
    cfg = cfg or DEFAULT_CONFIG
    alpha = _check_alpha(alpha)
    if alpha.size != S.m:
        raise DomainError(f"alpha has {alpha.size} entries, constraint set has m={S.m}")
    if S.is_full:
        return MeasureEstimate(0.0, 0.0, Backend.EXACT)
    if S.kind == "box":
        a, lo, hi = _reduce_box(S, alpha)
        if a.size == 1:
            return MeasureEstimate(0.0, 0.0, Backend.EXACT)
        if a.size == 2:
            lv = specfn.log_beta_interval_mass(lo[0], hi[0], a[0], a[1])
            return MeasureEstimate(lv, 0.0, Backend.EXACT)
        if a.size <= cfg.quadrature_max_m:
            val, err, shift = _box_mass(a, lo, hi, cfg.quad_tol, shift_pdf=True)
            if not val > 0.0:
                raise IntegrationError("quadrature returned a non-positive Dirichlet measure")
            lv = math.log(val) + shift
            return MeasureEstimate(lv, err / val * math.exp(lv), Backend.QUADRATURE)
    return monte_carlo_measure(S, alpha, cfg)


def jeffreys_constant(S: ConstraintSet, cfg: IntegrationConfig | None = None) -> MeasureEstimate:
    """C(S): the probability that a Dirichlet(1/2, ..., 1/2) vector falls in S."""
    return dirichlet_measure(S, np.full(S.m, 0.5), cfg)


@dataclass(frozen=True)
class _MCResult:
    mean: np.ndarray
    std_error: np.ndarray
    log_mass: float
    mass_se: float
    importance: bool

    def as_measure(self) -> MeasureEstimate:
        return MeasureEstimate(self.log_mass, self.mass_se, Backend.MONTE_CARLO)


def _monte_carlo_mean(S: ConstraintSet, alpha: np.ndarray, cfg: IntegrationConfig) -> _MCResult:
    th = sample_dirichlet(alpha, cfg.samples, cfg.seed)
    inside = S.contains_many(th)
    hits = int(inside.sum())
    N = th.shape[0]
    p = hits / N
    if hits == 0 or p < cfg.mass_floor:
        return importance_mean(S, alpha, cfg)
    sel = th[inside]
    mean = sel.mean(axis=0)
    se = sel.std(axis=0, ddof=1) / math.sqrt(hits) if hits > 1 else np.full(S.m, np.inf)
    # add-one smoothing keeps the error honest when every draw lands inside S
    q = (hits + 1) / (N + 2)
    return _MCResult(mean, se, math.log(p), math.sqrt(q * (1.0 - q) / N), False)


def monte_carlo_measure(S: ConstraintSet, alpha: Sequence[float], cfg: IntegrationConfig | None = None) -> MeasureEstimate:
    """Dir(S; alpha) by sampling, whatever the shape of S (the backend of last resort)."""
    cfg = cfg or DEFAULT_CONFIG
    alpha = _check_alpha(alpha)
    if alpha.size != S.m:
        raise DomainError(f"alpha has {alpha.size} entries, constraint set has m={S.m}")
    return _monte_carlo_mean(S, alpha, cfg).as_measure()


def importance_mean(S: ConstraintSet, alpha: Sequence[float], cfg: IntegrationConfig | None = None) -> _MCResult:
    """Self-normalized importance sampling for a posterior that has mostly left S.

    The first proposal is a Dirichlet centred at the point of S nearest (in
    Kullback-Leibler divergence) to the posterior's own centre, with matching
    concentration. A few cross-entropy rounds then refit it by weighted
    moment matching to the truncated target (variance doubled for safety),
    which matters when the target piles up in a corner of S. The final draw
    is a defensive mixture with a wider copy of the fitted proposal.
    """
    from .mle import constrained_argmax

    cfg = cfg or DEFAULT_CONFIG
    alpha = _check_alpha(alpha)
    weights = np.clip(alpha - 0.5, 0.0, None)
    if not np.any(weights > 0.0):
        weights = alpha
    centre = constrained_argmax(weights, S)
    tau = max(float(alpha.sum()), float(S.m))
    beta = tau * centre + 0.5
    pilot = max(1000, cfg.samples // 4)
    for r in range(_ADAPT_ROUNDS):
        th = sample_dirichlet(beta, pilot, (cfg.seed ^ 0x2B3C4D5E) + r)
        th = th[S.contains_many(th)]
        if th.shape[0] < 2:
            break
        logw = dirichlet_logpdf(th, alpha) - dirichlet_logpdf(th, beta)
        w = np.exp(logw - logw.max())
        w /= w.sum()
        mu = w @ th
        var = w @ (th - mu) ** 2
        ok = var > 0.0
        if not np.any(ok):
            break
        conc = float(np.min(mu[ok] * (1.0 - mu[ok]) / var[ok])) - 1.0
        conc = min(max(0.5 * conc, float(S.m)), 1e8)
        beta = np.maximum(conc * mu, 1e-3)
    # half the draws come from a copy with a quarter of the concentration, so
    # the proposal tails stay heavier than the target's (bounded weights); a
    # poor fit still shows up as a small effective sample size, and then 4x
    # more draws are taken before giving up
    wide = np.maximum(0.25 * beta, 1e-3)
    for k in range(_IS_ESCALATIONS + 1):
        N = cfg.samples * 4**k
        seed = (cfg.seed ^ 0x1F2E3D4C) + 2 * k
        th = np.vstack([
            sample_dirichlet(beta, N - N // 2, seed),
            sample_dirichlet(wide, N // 2, seed + 1),
        ])
        inside = S.contains_many(th)
        if not np.any(inside):
            ess = 0.0
            continue
        sel = th[inside]
        logq = np.logaddexp(dirichlet_logpdf(sel, beta), dirichlet_logpdf(sel, wide)) - math.log(2.0)
        logw = dirichlet_logpdf(sel, alpha) - logq
        top = float(logw.max())
        w = np.exp(logw - top)
        wsum = float(w.sum())
        ess = wsum * wsum / float(np.sum(w * w))
        if ess >= 10.0:
            break
    else:
        raise IntegrationError(f"importance sampling degenerate (effective sample size {ess:.1f})")
    mean = (w[:, None] * sel).sum(axis=0) / wsum
    resid = sel - mean
    se = np.sqrt(np.sum((w[:, None] * resid) ** 2, axis=0)) / wsum
    log_mass = top + math.log(wsum / N)
    # standard error of the unnormalized weight mean, over all N draws
    wm = wsum / N
    var = (float(np.sum(w * w)) / N - wm * wm) * N / max(N - 1, 1)
    mass_se = math.sqrt(max(var, 0.0) / N) * math.exp(top)
    return _MCResult(mean, se, log_mass, mass_se, True)


def constrained_moment_ratio(S: ConstraintSet, alpha: Sequence[float], cfg: IntegrationConfig | None = None) -> ConditionalMean:
    """E[theta | theta in S] under Dirichlet(alpha).

    Coordinate ``i`` equals ``alpha_i / sum(alpha) * Dir(S; alpha + e_i) / Dir(S; alpha)``.
    Exact and quadrature backends evaluate those ratios and renormalize the
    (reported) residual; Monte Carlo backends average one shared sample set,
    which sums to one identically.
    """
    cfg = cfg or DEFAULT_CONFIG
    alpha = _check_alpha(alpha)
    if alpha.size != S.m:
        raise DomainError(f"alpha has {alpha.size} entries, constraint set has m={S.m}")
    total = float(alpha.sum())
    kt = alpha / total
    if S.is_full:
        return ConditionalMean(kt, np.zeros(S.m), 0.0, Backend.EXACT)
    if S.kind == "box":
        J = S.active_coords()
        dim = J.size + 1
        if dim == 1:
            return ConditionalMean(kt, np.zeros(S.m), 0.0, Backend.EXACT)
        if dim <= 2 or dim <= cfg.quadrature_max_m:
            return _ratio_from_measures(S, alpha, J, cfg)
    mc = _monte_carlo_mean(S, alpha, cfg)
    return ConditionalMean(mc.mean, mc.std_error, mc.log_mass, Backend.MONTE_CARLO, 0.0, mc.importance)


def _ratio_from_measures(S, alpha, J, cfg):
    total = float(alpha.sum())
    base = dirichlet_measure(S, alpha, cfg)
    if base.log_value == specfn.NEG_INF:
        raise IntegrationError("conditioning mass underflowed to zero")
    free = np.ones(S.m, dtype=bool)
    free[J] = False
    logs = np.empty(S.m)
    shared = None
    for i in range(S.m):
        if free[i] and shared is not None:
            logs[i] = shared
            continue
        bumped = alpha.copy()
        bumped[i] += 1.0
        logs[i] = dirichlet_measure(S, bumped, cfg).log_value
        if free[i]:
            shared = logs[i]
    r = alpha / total * np.exp(logs - base.log_value)
    s = float(r.sum())
    residual = abs(s - 1.0)
    limit = 1e-9 if base.backend is Backend.EXACT else max(1e-6, 100 * cfg.quad_tol)
    if not residual <= limit:
        raise IntegrationError(f"posterior mean fails to normalize (residual {residual:.3e})")
    se = np.zeros(S.m) if base.backend is Backend.EXACT else np.full(S.m, base.std_error / base.value)
    return ConditionalMean(r / s, se, base.log_value, base.backend, residual)
