"""Convex cones of functions and their Hilbert projective metrics.

Two cones appear throughout: the positive cone

    C+ = { f >= 0, f not identically 0 },

whose partial order is pointwise comparison, and the log-Holder cone

    Lambda(Q) = { f in C+ : f(x) <= exp(Q d(x,x')^beta) f(x')
                  whenever d(x,x') <= delta },

whose order is membership of differences in the same cone.  For both, the
Hilbert metric is Theta(f, g) = log(B/A) with

    A(f, g) = sup { t > 0 : t f <= g },   B(f, g) = inf { t > 0 : g <= t f },

and A, B reduce to extrema of finite ratio sets on a finite point sample.
For C+ the ratio set is { g(x)/f(x) }.  For Lambda(Q) membership is cut out
by the linear functionals

    l_{x,y}(f) = exp(Q d(x,y)^beta) f(x) - f(y),   d(x,y) <= delta,

so the ratio set gains { l_{x,y}(g) / l_{x,y}(f) } over the stored pair set.
Distance +infinity is a first-class value (incomparable directions), never
an exception: a positive map with image of finite diameter Delta contracts
Theta by tanh(Delta/4), and tanh(inf) = 1 is a meaningful rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .spaces import KIND_CIRCLE, Field, _check_same_space, MeasureVec, pair

#: relative spread below which two cone directions count as proportional
PROPORTIONAL_TOL = 1e-12

#: relative slack absorbed by cone-membership checks (roundoff floor)
MEMBERSHIP_SLACK = 1e-12


@dataclass(frozen=True)
class ConeParams:
    """Parameters of the log-Holder cone Lambda(Q) at locality radius delta."""

    Q: float
    delta: float
    beta: float = 1.0

    def __post_init__(self):
        if self.Q <= 0.0 or self.delta <= 0.0:
            raise DomainError("Q and delta must be positive")
        if not (0.0 < self.beta <= 1.0):
            raise DomainError("beta must lie in (0, 1]")


@dataclass(eq=False)
class PairSet:
    """Ordered point pairs (i, j), i != j, with d(x_i, x_j) <= delta.

    Closed under swap: both orientations of every pair are stored, so the
    one-sided functional inequalities l_{i,j} >= 0 encode the symmetric
    cone condition.  Exponential weights exp(Q d^beta) are cached per
    (Q, beta) since they dominate the cost of repeated metric queries.
    """

    space: object
    delta: float
    i: np.ndarray
    j: np.ndarray
    d: np.ndarray
    _exp_cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.i.shape[0]

    def exp_weights(self, Q: float, beta: float) -> np.ndarray:
        key = (float(Q), float(beta))
        w = self._exp_cache.get(key)
        if w is None:
            w = np.exp(Q * self.d ** beta)
            w.setflags(write=False)
            self._exp_cache[key] = w
        return w


_PAIR_SET_CACHE: dict = {}


def pair_set(space, delta: float) -> PairSet:
    """Build (or fetch the cached) pair set of a space at radius delta."""
    key = (id(space), float(delta))
    cached = _PAIR_SET_CACHE.get(key)
    if cached is not None and cached.space is space:
        return cached
    n = space.n_points
    if space.kind == KIND_CIRCLE:
        omax = int(math.floor(delta * n + 1e-9))
        iis, jjs, dds = [], [], []
        base = np.arange(n)
        for o in range(1, omax + 1):
            d = min(o / n, 1.0 - o / n)
            if d > delta + 1e-15:
                continue
            nxt = (base + o) % n
            iis.append(base); jjs.append(nxt); dds.append(np.full(n, d))
            iis.append(nxt); jjs.append(base); dds.append(np.full(n, d))
        if iis:
            i = np.concatenate(iis); j = np.concatenate(jjs); d = np.concatenate(dds)
        else:
            i = np.empty(0, dtype=np.int64); j = i.copy(); d = np.empty(0)
    else:
        ii, jj = np.nonzero((space.dist_table <= delta) & ~np.eye(n, dtype=bool))
        i, j, d = ii, jj, space.dist_table[ii, jj]
    ps = PairSet(space=space, delta=float(delta), i=np.ascontiguousarray(i, dtype=np.int64),
                 j=np.ascontiguousarray(j, dtype=np.int64), d=np.asarray(d, dtype=np.float64))
    _PAIR_SET_CACHE[key] = ps
    return ps


def in_positive_cone(f: Field) -> bool:
    """Membership in C+: nonnegative and not identically zero."""
    v = f.values
    return bool(v.min() >= 0.0 and v.max() > 0.0)


def _cone_violation(values: np.ndarray, ps: PairSet, E: np.ndarray) -> float:
    """Largest relative violation of the functional inequalities (0 = inside)."""
    if len(ps) == 0:
        return 0.0
    lhs = values[ps.j]
    rhs = E * values[ps.i]
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    scale[scale == 0.0] = 1.0
    return float(((lhs - rhs) / scale).max())


def in_log_holder_cone(f: Field, p: ConeParams) -> bool:
    """Membership in Lambda(Q), with a relative slack of 1e-12 for roundoff."""
    if not in_positive_cone(f):
        return False
    ps = pair_set(f.space, p.delta)
    E = ps.exp_weights(p.Q, p.beta)
    return _cone_violation(f.values, ps, E) <= MEMBERSHIP_SLACK


def hilbert_gap_positive(f: Field, g: Field) -> tuple[float, float]:
    """(A, B) for the pointwise order on C+.

    A zero of f where g > 0 yields B = +inf (incomparable), reported as a
    value rather than raised.  Points where both vanish impose no constraint.
    """
    _check_same_space(f, g)
    fv, gv = f.values, g.values
    mask = fv > 0.0
    if not mask.any():
        raise DomainError("f must be a nonzero element of the positive cone")
    ratios = gv[mask] / fv[mask]
    A = float(ratios.min())
    B = float(ratios.max())
    if np.any(~mask & (gv > 0.0)):
        B = math.inf
    return A, B


def theta_positive(f: Field, g: Field) -> float:
    """Hilbert distance on C+:  log sup_{x,y} [g(x) f(y)] / [g(y) f(x)]."""
    A, B = hilbert_gap_positive(f, g)
    return _theta_from_gap(A, B)


def _theta_from_gap(A: float, B: float) -> float:
    if not (A > 0.0) or math.isinf(B):
        return math.inf
    if B - A <= PROPORTIONAL_TOL * B:
        return 0.0
    return math.log(B / A)


def _gap_log_holder_raw(fv: np.ndarray, gv: np.ndarray, ps: PairSet,
                        E: np.ndarray) -> tuple[float, float]:
    """(A, B) for the Lambda(Q) order, via the functional ratio set.

    Assumes f, g lie in the cone up to roundoff.  Constraints with
    l(f) = 0 are skipped when l(g) >= 0 and force an infinite gap
    otherwise, matching the feasibility logic of sup{t : g - t f in cone}.
    """
    A = math.inf
    B = 0.0
    mask = fv > 0.0
    if mask.any():
        r = gv[mask] / fv[mask]
        A = float(r.min())
        B = float(r.max())
    if np.any(~mask & (gv > 0.0)):
        B = math.inf
    if len(ps) > 0:
        lf = E * fv[ps.i] - fv[ps.j]
        lg = E * gv[ps.i] - gv[ps.j]
        m = lf > 0.0
        if m.any():
            r = lg[m] / lf[m]
            A = min(A, float(r.min()))
            B = max(B, float(r.max()))
        bad = ~m
        if bad.any():
            lgb = lg[bad]
            if np.any(lgb > 0.0):
                B = math.inf
            if np.any(lgb < 0.0):
                A = 0.0
    return A, B


def theta_log_holder(f: Field, g: Field, p: ConeParams, *, checked: bool = True) -> float:
    """Hilbert distance on Lambda(Q).

    At least as large as theta_positive(f, g) since Lambda(Q) is nested
    inside C+.  With ``checked`` the arguments must pass the membership
    test; the raw formula is still well defined on the cone boundary and
    is used internally for difference directions.
    """
    _check_same_space(f, g)
    if checked:
        if not in_log_holder_cone(f, p) or not in_log_holder_cone(g, p):
            raise DomainError("theta_log_holder needs both fields inside the cone")
    ps = pair_set(f.space, p.delta)
    E = ps.exp_weights(p.Q, p.beta)
    A, B = _gap_log_holder_raw(f.values, g.values, ps, E)
    return _theta_from_gap(A, B)


def hilbert_gap_log_holder(f: Field, g: Field, p: ConeParams) -> tuple[float, float]:
    """(A, B) in the Lambda(Q) order (unchecked boundary-tolerant form)."""
    _check_same_space(f, g)
    ps = pair_set(f.space, p.delta)
    E = ps.exp_weights(p.Q, p.beta)
    return _gap_log_holder_raw(f.values, g.values, ps, E)


def birkhoff_rate(delta: float) -> float:
    """Contraction factor tanh(Delta/4) of a cone map with image diameter Delta.

    tanh(inf) = 1: an infinite-diameter image still never expands.
    """
    if delta < 0.0:
        raise DomainError("a projective diameter cannot be negative")
    if math.isinf(delta):
        return 1.0
    return math.tanh(delta / 4.0)


def norm_theta_bound(f: Field, g: Field, m: MeasureVec) -> tuple[float, float]:
    """Both sides of  ||f - g|| <= (e^{Theta+(f,g)} - 1) min(||f||, ||g||)
    for fields normalized against the probability measure m.

    Returns (lhs, rhs); the inequality itself is the caller's assertion.
    """
    pf, pg = pair(f, m), pair(g, m)
    if abs(pf - 1.0) > 1e-10 or abs(pg - 1.0) > 1e-10:
        raise DomainError("both fields must integrate to 1 against m")
    if not (in_positive_cone(f) and in_positive_cone(g)):
        raise DomainError("both fields must lie in the positive cone")
    lhs = float(np.abs(f.values - g.values).max())
    theta = theta_positive(f, g)
    rhs = (math.expm1(theta) if not math.isinf(theta) else math.inf)
    rhs *= min(f.norm_inf(), g.norm_inf())
    return lhs, rhs


def sample_extremal_log_holder(space, p: ConeParams, rng: np.random.Generator,
                               strength: float = 0.98) -> Field:
    """A field near an extreme ray of Lambda(Q): exp(+-q d(x, c)) with q
    close to Q saturates the defining inequality along one direction, the
    way coordinate directions are extremal for the positive cone."""
    q = strength * p.Q * rng.choice([-1.0, 1.0])
    c = rng.integers(space.n_points)
    if space.kind == KIND_CIRCLE:
        d = space.circle_distance_points(space.positions, space.positions[c])
    else:
        d = space.dist_table[c]
    return Field(space, np.exp(q * d ** p.beta))


def sample_log_holder_field(space, p: ConeParams, rng: np.random.Generator,
                            strength: float = 0.9, modes: int = 6) -> Field:
    """A random field strictly inside Lambda(Q).

    On a circle grid, log f is a random trigonometric polynomial whose
    Lipschitz constant is held below strength * Q (beta = 1 samples remain
    valid for any beta <= 1 on subunit distances).  On a discrete space
    whose pair set is empty, the cone is all of C+ and any positive vector
    works.
    """
    ps = pair_set(space, p.delta)
    if space.kind == KIND_CIRCLE:
        x = space.positions
        a = rng.normal(size=modes)
        b = rng.normal(size=modes)
        ms = np.arange(1, modes + 1)
        lip = float(np.sum(2.0 * np.pi * ms * (np.abs(a) + np.abs(b))))
        target = strength * p.Q * rng.uniform(0.2, 1.0)
        scale = 0.0 if lip == 0.0 else target / lip
        logf = np.zeros_like(x)
        for k, m in enumerate(ms):
            logf += scale * (a[k] * np.cos(2 * np.pi * m * x) + b[k] * np.sin(2 * np.pi * m * x))
        return Field(space, np.exp(logf))
    if len(ps) == 0:
        return Field(space, rng.uniform(0.5, 2.0, size=space.n_points))
    # generic finite metric space: rescale a random field's log-oscillation
    v = rng.normal(size=space.n_points)
    f = Field(space, v)
    from .spaces import holder_seminorm
    s = holder_seminorm(f, p.beta)
    if s > 0.0:
        v = v * (strength * p.Q * rng.uniform(0.2, 1.0) / s)
    return Field(space, np.exp(v))
