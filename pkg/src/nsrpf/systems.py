"""Built-in chain families and the dense oracles used to cross-check solvers.

Two families:

* Matrix chains: per-index strictly positive d x d matrices acting as
  abstract operator stages on d-point spaces with all pairwise distances 1.
  At locality radius 1/2 the pair set is empty, so the log-Holder cone
  degenerates to the positive cone and the abstract cone conditions apply
  with tau = 1.  These chains are exactly representable, which makes them
  the oracle-friendly testbed.

* Circle chains: degree-2 expanding maps x -> 2x + eps_n sin(2 pi x) mod 1
  on the uniform N-grid with potentials a_n cos(2 pi x) + b_n.  For
  |eps| < 1/(2 pi), the derivative stays in [2 - 2 pi |eps|, 2 + 2 pi |eps|],
  so the map hypotheses hold with analytic parameter values recorded on the
  sequence.  Branch inverses are solved by bisection on the monotone lift to
  1e-13; off-grid function values are linearly interpolated.

Oracles recompute the chain data by explicit (log-rescaled) dense matrix
products, independently of the incremental solver code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, StructuralError
from .hypotheses import HypothesisParams
from .spaces import Field, PointSpace
from .transfer import Stage, StageSeq

_BISECT_TOL = 1e-13


# ---------------------------------------------------------------------------
# matrix chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MatrixChainSpec:
    """Per-index strictly positive matrices M_n over an integer window.

    Entry (x, y) of M_n is the weight carried from domain point y to
    codomain point x, i.e. the exponential of a two-symbol potential.
    """

    d: int
    window: tuple[int, int]
    matrices: tuple
    seed: Optional[int] = None

    def __post_init__(self):
        n_min, n_max = self.window
        if n_max <= n_min:
            raise StructuralError("window must be nonempty")
        if len(self.matrices) != n_max - n_min:
            raise StructuralError("need one matrix per window step")
        for m in self.matrices:
            m = np.asarray(m)
            if m.shape != (self.d, self.d):
                raise StructuralError(f"every matrix must be {self.d} x {self.d}")
            if np.any(m <= 0.0) or not np.all(np.isfinite(m)):
                raise DomainError("matrix entries must be strictly positive and finite")

    @classmethod
    def stationary(cls, m, window: tuple[int, int]) -> "MatrixChainSpec":
        m = np.asarray(m, dtype=np.float64)
        k = window[1] - window[0]
        return cls(d=m.shape[0], window=window, matrices=tuple([m.copy() for _ in range(k)]))

    @classmethod
    def random(cls, d: int, window: tuple[int, int], low: float = 1.0,
               high: float = 2.0, seed: int = 0) -> "MatrixChainSpec":
        rng = np.random.default_rng(seed)
        k = window[1] - window[0]
        mats = tuple(rng.uniform(low, high, size=(d, d)) for _ in range(k))
        return cls(d=d, window=window, matrices=mats, seed=seed)

    def matrix(self, n: int) -> np.ndarray:
        n_min, n_max = self.window
        if not (n_min <= n < n_max):
            raise StructuralError(f"index {n} outside window [{n_min}, {n_max})")
        return np.asarray(self.matrices[n - n_min], dtype=np.float64)


def build_matrix_chain(spec: MatrixChainSpec) -> StageSeq:
    """Stages whose apply_L is exactly f -> M_n f and dual is sigma -> M_n^T sigma."""
    space = PointSpace.simplex(spec.d)
    stages = tuple(Stage.from_matrix(spec.matrix(n), space, space)
                   for n in range(*spec.window))
    return StageSeq(n_min=spec.window[0], n_max=spec.window[1], stages=stages,
                    two_sided=True, declared=None)


# ---------------------------------------------------------------------------
# circle chains
# ---------------------------------------------------------------------------

def _mode_values(mode: str, amp: float, window: tuple[int, int],
                 seed: Optional[int]) -> np.ndarray:
    ns = np.arange(window[0], window[1])
    if mode == "constant":
        return np.full(ns.shape, amp)
    if mode == "alternating":
        return amp * np.where(ns % 2 == 0, 1.0, -1.0)
    if mode == "sin":
        return amp * np.sin(ns.astype(np.float64))
    if mode == "random":
        rng = np.random.default_rng(0 if seed is None else seed)
        return rng.uniform(-amp, amp, size=ns.shape)
    raise DomainError(f"unknown coefficient mode {mode!r}")


@dataclass(frozen=True, eq=False)
class CircleMapSpec:
    """Maps x -> 2x + eps_n sin(2 pi x) on the N-point circle grid with
    potentials a_n cos(2 pi x) + b_n."""

    N: int
    window: tuple[int, int]
    eps: np.ndarray
    a: np.ndarray
    b: np.ndarray
    delta: float = 0.2
    seed: Optional[int] = None

    def __post_init__(self):
        n_min, n_max = self.window
        k = n_max - n_min
        if self.N < 8 or self.N % 2:
            raise DomainError("use an even grid with at least 8 points")
        for arr, name in ((self.eps, "eps"), (self.a, "a"), (self.b, "b")):
            if np.asarray(arr).shape != (k,):
                raise StructuralError(f"{name} needs one value per window step")
        emax = float(np.abs(self.eps).max())
        if emax >= 1.0 / (2.0 * math.pi):
            raise DomainError("need |eps| < 1/(2 pi) for uniform expansion")
        if (2.0 + 2.0 * math.pi * emax) * self.delta >= 0.5:
            raise DomainError("delta too large for unambiguous circle distances under one step")

    @classmethod
    def make(cls, N: int, window: tuple[int, int], *, eps: float = 0.05,
             eps_mode: str = "alternating", a: float = 0.1, a_mode: str = "sin",
             b: float = 0.0, b_mode: str = "constant", delta: float = 0.2,
             seed: Optional[int] = None) -> "CircleMapSpec":
        return cls(N=N, window=window,
                   eps=_mode_values(eps_mode, eps, window, seed),
                   a=_mode_values(a_mode, a, window, None if seed is None else seed + 1),
                   b=_mode_values(b_mode, b, window, None if seed is None else seed + 2),
                   delta=delta, seed=seed)

    def declared_params(self) -> HypothesisParams:
        emax = float(np.abs(self.eps).max())
        amax = float(np.abs(self.a).max())
        rho = 1.0 / (2.0 - 2.0 * math.pi * emax)
        # a delta-ball is an arc of length 2 delta; lengths grow by at least
        # 1/rho per step and the circle is covered once the length reaches 1
        tau = max(1, math.ceil(math.log(1.0 / (2.0 * self.delta)) / math.log(1.0 / rho)))
        return HypothesisParams(D=2, delta=self.delta, rho=rho, tau=tau,
                                H=2.0 * math.pi * amax, beta=1.0, V=2.0 * amax)


_GRID_SNAP_UNITS = 1e-9   # in grid units; exact-grid preimages stay exact


def _make_circle_stage(space: PointSpace, eps: float, a: float, b: float) -> Stage:
    n = space.n_points
    x = space.positions

    def lift(y):
        return 2.0 * y + eps * np.sin(2.0 * math.pi * y)

    def potential_fn(y):
        return a * np.cos(2.0 * math.pi * y) + b

    # branch inverses: the lift is strictly increasing with lift(0) = 0,
    # lift(1/2) = 1, lift(1) = 2, so branch br solves lift(y) = x + br
    # on [br/2, (br+1)/2], independent of eps
    branch_idx = np.empty((2, n), dtype=np.int64)
    branch_frac = np.empty((2, n))
    branch_w = np.empty((2, n))
    branch_pos = np.empty((2, n))
    for br in range(2):
        target = x + br
        lo = np.full(n, br / 2.0)
        hi = np.full(n, (br + 1) / 2.0)
        while float((hi - lo).max()) > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            above = lift(mid) > target
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        y = 0.5 * (lo + hi)
        scaled = y * n
        nearest = np.round(scaled)
        snap = np.abs(scaled - nearest) < _GRID_SNAP_UNITS
        scaled = np.where(snap, nearest, scaled)
        base = np.floor(scaled).astype(np.int64)
        frac = scaled - base
        branch_idx[br] = base % n
        branch_frac[br] = frac
        branch_pos[br] = scaled / n
        branch_w[br] = np.exp(potential_fn(scaled / n))
    fwd_pos = lift(x) % 1.0
    fwd_idx = np.round(fwd_pos * n).astype(np.int64) % n
    return Stage(domain=space, codomain=space, branch_index=branch_idx,
                 branch_frac=branch_frac, branch_weight=branch_w,
                 forward_index=fwd_idx, forward_pos=fwd_pos,
                 potential=Field(space, potential_fn(x)),
                 potential_fn=potential_fn, map_fn=lift,
                 branch_pos=branch_pos, degree_bound=2)


def build_circle_chain(spec: CircleMapSpec) -> StageSeq:
    space = PointSpace.circle_grid(spec.N)
    stages = tuple(_make_circle_stage(space, float(spec.eps[k]), float(spec.a[k]),
                                      float(spec.b[k]))
                   for k in range(spec.window[1] - spec.window[0]))
    return StageSeq(n_min=spec.window[0], n_max=spec.window[1], stages=stages,
                    two_sided=True, declared=spec.declared_params())


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

class OracleConvergenceError(RuntimeError):
    """Power iteration failed its Rayleigh consistency check."""


def oracle_stationary_rpf(m: np.ndarray, iters: int = 2000,
                          check_tol: float = 1e-13) -> tuple[float, np.ndarray, np.ndarray]:
    """Classical single-matrix eigendata by long power iteration.

    Returns (lam, m_left, h_right) with m_left a probability vector and
    <h, m> = 1.  Left and right iterations run independently; a Rayleigh
    check guards against non-convergence.
    """
    m = np.asarray(m, dtype=np.float64)
    if np.any(m <= 0.0):
        raise DomainError("the stationary oracle needs a strictly positive matrix")
    d = m.shape[0]
    v = np.full(d, 1.0 / d)            # right vector, h direction
    w = np.full(d, 1.0 / d)            # left vector, eigenmeasure direction
    lam = 0.0
    for _ in range(iters):
        v_new = m @ v
        lam = float(v_new.sum() / v.sum())
        v = v_new / v_new.sum()
        w_new = m.T @ w
        w = w_new / w_new.sum()
    rayleigh = float(w @ (m @ v)) / float(w @ v)
    if abs(rayleigh - lam) > check_tol * max(1.0, abs(lam)):
        raise OracleConvergenceError(f"power iteration drift {abs(rayleigh - lam)}")
    w = w / w.sum()
    v = v / float(v @ w)
    return lam, w, v


@dataclass(frozen=True)
class OracleEstimate:
    """Finite-depth chain data at one index, from dense products."""

    n: int
    k: int
    r: float                 # log of the mass-growth ratio at depth k
    lam: float
    m_weights: np.ndarray    # normalized pullback of the tail seed
    h_values: Optional[np.ndarray]


def _pullback_chain(spec: MatrixChainSpec, tail: int, bottom: int,
                    seed_weights: Optional[np.ndarray] = None):
    """Normalized dual products (M_n^T ... ) from the tail level downward.

    Returns dicts n -> weights and n -> lam with  M_n^T m_{n+1} = lam_n m_n
    exact by construction, mirroring the limit's defining quotients.
    """
    d = spec.d
    w = np.full(d, 1.0 / d) if seed_weights is None else seed_weights / seed_weights.sum()
    weights = {tail: w}
    lams = {}
    for n in range(tail - 1, bottom - 1, -1):
        raw = spec.matrix(n).T @ weights[n + 1]
        mass = float(raw.sum())
        lams[n] = mass
        weights[n] = raw / mass
    return weights, lams


def oracle_rpf_chain(spec: MatrixChainSpec, *, tail: Optional[int] = None,
                     bottom: Optional[int] = None,
                     seed_weights: Optional[np.ndarray] = None):
    """Full oracle chain (lam_n, m_n, h_n) from dense log-rescaled products.

    m and lam come from one dual sweep off the tail; h_n is the forward
    product from the bottom seed, normalized with the oracle's own lam and
    m.  Shares no code with the incremental solver.
    """
    n_min, n_max = spec.window
    tail = n_max if tail is None else tail
    bottom = n_min if bottom is None else bottom
    weights, lams = _pullback_chain(spec, tail, bottom, seed_weights)
    d = spec.d
    h = {bottom: np.ones(d) / float(np.ones(d) @ weights[bottom])}
    for n in range(bottom, tail):
        h[n + 1] = (spec.matrix(n) @ h[n]) / lams[n]
    return lams, weights, h


def oracle_nonstationary_products(spec: MatrixChainSpec, n: int, k: int,
                                  seed_weights: Optional[np.ndarray] = None) -> OracleEstimate:
    """Depth-k estimates at index n by explicit dense products.

    r is log( <L_n^k 1, sigma> / <L_{n+1}^{k-1} 1, sigma> ) computed from the
    rescaled dual chain, m the normalized pullback of the tail seed, and h
    the depth-k forward iterate normalized against the oracle's own data.
    """
    n_min, n_max = spec.window
    if n + k > n_max or n - k < n_min:
        raise StructuralError("window does not cover depth k on both sides of n")
    if k == 0:
        d = spec.d
        w = np.full(d, 1.0 / d) if seed_weights is None else seed_weights / seed_weights.sum()
        return OracleEstimate(n=n, k=0, r=math.nan, lam=math.nan,
                              m_weights=w, h_values=None)
    weights, lams = _pullback_chain(spec, n + k, n, seed_weights)
    # backward estimate of h at n from depth k below, using oracle data only
    sub_weights, sub_lams = _pullback_chain(spec, n_max, n - k, seed_weights)
    g = np.ones(spec.d) / float(np.ones(spec.d) @ sub_weights[n - k])
    for j in range(n - k, n):
        g = (spec.matrix(j) @ g) / sub_lams[j]
    return OracleEstimate(n=n, k=k, r=math.log(lams[n]), lam=lams[n],
                          m_weights=weights[n], h_values=g)
