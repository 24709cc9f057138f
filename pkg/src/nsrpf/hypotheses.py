"""Standing hypotheses of the expanding-chain setting, and every derived constant.

The map hypotheses ask for bounded degree (at most D preimages), uniform
expansion at scale delta with backward contraction factor rho, uniform
topological exactness (delta-balls cover the space after tau steps), and
uniform Holder potentials (constant H, exponent beta, oscillation at most V).
From these and a cone parameter Q above the threshold

    Q_threshold = H rho^beta / (1 - rho^beta)

the whole quantitative ledger follows in closed form:

    S     = rho^beta (H + Q)                      (image cone parameter, S < Q)
    R     = D^tau e^{tau V} e^{Q delta^beta}      (sup/inf bound after tau steps)
    Delta = 2 log( (Q+S)/(Q-S) * R )              (projective diameter bound)
    gamma = tanh(Delta/4)^{1/tau}                 (per-step contraction rate)
    C1    = Delta gamma^{-2 tau}                  (rate constant for lambda, m)
    C3    = C1 Delta^{-1} e^{2 Delta} (e^Delta - 1)   (rate constant for h)

Certification is sample-based: declared analytic parameter values are the
source of truth and the stored point samples must not contradict them.  Two
entry points are provided, one for the map hypotheses (needs stages with
actual dynamics) and one for the abstract cone conditions (unit function in
the cone, cone invariance of the operators, finite projective diameter of
tau-step images), which also covers operator chains with no dynamics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cones import (ConeParams, birkhoff_rate, hilbert_gap_log_holder,
                    in_log_holder_cone, sample_extremal_log_holder,
                    sample_log_holder_field, theta_log_holder)
from .errors import CertificationError, DomainError, StructuralError
from .spaces import Field, holder_seminorm, unit_field
from .transfer import StageSeq, apply_L, compose_L

_DEFAULT_RNG_SEED = 20250811


@dataclass(frozen=True)
class HypothesisParams:
    """Parameters (D, delta, rho, tau, H, beta, V) of the standing hypotheses."""

    D: int
    delta: float
    rho: float
    tau: int
    H: float
    beta: float
    V: float

    def __post_init__(self):
        if self.D < 1 or self.tau < 1:
            raise DomainError("D and tau must be positive integers")
        if not (0.0 < self.rho < 1.0):
            raise DomainError("rho must lie in (0, 1)")
        if self.delta <= 0.0:
            raise DomainError("delta must be positive")
        if self.H < 0.0 or self.V < 0.0:
            raise DomainError("H and V must be nonnegative")
        if not (0.0 < self.beta <= 1.0):
            raise DomainError("beta must lie in (0, 1]")


def q_threshold(p: HypothesisParams) -> float:
    rb = p.rho ** p.beta
    return p.H * rb / (1.0 - rb)


def default_Q(p: HypothesisParams) -> float:
    """Convention: twice the threshold, or 1 when the threshold vanishes."""
    thr = q_threshold(p)
    return 2.0 * thr if thr > 0.0 else 1.0


def contraction_constants(Delta: float, tau: int) -> tuple[float, float, float]:
    """(gamma, C1, C3) from a diameter bound Delta for tau-step images."""
    if Delta <= 0.0 or tau < 1:
        raise DomainError("need Delta > 0 and tau >= 1")
    gamma = birkhoff_rate(Delta) ** (1.0 / tau)
    C1 = Delta * gamma ** (-2.0 * tau)
    C3 = C1 / Delta * math.exp(2.0 * Delta) * math.expm1(Delta)
    return gamma, C1, C3


@dataclass(frozen=True)
class RateConstants:
    """The minimal constants needed to state exponential-rate envelopes."""

    tau: int
    Delta: float
    gamma: float
    C1: float
    C3: float

    @classmethod
    def from_delta(cls, Delta: float, tau: int) -> "RateConstants":
        gamma, C1, C3 = contraction_constants(Delta, tau)
        return cls(tau=tau, Delta=Delta, gamma=gamma, C1=C1, C3=C3)


@dataclass(frozen=True)
class ConstantsLedger:
    params: HypothesisParams
    Q: float
    Q_threshold: float
    S: float
    R: float
    Delta: float
    gamma: float
    C1: float
    C3: float

    def rate_constants(self) -> RateConstants:
        return RateConstants(tau=self.params.tau, Delta=self.Delta,
                             gamma=self.gamma, C1=self.C1, C3=self.C3)

    def as_text(self) -> str:
        p = self.params
        rows = [("D", p.D), ("delta", p.delta), ("rho", p.rho), ("tau", p.tau),
                ("H", p.H), ("beta", p.beta), ("V", p.V),
                ("Q_threshold", self.Q_threshold), ("Q", self.Q), ("S", self.S),
                ("R", self.R), ("Delta", self.Delta), ("gamma", self.gamma),
                ("C1", self.C1), ("C3", self.C3)]
        return "\n".join(f"{k} = {v:.17g}" if isinstance(v, float) else f"{k} = {v}"
                         for k, v in rows)


def derive_constants(p: HypothesisParams, Q: float) -> ConstantsLedger:
    """Evaluate the closed-form ledger at cone parameter Q.

    Rejects Q at or below the threshold, where the image cone parameter
    S(Q) = rho^beta (H + Q) would fail to satisfy S < Q and the contraction
    argument collapses.
    """
    thr = q_threshold(p)
    if Q <= thr:
        raise DomainError(
            f"Q = {Q} must exceed H rho^beta/(1 - rho^beta) = {thr}: "
            "S(Q) < Q holds exactly on that side of the threshold")
    rb = p.rho ** p.beta
    S = rb * (p.H + Q)
    R = float(p.D) ** p.tau * math.exp(p.tau * p.V) * math.exp(Q * p.delta ** p.beta)
    Delta = 2.0 * math.log((Q + S) / (Q - S) * R)
    gamma, C1, C3 = contraction_constants(Delta, p.tau)
    return ConstantsLedger(params=p, Q=Q, Q_threshold=thr, S=S, R=R,
                           Delta=Delta, gamma=gamma, C1=C1, C3=C3)


def scan_Q(p: HypothesisParams, qs) -> list[ConstantsLedger]:
    """Ledger at each Q of a grid (no optimizer; the grid is the tool)."""
    return [derive_constants(p, float(q)) for q in qs]


def log_shift_seminorm_bound(f: Field, c: float, beta: float) -> tuple[float, float]:
    """Both sides of  |log(f + c)|_beta <= |f|_beta / (c + inf f),  c > -inf f."""
    if c <= -f.inf():
        raise DomainError("need c > -inf f so that f + c is positive")
    lhs = holder_seminorm(Field(f.space, np.log(f.values + c)), beta)
    rhs = holder_seminorm(f, beta) / (c + f.inf())
    return lhs, rhs


# ---------------------------------------------------------------------------
# sample-based certification of the map hypotheses
# ---------------------------------------------------------------------------

def _circle_offsets(n: int, omax: int) -> list[int]:
    """Small offsets plus a Fibonacci-spaced tail, capped at omax."""
    offs = list(range(1, min(9, omax + 1)))
    a, b = 8, 13
    while b <= omax:
        offs.append(b)
        a, b = b, a + b
    if omax not in offs and omax >= 1:
        offs.append(omax)
    return sorted(set(offs))


def _measure_circle_stage(st, delta, beta, offsets):
    """(rho_max, H_max, expanding_ok, onto_ok) for one circle stage."""
    x = st.domain.positions
    n = st.domain.n_points
    rho_m = 0.0
    h_m = 0.0
    phi = st.potential.values
    for o in offsets:
        d = o / n
        if d > delta + 1e-15:
            continue
        y = x + d
        img_gap = st.map_fn(y) - st.map_fn(x)   # lift difference, positive
        if np.any(img_gap <= d):
            return None, None, False, True
        rho_m = max(rho_m, float((d / img_gap).max()))
        dphi = np.abs(np.roll(phi, -o) - phi)
        h_m = max(h_m, float(dphi.max()) / d ** beta)
    lo = st.map_fn(x) - st.map_fn(x - delta)
    hi = st.map_fn(x + delta) - st.map_fn(x)
    onto_ok = bool(lo.min() >= delta and hi.min() >= delta)
    return rho_m, h_m, True, onto_ok


def _circle_exactness(seq: StageSeq, n: int, delta: float, k_max: int) -> int | None:
    """Steps until the image of every delta-ball of X_n covers the circle.

    Images of arcs are tracked exactly through the monotone lifts, so
    covering means accumulated length >= 1.
    """
    space = seq.space(n)
    x = space.positions
    lo = x - delta
    hi = x + delta
    for k in range(1, k_max + 1):
        if n + k > seq.n_max:
            return None
        st = seq.stage(n + k - 1)
        lo = st.map_fn(lo)
        hi = st.map_fn(hi)
        if float((hi - lo).min()) >= 1.0:
            return k
    return None


def _finite_exactness(seq: StageSeq, n: int, delta: float, k_max: int) -> int | None:
    space = seq.space(n)
    balls = [np.nonzero(space.dist_table[i] <= delta)[0] for i in range(space.n_points)]
    for k in range(1, k_max + 1):
        if n + k > seq.n_max:
            return None
        fwd = seq.stage(n + k - 1).forward_index
        balls = [np.unique(fwd[b]) for b in balls]
        target = seq.space(n + k).n_points
        if all(len(b) == target for b in balls):
            return k
    return None


def certify_map_hypotheses(seq: StageSeq) -> HypothesisParams:
    """Measure the tightest hypothesis parameters the sample supports.

    Uses exact forward positions (not snapped grid images) for the expansion
    ratios, arc arithmetic through the lifts for exactness on circle grids,
    and the stored tables for finite point sets.  Raises CertificationError
    naming the violated condition when the sample contradicts expansion or
    covering; when the family declares analytic values, a measured value
    beyond the declared one is also a certification failure (it means the
    encoding is wrong, since samples can only underestimate suprema).
    """
    decl = seq.declared
    if decl is None:
        raise CertificationError("bounded-degree",
                                 "certification needs the family's declared delta and beta")
    delta, beta = decl.delta, decl.beta
    d_m = 0
    rho_m, h_m, v_m = 0.0, 0.0, 0.0
    k_max = 8 * max(1, math.ceil(math.log2(1.0 / delta)))
    for n in seq.stage_indices:
        st = seq.stage(n)
        if not st.has_map:
            raise CertificationError(
                "bounded-degree", "map hypotheses need stages with actual dynamics")
        d_m = max(d_m, st.n_branches)
        if st.domain.kind == "circle-grid":
            offsets = _circle_offsets(st.domain.n_points,
                                      int(delta * st.domain.n_points))
            rho_s, h_s, expanding, onto = _measure_circle_stage(st, delta, beta, offsets)
            if not expanding:
                raise CertificationError(
                    "uniform-expansion", f"non-expanding pair at stage {n}")
            if not onto:
                raise CertificationError(
                    "uniform-expansion", f"delta-ball image fails to cover a delta-ball at stage {n}")
            rho_m = max(rho_m, rho_s)
            h_m = max(h_m, h_s)
        else:
            dt = st.domain.dist_table
            iu, ju = np.nonzero((dt <= delta) & (dt > 0.0))
            if iu.size:
                di = dt[iu, ju]
                dimg = seq.space(n + 1).dist_table[st.forward_index[iu], st.forward_index[ju]]
                if np.any(dimg <= di):
                    raise CertificationError(
                        "uniform-expansion", f"non-expanding pair at stage {n}")
                rho_m = max(rho_m, float((di / dimg).max()))
                h_m = max(h_m, float((np.abs(st.potential.values[iu]
                                             - st.potential.values[ju]) / di ** beta).max()))
        v_m = max(v_m, st.potential.sup() - st.potential.inf())
    tau_m = 0
    measured_any = False
    for n in seq.space_indices:
        if n + 1 > seq.n_max:
            break
        probe = (_circle_exactness if seq.space(n).kind == "circle-grid"
                 else _finite_exactness)
        t = probe(seq, n, delta, k_max)
        if t is None:
            if n + k_max <= seq.n_max:
                raise CertificationError(
                    "topological-exactness",
                    f"delta-ball images from index {n} fail to cover within {k_max} steps")
            continue   # not enough forward room to certify this index
        measured_any = True
        tau_m = max(tau_m, t)
    if not measured_any:
        raise CertificationError("topological-exactness",
                                 "window too short to certify exactness anywhere")
    measured = HypothesisParams(D=d_m, delta=delta, rho=rho_m, tau=tau_m,
                                H=h_m, beta=beta, V=v_m)
    _check_against_declared(measured, decl)
    return measured


def _check_against_declared(measured: HypothesisParams, decl: HypothesisParams):
    slack = 1e-9
    if measured.D > decl.D:
        raise CertificationError("bounded-degree",
                                 f"measured degree {measured.D} exceeds declared {decl.D}")
    if measured.rho > decl.rho * (1.0 + slack):
        raise CertificationError("uniform-expansion",
                                 f"measured rho {measured.rho} exceeds declared {decl.rho}")
    if measured.H > decl.H * (1.0 + slack) + 1e-15:
        raise CertificationError("holder-potential",
                                 f"measured H {measured.H} exceeds declared {decl.H}")
    if measured.V > decl.V * (1.0 + slack) + 1e-15:
        raise CertificationError("holder-potential",
                                 f"measured V {measured.V} exceeds declared {decl.V}")
    if measured.tau > decl.tau:
        raise CertificationError("topological-exactness",
                                 f"measured tau {measured.tau} exceeds declared {decl.tau}")


# ---------------------------------------------------------------------------
# abstract cone conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeCertificate:
    """Outcome of the cone-condition check.

    Delta_measured is the largest projective diameter observed among
    tau-step images (sampled pairs, exact column diameters for operator
    stages, and the unit function's image ratio).  block_factor is the
    Birkhoff contraction factor tanh(Delta_measured/4) of one tau-block.
    """

    Delta_measured: float
    tau: int
    block_factor: float
    density_basis: str
    n_samples: int

    def rate_constants(self) -> RateConstants:
        return RateConstants.from_delta(self.Delta_measured, self.tau)


def _column_diameter(mat: np.ndarray) -> float:
    """Exact projective diameter of M C+ for a strictly positive matrix:
    the extreme rays of C+ on a finite set are the coordinate directions."""
    logm = np.log(mat)
    best = 0.0
    d = mat.shape[1]
    for a in range(d):
        diff = logm[:, a][:, None] - logm[:, a + 1:]   # log(M[:,a]/M[:,b])
        if diff.size:
            best = max(best, float((diff.max(axis=0) - diff.min(axis=0)).max()))
    return best


def certify_cone_conditions(seq: StageSeq, p: ConeParams, *,
                            params: HypothesisParams | None = None,
                            rng: np.random.Generator | None = None,
                            n_pairs: int = 12, stride: int = 8) -> ConeCertificate:
    """Check the abstract cone conditions on samples and measure Delta.

    Verifies that the unit function lies in every cone, that operators map
    the cone into the next one (for map chains, into the strictly smaller
    parameter S(Q), which is the mechanism behind invariance), and bounds
    the projective diameter of tau-step images.  Operator chains use tau = 1
    and exact column-pair diameters (coordinate directions are the extreme
    rays of the positive cone on a finite set).  Map chains sample both
    random interior pairs and near-extremal exponential-of-distance fields;
    Delta_measured additionally dominates 4 artanh(rho) for every observed
    tau-block contraction factor rho, so the certified tanh(Delta/4) rate is
    an upper envelope for everything seen.
    """
    rng = rng or np.random.default_rng(_DEFAULT_RNG_SEED)
    has_map = seq.stage(seq.n_min).has_map
    tau = params.tau if params is not None else (1 if not has_map else None)
    if tau is None:
        raise StructuralError("map chains need measured hypothesis params for tau")

    one = unit_field(seq.space(seq.n_min))
    if not in_log_holder_cone(one, p):
        raise CertificationError("unit-in-cone", "the constant function fell outside the cone")

    s_param = None
    if params is not None:
        s_param = params.rho ** params.beta * (params.H + p.Q)
        if s_param >= p.Q:
            raise CertificationError(
                "cone-invariance",
                f"S(Q) = {s_param} is not below Q = {p.Q}; raise Q above the threshold")

    delta_m = 0.0
    max_ratio = 0.0
    n_sampled = 0
    check_indices = [n for n in seq.stage_indices if (n - seq.n_min) % stride == 0
                     and n + tau <= seq.n_max]
    if not check_indices:
        raise StructuralError("window too short for one tau-block")
    for n in check_indices:
        st = seq.stage(n)
        if not has_map:
            block = st.matrix()
            for j in range(n + 1, n + tau):
                block = seq.stage(j).matrix() @ block
            delta_m = max(delta_m, _column_diameter(block))
        # unit-image ratio bound after tau steps
        img1 = compose_L(seq, n, tau, unit_field(seq.space(n)))
        delta_m = max(delta_m, math.log(img1.sup() / img1.inf()))
        # cone invariance on samples, one-step membership at parameter S(Q)
        for t in range(n_pairs):
            extremal = t % 2 == 1
            draw = sample_extremal_log_holder if extremal else sample_log_holder_field
            f = draw(seq.space(n), p, rng)
            lf = apply_L(st, f)
            target = ConeParams(Q=s_param, delta=p.delta, beta=p.beta) if s_param else p
            if not in_log_holder_cone(lf, target):
                raise CertificationError(
                    "cone-invariance",
                    f"image of a sampled cone field left the cone at stage {n}")
            g = draw(seq.space(n), p, rng)
            fi = compose_L(seq, n, tau, f)
            gi = compose_L(seq, n, tau, g)
            theta_out = theta_log_holder(fi, gi, p, checked=False)
            delta_m = max(delta_m, theta_out)
            a, b = hilbert_gap_log_holder(f, g, p)
            if a > 0.0 and math.isfinite(b) and b > a * (1.0 + 1e-12):
                theta_in = math.log(b / a)
                if theta_out > 0.0:
                    max_ratio = max(max_ratio, theta_out / theta_in)
            n_sampled += 1
    if max_ratio > 0.0:
        delta_m = max(delta_m, 4.0 * math.atanh(min(max_ratio, 1.0 - 1e-12)))
    # rank-one chains collapse every image to a single ray; keep the
    # certified diameter positive so downstream rate constants stay finite
    delta_m = max(delta_m, 1e-9)
    basis = "holder-shift" if has_map else "coordinate-span"
    return ConeCertificate(Delta_measured=delta_m, tau=tau,
                           block_factor=birkhoff_rate(delta_m),
                           density_basis=basis, n_samples=n_sampled)
