import math

import numpy as np
import pytest

import nsrpf as nr
from nsrpf.cones import (ConeParams, birkhoff_rate, hilbert_gap_positive,
                         in_log_holder_cone, in_positive_cone, norm_theta_bound,
                         pair_set, sample_log_holder_field, theta_log_holder,
                         theta_positive)
from nsrpf.errors import DomainError
from nsrpf.spaces import Field, MeasureVec, PointSpace, pair, unit_field

RNG = np.random.default_rng(42)


@pytest.fixture(scope="module")
def circle16():
    return PointSpace.circle_grid(16)


@pytest.fixture(scope="module")
def params16():
    return ConeParams(Q=2.0, delta=0.3, beta=1.0)


def two_point_space():
    return PointSpace.finite([[0.0, 1.0], [1.0, 0.0]])


def test_positive_cone_membership():
    sp = two_point_space()
    assert in_positive_cone(unit_field(sp))
    assert not in_positive_cone(Field(sp, [0.0, 0.0]))
    assert not in_positive_cone(Field(sp, [1.0, -0.1]))


def _pair_scan_inside(f, p):
    """Brute-force oracle for cone membership: check every pair directly."""
    ps = pair_set(f.space, p.delta)
    E = ps.exp_weights(p.Q, p.beta)
    return bool(np.all(f.values[ps.j] <= E * f.values[ps.i] * (1 + 1e-12)))


def test_log_holder_membership(circle16, params16):
    assert in_log_holder_cone(unit_field(circle16) * 3.0, params16)
    # exp(Q d(x, 0)) saturates the defining inequality along adjacent pairs
    # in one direction; the pair scan is the oracle
    d0 = circle16.circle_distance_points(circle16.positions, 0.0)
    f = Field(circle16, np.exp(params16.Q * d0))
    assert _pair_scan_inside(f, params16)
    assert in_log_holder_cone(f, params16)
    # exp(Q x) with raw coordinates jumps at the seam and must be rejected,
    # in agreement with the scan
    g = Field(circle16, np.exp(params16.Q * circle16.positions))
    assert not _pair_scan_inside(g, params16)
    assert not in_log_holder_cone(g, params16)
    # an isolated zero with a positive neighbour within delta is excluded
    h = np.ones(16)
    h[3] = 0.0
    assert not in_log_holder_cone(Field(circle16, h), params16)


def test_hilbert_gap_positive_hand_values():
    sp = two_point_space()
    f = Field(sp, [1.0, 1.0])
    assert hilbert_gap_positive(f, Field(sp, [1.0, 2.0])) == (1.0, 2.0)
    a, b = hilbert_gap_positive(Field(sp, [1.0, 2.0]), Field(sp, [2.0, 1.0]))
    assert (a, b) == (0.5, 2.0)
    a, b = hilbert_gap_positive(f, 3.0 * f)
    assert a == b == 3.0
    # incomparable supports
    a, b = hilbert_gap_positive(Field(sp, [1.0, 0.0]), Field(sp, [1.0, 1.0]))
    assert math.isinf(b)


def test_theta_positive_values():
    sp = two_point_space()
    f = Field(sp, [1.0, 2.0])
    assert theta_positive(f, 2.0 * f) == 0.0
    assert theta_positive(f, Field(sp, [2.0, 1.0])) == pytest.approx(math.log(4.0))
    # enumeration oracle for the sup formula
    fv, gv = np.array([1.0, 2.0]), np.array([2.0, 1.0])
    best = max(gv[x] * fv[y] / (gv[y] * fv[x]) for x in range(2) for y in range(2))
    assert theta_positive(f, Field(sp, gv)) == pytest.approx(math.log(best))
    # special case against the unit function
    f2 = Field(sp, [1.0, 4.0])
    assert theta_positive(f2, unit_field(sp)) == pytest.approx(math.log(4.0))


def test_theta_positive_projective_invariance(circle16):
    for _ in range(20):
        f = Field(circle16, RNG.uniform(0.2, 3.0, 16))
        g = Field(circle16, RNG.uniform(0.2, 3.0, 16))
        t = theta_positive(f, g)
        assert theta_positive(2.7 * f, 0.3 * g) == pytest.approx(t, rel=1e-12)
        assert theta_positive(g, f) == pytest.approx(t, rel=1e-12)


def test_theta_positive_triangle(circle16):
    for _ in range(50):
        f, g, h = (Field(circle16, RNG.uniform(0.1, 5.0, 16)) for _ in range(3))
        assert (theta_positive(f, h)
                <= theta_positive(f, g) + theta_positive(g, h) + 1e-10)


def _sup_t_in_cone_bisect(f, g, p, hi=1e6, iters=200):
    """Independent oracle: sup { t : g - t f in Lambda(Q) } by bisection."""
    ps = pair_set(f.space, p.delta)
    E = ps.exp_weights(p.Q, p.beta)

    def inside(t):
        v = g.values - t * f.values
        if v.min() < -1e-14 * max(1.0, np.abs(v).max()):
            return False
        if len(ps) == 0:
            return True
        viol = v[ps.j] - E * v[ps.i]
        scale = max(1.0, float(np.abs(v).max()))
        return bool(viol.max() <= 1e-14 * scale)

    lo = 0.0
    assert inside(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return lo


def test_theta_log_holder_against_bisection(circle16, params16):
    for trial in range(12):
        f = sample_log_holder_field(circle16, params16, RNG)
        g = sample_log_holder_field(circle16, params16, RNG)
        a_formula, b_formula = nr.hilbert_gap_positive(f, g)  # only for scale
        from nsrpf.cones import hilbert_gap_log_holder
        a, b = hilbert_gap_log_holder(f, g, params16)
        a_bis = _sup_t_in_cone_bisect(f, g, params16)
        b_bis = 1.0 / _sup_t_in_cone_bisect(g, f, params16)
        assert a == pytest.approx(a_bis, rel=1e-9)
        assert b == pytest.approx(b_bis, rel=1e-9)
        assert a <= a_formula + 1e-12 and b >= b_formula - 1e-12


def test_theta_log_holder_basics(circle16, params16):
    f = sample_log_holder_field(circle16, params16, RNG)
    assert theta_log_holder(f, 1.7 * f, params16) == 0.0
    one = unit_field(circle16)
    assert theta_log_holder(one, one, params16) == 0.0
    with pytest.raises(DomainError):
        theta_log_holder(Field(circle16, -np.ones(16)), one, params16)


def test_metric_nesting(circle16, params16):
    for _ in range(50):
        f = sample_log_holder_field(circle16, params16, RNG)
        g = sample_log_holder_field(circle16, params16, RNG)
        assert theta_positive(f, g) <= theta_log_holder(f, g, params16) + 1e-12


def test_sup_inf_identity(circle16, params16):
    for _ in range(30):
        f = sample_log_holder_field(circle16, params16, RNG)
        t = theta_log_holder(f, unit_field(circle16), params16)
        assert f.sup() <= math.exp(t) * f.inf() * (1 + 1e-12)


def test_birkhoff_rate():
    assert birkhoff_rate(math.inf) == 1.0
    assert birkhoff_rate(4.0) == pytest.approx(math.tanh(1.0))
    assert birkhoff_rate(0.0) == 0.0
    assert birkhoff_rate(1e-12) < 1e-12
    with pytest.raises(DomainError):
        birkhoff_rate(-1.0)


def test_norm_theta_bound_hand_value():
    sp = two_point_space()
    m = MeasureVec(sp, [0.5, 0.5])
    f = Field(sp, [0.5, 1.5])
    g = Field(sp, [1.5, 0.5])
    lhs, rhs = norm_theta_bound(f, g, m)
    assert lhs == pytest.approx(1.0)
    assert theta_positive(f, g) == pytest.approx(math.log(9.0))
    assert rhs == pytest.approx(8.0 * 1.5)
    lhs0, rhs0 = norm_theta_bound(f, f, m)
    assert lhs0 == 0.0 and rhs0 == 0.0
    with pytest.raises(DomainError):
        norm_theta_bound(f, 2.0 * g, m)


def test_norm_theta_bound_sweep(circle16):
    m = MeasureVec.uniform(circle16)
    for _ in range(300):
        f = Field(circle16, RNG.uniform(0.05, 4.0, 16))
        g = Field(circle16, RNG.uniform(0.05, 4.0, 16))
        f = f * (1.0 / pair(f, m))
        g = g * (1.0 / pair(g, m))
        lhs, rhs = norm_theta_bound(f, g, m)
        assert lhs <= rhs + 1e-9


from hypothesis import given, settings
from hypothesis import strategies as st


@settings(max_examples=60, deadline=None)
@given(fv=st.lists(st.floats(0.01, 100.0), min_size=5, max_size=5),
       gv=st.lists(st.floats(0.01, 100.0), min_size=5, max_size=5),
       a=st.floats(1e-3, 1e3), b=st.floats(1e-3, 1e3))
def test_theta_positive_metric_axioms(fv, gv, a, b):
    sp = PointSpace.finite(np.ones((5, 5)) - np.eye(5))
    f, g = Field(sp, fv), Field(sp, gv)
    t = theta_positive(f, g)
    assert t >= 0.0
    assert theta_positive(g, f) == pytest.approx(t, rel=1e-12, abs=1e-12)
    assert theta_positive(a * f, b * g) == pytest.approx(t, rel=1e-11, abs=1e-11)
    assert theta_positive(f, a * f) == 0.0


def test_pair_set_swap_closed(circle16):
    ps = pair_set(circle16, 0.3)
    fwd = set(zip(ps.i.tolist(), ps.j.tolist()))
    assert all((j, i) in fwd for (i, j) in fwd)
    assert np.all(ps.d <= 0.3 + 1e-15)
    assert np.all(ps.i != ps.j)
