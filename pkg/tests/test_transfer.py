import math

import numpy as np
import pytest

import nsrpf as nr
from nsrpf.cones import ConeParams, in_log_holder_cone, sample_log_holder_field
from nsrpf.errors import DomainError, StructuralError
from nsrpf.spaces import Field, MeasureVec, PointSpace, pair, unit_field
from nsrpf.systems import CircleMapSpec, MatrixChainSpec, build_circle_chain, build_matrix_chain
from nsrpf.transfer import (apply_L, apply_L_dual, birkhoff_sum, compose_L,
                            compose_L_dual, normalize_stage)

from conftest import brute_compose_values, build_halving_chain

RNG = np.random.default_rng(7)


@pytest.fixture(scope="module")
def doubling():
    return build_circle_chain(CircleMapSpec.make(
        N=64, window=(0, 4), eps=0.0, eps_mode="constant",
        a=0.0, a_mode="constant"))


def test_doubling_counts_preimages(doubling):
    one = unit_field(doubling.space(0))
    img = apply_L(doubling.stage(0), one)
    assert np.allclose(img.values, 2.0)      # L 1 counts preimages exactly


def test_matrix_stage_is_matvec():
    m = np.array([[2.0, 1.0], [1.0, 1.0]])
    seq = build_matrix_chain(MatrixChainSpec.stationary(m, (0, 2)))
    st = seq.stage(0)
    f = Field(st.domain, [1.0, 0.0])
    assert np.allclose(apply_L(st, f).values, m @ [1.0, 0.0])
    for _ in range(10):
        v = RNG.normal(size=2)
        assert np.array_equal(apply_L(st, Field(st.domain, v)).values, m @ v)
        w = RNG.uniform(0.1, 1.0, 2)
        assert np.array_equal(apply_L_dual(st, MeasureVec(st.codomain, w)).weights,
                              m.T @ w)


def test_constant_potential_factors_out():
    base = build_halving_chain(levels=1, n_top=8, potentials=[np.zeros(8)])
    shifted = build_halving_chain(levels=1, n_top=8, potentials=[np.full(8, 0.7)])
    f = Field(base.space(0), RNG.normal(size=8))
    f2 = Field(shifted.space(0), f.values)
    a = apply_L(base.stage(0), f)
    b = apply_L(shifted.stage(0), f2)
    assert np.allclose(b.values, math.exp(0.7) * a.values, rtol=1e-14)


def test_dual_point_mass_unfolds_preimages():
    seq = build_halving_chain(levels=1, n_top=8, seed=3)
    st = seq.stage(0)
    sigma = MeasureVec.point_mass(st.codomain, 2)
    back = apply_L_dual(st, sigma)
    expect = np.zeros(8)
    expect[4] = st.branch_weight[0, 2]
    expect[5] = st.branch_weight[1, 2]
    assert np.allclose(back.weights, expect)


def test_dual_total_mass_doubling(doubling):
    sigma = MeasureVec.uniform(doubling.space(1))
    back = apply_L_dual(doubling.stage(0), sigma)
    assert float(back.weights.sum()) == pytest.approx(2.0)


def test_adjoint_identity_random(doubling):
    seq = build_halving_chain(levels=3, n_top=16, seed=11)
    for s in (seq, doubling):
        for n in s.stage_indices:
            st = s.stage(n)
            f = Field(st.domain, RNG.normal(size=st.domain.n_points))
            sig = MeasureVec(st.codomain, RNG.uniform(0.1, 2.0, st.codomain.n_points))
            lhs = pair(f, apply_L_dual(st, sig))
            rhs = pair(apply_L(st, f), sig)
            assert lhs == pytest.approx(rhs, rel=1e-12)


def test_compose_matches_brute_force_enumeration():
    seq = build_halving_chain(levels=3, n_top=16, seed=5)
    f = RNG.normal(size=16)
    for k in range(4):
        got = compose_L(seq, 0, k, Field(seq.space(0), f))
        want = brute_compose_values(seq, 0, k, f)
        assert np.allclose(got.values, want, rtol=1e-13)
    # k = 0 is the identity, k = 2 is the unfolded double application
    assert np.array_equal(compose_L(seq, 0, 0, Field(seq.space(0), f)).values, f)
    two = apply_L(seq.stage(1), apply_L(seq.stage(0), Field(seq.space(0), f)))
    assert np.allclose(compose_L(seq, 0, 2, Field(seq.space(0), f)).values,
                       two.values)


def test_compose_matches_matrix_products():
    spec = MatrixChainSpec.random(d=3, window=(0, 5), seed=9)
    seq = build_matrix_chain(spec)
    f = RNG.normal(size=3)
    prod = np.eye(3)
    for j in range(0, 4):
        prod = spec.matrix(j) @ prod
    got = compose_L(seq, 0, 4, Field(seq.space(0), f))
    assert np.allclose(got.values, prod @ f, rtol=1e-13)
    sig = RNG.uniform(0.1, 1.0, 3)
    gotd = compose_L_dual(seq, 0, 4, MeasureVec(seq.space(4), sig))
    assert np.allclose(gotd.weights, prod.T @ sig, rtol=1e-13)


def test_compose_duality(doubling):
    for k in range(4):
        f = Field(doubling.space(0), RNG.uniform(0.1, 2.0, 64))
        sig = MeasureVec(doubling.space(k), RNG.uniform(0.1, 2.0, 64))
        lhs = pair(compose_L(doubling, 0, k, f), sig)
        rhs = pair(f, compose_L_dual(doubling, 0, k, sig))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_window_errors(doubling):
    f = unit_field(doubling.space(0))
    with pytest.raises(StructuralError):
        compose_L(doubling, 0, 10, f)
    with pytest.raises(StructuralError):
        apply_L(doubling.stage(1), Field(PointSpace.circle_grid(64), np.ones(64)))


def test_birkhoff_sum_cocycle_and_weights():
    seq = build_halving_chain(levels=3, n_top=16, seed=13)
    assert np.allclose(birkhoff_sum(seq, 0, 0).values, 0.0)
    assert np.allclose(birkhoff_sum(seq, 0, 1).values,
                       seq.stage(0).potential.values)
    for k in range(3):
        lhs = birkhoff_sum(seq, 0, k + 1).values
        phi_next = seq.stage(k).potential.values
        orbit = np.arange(16)
        for j in range(k):
            orbit = seq.stage(j).forward_index[orbit]
        rhs = birkhoff_sum(seq, 0, k).values + phi_next[orbit]
        assert np.allclose(lhs, rhs, rtol=1e-14)
    # branch weights of the composition match exp of the accumulated potential
    bs = birkhoff_sum(seq, 0, 3).values
    st = seq.stage(2)
    for x in range(seq.space(3).n_points):
        frontier = [(x, 1.0)]
        for j in (2, 1, 0):
            stj = seq.stage(j)
            frontier = [(int(stj.branch_index[b, pt]), w * float(stj.branch_weight[b, pt]))
                        for pt, w in frontier for b in range(stj.n_branches)]
        for y, w in frontier:
            assert w == pytest.approx(math.exp(bs[y]), rel=1e-12)


def test_birkhoff_constant_potentials():
    cs = [0.3, -0.2, 0.5]
    seq = build_halving_chain(levels=3, n_top=8,
                              potentials=[np.full(8, cs[0]), np.full(4, cs[1]),
                                          np.full(2, cs[2])])
    assert np.allclose(birkhoff_sum(seq, 0, 3).values, sum(cs))


def test_positivity_and_monotonicity(doubling):
    st = doubling.stage(0)
    f = Field(st.domain, RNG.uniform(0.0, 1.0, 64))
    g = f + Field(st.domain, RNG.uniform(0.0, 1.0, 64))
    lf, lg = apply_L(st, f), apply_L(st, g)
    assert lf.values.min() >= 0.0
    assert np.all(lf.values <= lg.values + 1e-15)


def test_cone_invariance_of_images():
    spec = CircleMapSpec.make(N=256, window=(0, 3), eps=0.05,
                              eps_mode="alternating", a=0.1, a_mode="sin")
    seq = build_circle_chain(spec)
    params = seq.declared
    q = nr.default_Q(params)
    p = ConeParams(Q=q, delta=params.delta, beta=params.beta)
    s_q = params.rho ** params.beta * (params.H + q)
    target = ConeParams(Q=s_q, delta=p.delta, beta=p.beta)
    for _ in range(40):
        f = sample_log_holder_field(seq.space(0), p, RNG)
        assert in_log_holder_cone(apply_L(seq.stage(0), f), target)
    # image regularity after tau steps: sup <= R inf
    ledger = nr.derive_constants(params, q)
    for _ in range(20):
        f = sample_log_holder_field(seq.space(0), p, RNG)
        img = compose_L(seq, 0, params.tau, f)
        assert img.sup() <= ledger.R * img.inf() * (1 + 1e-12)


def test_normalize_stage_identity_and_errors():
    m = np.array([[2.0, 1.0], [1.0, 1.0]])
    seq = build_matrix_chain(MatrixChainSpec.stationary(m, (0, 2)))
    st = seq.stage(0)
    one = unit_field(st.domain)
    same = normalize_stage(st, one, one, 1.0)
    assert np.allclose(same.branch_weight, st.branch_weight)
    lam, mw, hv = nr.oracle_stationary_rpf(m)
    h = Field(st.domain, hv)
    nst = normalize_stage(st, h, h, lam)
    img = apply_L(nst, one)
    assert np.allclose(img.values, 1.0, atol=1e-12)
    # the normalized operator is L(h f) / (lam h) pointwise
    for _ in range(10):
        f = Field(st.domain, RNG.normal(size=2))
        lhs = apply_L(nst, f).values
        rhs = apply_L(st, h * f).values / (lam * hv)
        assert np.allclose(lhs, rhs, rtol=1e-12)
    with pytest.raises(DomainError):
        normalize_stage(st, one, one, -1.0)
    with pytest.raises(DomainError):
        normalize_stage(st, Field(st.domain, [1.0, 0.0]), one, 1.0)


def test_normalize_stage_iterated_cocycle_matrix():
    spec = MatrixChainSpec.random(d=3, window=(-20, 20), seed=21)
    seq = build_matrix_chain(spec)
    cone = ConeParams(Q=1.0, delta=0.5, beta=1.0)
    cert = nr.certify_cone_conditions(seq, cone)
    fwd = nr.solve_forward(seq, tol=1e-11, tau=1, block_factor=cert.block_factor,
                           cone_params=cone, with_diagnostics=False)
    bwd = nr.solve_backward(seq, fwd, tol=1e-11, with_diagnostics=False)
    n, k = -5, 4
    stages = [normalize_stage(seq.stage(n + j), bwd.h[n + j], bwd.h[n + j + 1],
                              fwd.lam[n + j]) for j in range(k)]
    f = Field(seq.space(n), RNG.uniform(0.2, 1.0, 3))
    out = f
    for st in stages:
        out = apply_L(st, out)
    lam_prod = math.prod(fwd.lam[n + j] for j in range(k))
    direct = compose_L(seq, n, k, bwd.h[n] * f)
    want = direct.values / (lam_prod * bwd.h[n + k].values)
    assert np.allclose(out.values, want, rtol=1e-10)


def test_circle_branch_inverse_accuracy():
    spec = CircleMapSpec.make(N=128, window=(0, 2), eps=0.05,
                              eps_mode="constant", a=0.0, a_mode="constant")
    seq = build_circle_chain(spec)
    st = seq.stage(0)
    for b in range(2):
        y = st.branch_pos[b]
        img = st.map_fn(y) % 1.0
        gap = np.abs(img - st.codomain.positions)
        gap = np.minimum(gap, 1.0 - gap)
        assert float(gap.max()) < 1e-12


def test_pure_doubling_branch_structure():
    # eps = 0: the preimages of x are exactly x/2 and x/2 + 1/2; on the
    # N-grid the even-index codomain points get on-grid preimages (frac 0)
    # and the odd-index ones get exact cell midpoints (frac 1/2)
    n = 64
    seq = build_circle_chain(CircleMapSpec.make(
        N=n, window=(0, 2), eps=0.0, eps_mode="constant", a=0.0,
        a_mode="constant"))
    st = seq.stage(0)
    x = st.codomain.positions
    for b in range(2):
        assert np.allclose(st.branch_pos[b], (x + b) / 2.0, atol=1e-12)
    even = np.arange(0, n, 2)
    odd = np.arange(1, n, 2)
    assert np.all(st.branch_frac[:, even] == 0.0)
    assert np.allclose(st.branch_frac[:, odd], 0.5, atol=1e-10)
    # constants pass through interpolation exactly: L1 = 2 to the bit
    img = apply_L(st, unit_field(st.domain))
    assert np.all(img.values == 2.0)
    # on the even codomain points the operator is exact for any f
    f = RNG.normal(size=n)
    img = apply_L(st, Field(st.domain, f))
    for x_idx in even:
        want = f[x_idx // 2] + f[(x_idx + n) // 2]
        assert img.values[x_idx] == pytest.approx(want, rel=1e-15)
