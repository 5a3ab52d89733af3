import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import discrete_laplacian_1d
from pqlap.energy import phi_alpha
from pqlap.errors import InvalidArgument, InvalidBasis
from pqlap.fem import FeFunction, interpolate, lebesgue_norm
from pqlap.mesh import build_interval_mesh
from pqlap.quasi_eigen import (SubspaceBasis, decompose, eta_sequence, lambda1_q, linear_eigenvectors,
                               nu_sequence, operator_L, verify_disug_Wh)


@pytest.fixture(scope="module")
def eta_q2(mesh256):
    return eta_sequence(mesh256, 0.0, None, 2.0, 4)


@pytest.fixture(scope="module")
def basis3(eta0):
    return SubspaceBasis.from_pairs(eta0, 3)


# -- q = 2 reproduces the linear spectrum ---------------------------------------------

def test_linear_eigenvectors_match_tridiagonal_oracle():
    vals, _ = linear_eigenvectors(build_interval_mesh(64), 5)
    ref = [discrete_laplacian_1d(64, k) for k in range(1, 6)]
    assert np.allclose(vals, ref, rtol=1e-10)


def test_eta_q2_matches_linear_spectrum(eta_q2):
    for pr in eta_q2:
        assert pr.value == pytest.approx((pr.h * math.pi) ** 2, rel=1e-2)
        # the discrete problem is matched much more tightly
        assert pr.value == pytest.approx(discrete_laplacian_1d(256, pr.h), rel=1e-7)


def test_nu_q2_matches_linear_spectrum(mesh256, eta_q2):
    nus = nu_sequence(mesh256, 0.0, None, 2.0, 3, eta_q2)
    for pr in nus:
        assert pr.value == pytest.approx((pr.h * math.pi) ** 2, rel=2e-2)
        assert pr.kind == "nu" and pr.upper_bound


# -- eta sequence ---------------------------------------------------------------------

def test_eta_pair_invariants(eta0):
    for pr in eta0:
        assert pr.kind == "eta"
        assert abs(lebesgue_norm(pr.phi, 4.0) - 1.0) < 1e-10
        assert phi_alpha(pr.phi, 0.0, 2.5, 4.0) == pytest.approx(pr.value, rel=1e-12)
        assert np.argmax(np.abs(pr.phi.coef)) == np.argmax(pr.phi.coef)


def test_eta_monotone(eta0, eta1):
    for seq in (eta0, eta1):
        vals = [pr.value for pr in seq]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_alpha0_is_lambda1(mesh256, eta0):
    lam, phi = lambda1_q(mesh256, 4.0)
    assert lam == eta0[0].value
    assert np.array_equal(phi.coef, eta0[0].phi.coef)


def test_eta1_at_least_lambda1(eta0, eta1, lam1):
    assert eta0[0].value >= lam1 - 1e-8
    assert eta1[0].value >= lam1 - 1e-8


def test_divergence_trend(eta0):
    assert eta0[5].value > 2.0 * eta0[0].value


def test_eta_sequence_rejects():
    m = build_interval_mesh(8)
    with pytest.raises(InvalidArgument):
        eta_sequence(m, 1.0, 4.0, 2.0, 2)
    with pytest.raises(InvalidArgument):
        eta_sequence(m, 0.0, None, 4.0, 0)
    with pytest.raises(InvalidArgument):
        eta_sequence(m, -1.0, 2.0, 4.0, 1)


def test_eta_seed_reproducible():
    m = build_interval_mesh(32)
    a = eta_sequence(m, 1.0, 2.0, 3.0, 2)
    b = eta_sequence(m, 1.0, 2.0, 3.0, 2)
    assert [x.value for x in a] == [x.value for x in b]
    assert np.array_equal(a[1].phi.coef, b[1].phi.coef)


# -- operator L and the basis -------------------------------------------------------------

def test_operator_L_examples(mesh256, eta0):
    phi = eta0[0].phi
    assert operator_L(phi, phi, 4.0) == pytest.approx(1.0, abs=1e-10)
    assert operator_L(phi, FeFunction(mesh256), 4.0) == 0.0
    s1 = interpolate(mesh256, lambda x: np.sin(np.pi * x))
    s1 = s1 * (1.0 / lebesgue_norm(s1, 2.0))
    s2 = interpolate(mesh256, lambda x: np.sin(2 * np.pi * x))
    assert abs(operator_L(s1, s2, 2.0)) < 1e-12
    # same value as a direct quadrature of phi * u
    M = mesh256.mass_matrix()
    assert operator_L(s1, s1, 2.0) == pytest.approx(float(s1.coef @ (M @ s1.coef)), rel=1e-12)


@given(seed=st.integers(0, 2 ** 32 - 1), a=st.floats(-10, 10), b=st.floats(-10, 10))
@settings(max_examples=25, deadline=None)
def test_operator_L_linear_and_hoelder(eta0, seed, a, b):
    phi = eta0[1].phi
    rng = np.random.default_rng(seed)
    u = FeFunction(phi.mesh, rng.standard_normal(phi.mesh.n_interior))
    v = FeFunction(phi.mesh, rng.standard_normal(phi.mesh.n_interior))
    lhs = operator_L(phi, u * a + v * b, 4.0)
    rhs = a * operator_L(phi, u, 4.0) + b * operator_L(phi, v, 4.0)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))
    assert abs(operator_L(phi, u, 4.0)) <= lebesgue_norm(phi, 4.0) ** 3 * lebesgue_norm(u, 4.0) * (1 + 1e-10)


def test_biorthogonality(eta0):
    basis = SubspaceBasis.from_pairs(eta0, 5)
    M = basis.pairing
    for h in range(5):
        for k in range(h + 1):
            assert abs(M[k, h] - (k == h)) < 1e-9


def test_corrupted_basis_rejected(eta0):
    phis = [pr.phi for pr in eta0[:3]]
    phis[1] = phis[1] + phis[0] * 0.1
    with pytest.raises(InvalidBasis):
        SubspaceBasis(phis, 4.0)
    with pytest.raises(InvalidArgument):
        SubspaceBasis([], 4.0)


# -- decomposition -----------------------------------------------------------------------

def test_decompose_examples(basis3, eta0):
    phi1 = eta0[0].phi
    v, w = decompose(phi1 * 3.0, basis3)
    assert np.allclose(v.coef, 3.0 * phi1.coef, atol=1e-9) and np.abs(w.coef).max() < 1e-9
    # a function already in W_3 is left alone
    _, w0 = decompose(FeFunction(phi1.mesh, np.random.default_rng(0).standard_normal(phi1.mesh.n_interior)),
                      basis3)
    v2, w2 = decompose(w0, basis3)
    assert np.abs(v2.coef).max() < 1e-9 and np.allclose(w2.coef, w0.coef, atol=1e-9)


@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(1e-3, 1e3))
@settings(max_examples=30, deadline=None)
def test_decompose_properties(basis3, seed, scale):
    mesh = basis3.phis[0].mesh
    u = FeFunction(mesh, scale * np.random.default_rng(seed).standard_normal(mesh.n_interior))
    v, w = decompose(u, basis3)
    assert np.abs(u.coef - v.coef - w.coef).max() <= 1e-12 * scale
    for phi in basis3.phis:
        assert abs(operator_L(phi, w, 4.0)) < 1e-9 * max(1.0, scale)
    # v lies in the span of the basis
    P = np.array([f.coef for f in basis3.phis]).T
    coef, *_ = np.linalg.lstsq(P, v.coef, rcond=None)
    assert np.abs(P @ coef - v.coef).max() <= 1e-10 * max(1.0, np.abs(v.coef).max())


# -- inequalities on W_{h-1} ------------------------------------------------------------------

def test_disug_passes(eta0, eta1):
    for seq in (eta0, eta1):
        rep = verify_disug_Wh(seq[:4], 100, seed=1)
        assert rep.passed, rep.levels
        assert all(lv["min_margin"] >= -1e-6 for lv in rep.levels)
    assert all(lv["single_branch"] for lv in verify_disug_Wh(eta0[:2], 10).levels)


def test_disug_equality_at_phi(eta0, eta1):
    for seq, alpha in ((eta0, 0.0), (eta1, 1.0)):
        for pr in seq[:4]:
            assert abs(phi_alpha(pr.phi, alpha, 2.0, 4.0) - pr.value) <= 1e-9 * pr.value


def test_disug_flags_a_wrong_value(eta0):
    from dataclasses import replace
    bad = [replace(eta0[0], value=eta0[0].value * 1.5)]
    rep = verify_disug_Wh(bad, 30, seed=0)
    assert not rep.passed and 1 in rep.violations


# -- nu sequence ---------------------------------------------------------------------------------

def test_nu1_equals_lambda1(nu0, lam1):
    assert nu0[0].value == pytest.approx(lam1, rel=1e-6)


def test_nu_monotone(nu0, nu1):
    for seq in (nu0, nu1):
        vals = [pr.value for pr in seq]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert all(pr.upper_bound for pr in seq)


def test_nu_not_below_eta_alpha0(nu0, eta0):
    # diagnostic chain eta_k <= nu_k for alpha = 0, up to optimizer slack
    for k, pr in enumerate(nu0):
        assert pr.value >= eta0[k].value * (1 - 1e-6)


def test_nu_needs_phi1(mesh256, eta0):
    with pytest.raises(InvalidArgument):
        nu_sequence(mesh256, 0.0, None, 4.0, 2, eta0[1:])
