import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import HAT_A_P2_Q4, HAT_ENERGY_P2_Q4, HAT_PHI_ALPHA1_P2_Q3
from pqlap.energy import (ProblemSpec, apply_A, energy_I, holder_bound_A, jacobian, phi_alpha,
                          phi_alpha_gradient, residual)
from pqlap.errors import InvalidArgument
from pqlap.fem import FeFunction, grad_seminorm, random_function
from pqlap.mesh import build_interval_mesh, build_rect_mesh
from pqlap.nonlinearity import NonlinearitySpec, eval_F, eval_df, eval_f, growth_constant

ZERO = NonlinearitySpec("zero")
BUILTINS = [NonlinearitySpec("rational_decay", ell0=5.0, s=2.0),
            NonlinearitySpec("gaussian_decay", ell0=-3.0),
            NonlinearitySpec("power_resonant", mu=1.0, r=2.0),
            ZERO]


def hat():
    return FeFunction(build_interval_mesh(2), np.array([1.0]))


def random_u(mesh, seed, scale=1.0):
    return FeFunction(mesh, scale * np.random.default_rng(seed).standard_normal(mesh.n_interior))


# -- examples ---------------------------------------------------------------------

def test_phi_alpha_examples():
    u = hat()
    assert phi_alpha(u, 1.0, 2.0, 3.0) == pytest.approx(HAT_PHI_ALPHA1_P2_Q3, rel=1e-14)
    m = build_interval_mesh(10)
    v = random_u(m, 3)
    assert phi_alpha(v, 0.0, 2.0, 3.5) == pytest.approx(grad_seminorm(v, 3.5) ** 3.5, rel=1e-13)
    assert phi_alpha(FeFunction(m), 1.0, 2.0, 3.0) == 0.0
    for bad in [(1.0, 3.0, 2.0), (1.0, 1.0, 3.0), (-1.0, 2.0, 3.0)]:
        with pytest.raises(InvalidArgument):
            phi_alpha(u, *bad)


def test_phi_alpha_gradient_fd():
    m = build_interval_mesh(30)
    u, v = random_u(m, 1), random_u(m, 2)
    eps = 1e-5
    fd = (phi_alpha(u + v * eps, 1.0, 2.0, 4.0) - phi_alpha(u - v * eps, 1.0, 2.0, 4.0)) / (2 * eps)
    assert fd == pytest.approx(phi_alpha_gradient(u, 1.0, 2.0, 4.0) @ v.coef, rel=1e-7)


def test_energy_examples():
    u = hat()
    prob = ProblemSpec(2.0, 4.0, 0.0, ZERO, u.mesh)
    assert energy_I(u, prob) == pytest.approx(HAT_ENERGY_P2_Q4, rel=1e-14)
    assert energy_I(FeFunction(u.mesh), ProblemSpec(2.0, 4.0, 50.0, BUILTINS[0], u.mesh)) == 0.0
    with pytest.raises(InvalidArgument):
        energy_I(FeFunction(build_interval_mesh(2)), prob)


def test_problem_spec_validation():
    m = build_interval_mesh(4)
    with pytest.raises(InvalidArgument):
        ProblemSpec(4.0, 2.0, 0.0, ZERO, m)
    with pytest.raises(InvalidArgument):
        ProblemSpec(2.0, 3.0, 0.0, NonlinearitySpec("power_resonant", r=3.5), m)


def test_residual_at_zero_is_zero():
    m = build_interval_mesh(16)
    for ell in (0.0, 3.0, 100.0):
        r = residual(FeFunction(m), ProblemSpec(2.0, 4.0, ell, ZERO, m))
        assert r.shape == (m.n_interior,) and not r.any()


def test_apply_A_examples():
    u = hat()
    assert apply_A(u, u, 2.0, 4.0) == pytest.approx(HAT_A_P2_Q4, rel=1e-14)
    m = build_interval_mesh(12)
    v = random_u(m, 7)
    assert apply_A(v, v, 1.5, 3.0) == pytest.approx(
        grad_seminorm(v, 1.5) ** 1.5 + grad_seminorm(v, 3.0) ** 3.0, rel=1e-13)
    with pytest.raises(InvalidArgument):
        apply_A(v, u, 2.0, 4.0)


def test_eval_f_examples():
    pr = BUILTINS[2]
    assert float(eval_f(pr, 3.0, 4.0)) == pytest.approx(-3.0)
    assert float(eval_F(pr, 3.0, 4.0)) == pytest.approx(-4.5)
    assert 3.0 * float(eval_f(pr, 3.0, 4.0)) - 4.0 * float(eval_F(pr, 3.0, 4.0)) == pytest.approx(9.0)
    t = np.array([1.0, 3.0, 10.0, 100.0])
    fr = t * eval_f(pr, t, 4.0) - 4.0 * eval_F(pr, t, 4.0)
    assert np.all(np.diff(fr) > 0)
    assert eval_f(ZERO, 2.0, 4.0) == 0.0 and eval_F(ZERO, 2.0, 4.0) == 0.0
    rd = BUILTINS[0]
    for t, lim in ((1e-4, 5.0), (1e4, 0.0)):
        ratio = float(eval_f(rd, t, 4.0)) / t ** 3
        assert abs(ratio - lim) <= 1e-3 * 5.0 if lim == 0 else abs(ratio - lim) <= 1e-3 * lim


def test_unknown_family_rejected():
    with pytest.raises(InvalidArgument):
        NonlinearitySpec("cubic")
    with pytest.raises(InvalidArgument):
        NonlinearitySpec("rational_decay", ell0=math.inf)
    with pytest.raises(InvalidArgument):
        NonlinearitySpec.from_dict({"family": "zero", "bogus": 1})


@pytest.mark.parametrize("spec", BUILTINS[:3], ids=lambda s: s.family)
def test_primitive_matches_quadrature(spec):
    from scipy.integrate import quad
    for t in (-7.0, -0.3, 0.05, 1.0, 2.5, 12.0):
        ref = quad(lambda s: float(eval_f(spec, s, 4.0)), 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        assert float(eval_F(spec, t, 4.0)) == pytest.approx(ref, rel=1e-9, abs=1e-13)


@pytest.mark.parametrize("spec", BUILTINS[:3], ids=lambda s: s.family)
def test_derivative_matches_fd(spec):
    t = np.array([-3.0, -0.7, 0.4, 1.3, 5.0])
    h = 1e-6
    fd = (eval_f(spec, t + h, 4.0) - eval_f(spec, t - h, 4.0)) / (2 * h)
    assert np.allclose(eval_df(spec, t, 4.0), fd, rtol=1e-6, atol=1e-8)


@given(t=st.floats(-1e3, 1e3, allow_nan=False), i=st.integers(0, 3))
@settings(max_examples=60, deadline=None)
def test_builtins_odd(t, i):
    spec = BUILTINS[i]
    assert eval_f(spec, -t, 4.0) == -eval_f(spec, t, 4.0)
    assert eval_F(spec, -t, 4.0) == eval_F(spec, t, 4.0)


# -- invariants --------------------------------------------------------------------

@pytest.mark.parametrize("p,q,spec", [(2.0, 4.0, BUILTINS[1]), (1.5, 3.0, BUILTINS[0]),
                                      (2.0, 4.0, BUILTINS[2]), (3.0, 4.5, ZERO)])
def test_gradient_consistency(p, q, spec):
    m = build_interval_mesh(40)
    prob = ProblemSpec(p, q, 7.0, spec, m)
    rng = np.random.default_rng(11)
    eps = 1e-5
    for _ in range(20):
        u = random_function(m, rng)
        v = random_function(m, rng)
        fd = (energy_I(u + v * eps, prob) - energy_I(u - v * eps, prob)) / (2 * eps)
        an = float(residual(u, prob) @ v.coef)
        assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-12)


def test_gradient_consistency_2d():
    m = build_rect_mesh(6, 5)
    prob = ProblemSpec(2.0, 3.0, 4.0, BUILTINS[1], m)
    rng = np.random.default_rng(5)
    eps = 1e-5
    for _ in range(5):
        u, v = random_function(m, rng), random_function(m, rng)
        fd = (energy_I(u + v * eps, prob) - energy_I(u - v * eps, prob)) / (2 * eps)
        an = float(residual(u, prob) @ v.coef)
        assert abs(fd - an) <= 1e-6 * abs(an)


def test_jacobian_matches_fd():
    m = build_interval_mesh(20)
    prob = ProblemSpec(2.0, 4.0, 3.0, BUILTINS[0], m)
    u, v = random_u(m, 4), random_u(m, 9)
    eps = 1e-6
    fd = (residual(u + v * eps, prob) - residual(u - v * eps, prob)) / (2 * eps)
    J = jacobian(u, prob)
    assert np.allclose(J @ v.coef, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())
    assert abs(J - J.T).max() < 1e-10 * abs(J).max()


@given(seed=st.integers(0, 2 ** 32 - 1), i=st.integers(0, 3), scale=st.floats(0.01, 30))
@settings(max_examples=40, deadline=None)
def test_evenness(seed, i, scale):
    m = build_interval_mesh(24)
    prob = ProblemSpec(2.0, 4.0, 5.0, BUILTINS[i], m)
    u = random_u(m, seed, scale)
    assert energy_I(-u, prob) == energy_I(u, prob)
    assert np.array_equal(residual(-u, prob), -residual(u, prob))


@pytest.mark.parametrize("spec", BUILTINS, ids=lambda s: s.family)
@pytest.mark.parametrize("eps", [0.5, 0.1])
def test_growth_bound(spec, eps):
    A = growth_constant(spec, 4.0, eps)
    assert math.isfinite(A) and A >= 0
    t = np.logspace(-6, 6, 997)
    t = np.concatenate([-t, t])
    assert np.all(np.abs(eval_f(spec, t, 4.0)) <= eps * np.abs(t) ** 3 + A * (1 + 1e-9) + 1e-12)


def test_growth_bound_superlinear_is_infinite():
    spec = NonlinearitySpec("custom", f=lambda x, t: t ** 5, F=lambda x, t: t ** 6 / 6)
    assert growth_constant(spec, 4.0, 0.5) == math.inf


@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(1e-3, 1e3))
@settings(max_examples=40, deadline=None)
def test_A_coercive_and_hoelder(seed, scale):
    m = build_interval_mesh(16)
    rng = np.random.default_rng(seed)
    u = FeFunction(m, scale * rng.standard_normal(m.n_interior))
    v = FeFunction(m, rng.standard_normal(m.n_interior))
    assert apply_A(u, u, 2.0, 4.0) > 0
    assert abs(apply_A(u, v, 2.0, 4.0)) <= holder_bound_A(u, v, 2.0, 4.0) * (1 + 1e-12)


def test_A_zero_only_at_zero():
    m = build_interval_mesh(8)
    assert apply_A(FeFunction(m), FeFunction(m), 2.0, 4.0) == 0.0
    u = FeFunction(m, np.eye(m.n_interior)[2] * 1e-8)
    assert apply_A(u, u, 2.0, 4.0) > 0


def test_A_linear_in_v():
    m = build_interval_mesh(10)
    u, v, w = random_u(m, 1), random_u(m, 2), random_u(m, 3)
    lhs = apply_A(u, v * 2.0 + w * -3.0, 1.7, 3.3)
    rhs = 2.0 * apply_A(u, v, 1.7, 3.3) - 3.0 * apply_A(u, w, 1.7, 3.3)
    assert lhs == pytest.approx(rhs, rel=1e-12)
