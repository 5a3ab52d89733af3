"""Energy functional I, its weak residual, the operator A and Phi_alpha.

Everything here is evaluated on P1 fields: gradient terms exactly per
element, reaction terms with the Gauss rule of degree ceil(q) + 2.  The
residual and Jacobian use that same rule, so the residual is the exact
gradient of the discrete energy.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .fem import FeFunction, grad_power_integral, lebesgue_power_integral, same_mesh
from .nonlinearity import NonlinearitySpec, eval_F, eval_df, eval_f
from .quadrature import degree_for_exponent

EPS_REG = 1e-10


def check_exponents(p, q):
    if not (1.0 < p < q):
        raise InvalidArgument(f"exponents must satisfy 1 < p < q, got p={p}, q={q}")


@dataclass(frozen=True)
class ProblemSpec:
    """Data of -Delta_p u - Delta_q u = ell_inf |u|^(q-2) u + f(x, u), u = 0 on the boundary."""

    p: float
    q: float
    ell_inf: float
    f: NonlinearitySpec
    mesh: object
    eps_reg: float = EPS_REG

    def __post_init__(self):
        check_exponents(self.p, self.q)
        if self.mesh.dim not in (1, 2):
            raise InvalidArgument("mesh dimension must be 1 or 2")
        self.f.validate_for(self.q)

    @property
    def quad_degree(self):
        return degree_for_exponent(self.q)

    def g(self, t, x=None):
        """Full right-hand side g(x, t) = ell_inf |t|^(q-2) t + f(x, t)."""
        t = np.asarray(t, dtype=float)
        return self.ell_inf * np.sign(t) * np.abs(t) ** (self.q - 1) + eval_f(self.f, t, self.q, x)


# -- element-level helpers --------------------------------------------------

def _flux(grads, e):
    """|grad u|^(e-2) grad u per element, safe at grad u = 0."""
    g = np.linalg.norm(grads, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(g > 0.0, g ** (e - 2.0), 0.0) if e < 2 else g ** (e - 2.0)
    return scale[:, None] * grads


def _reg_flux(grads, e, eps):
    """Regularised flux (|grad u|^2 + eps^2)^((e-2)/2) grad u for e < 2."""
    if e >= 2.0:
        return _flux(grads, e)
    s = np.sum(grads * grads, axis=1) + eps * eps
    return (s ** ((e - 2.0) / 2.0))[:, None] * grads


def _flux_jacobian_blocks(grads, e, eps):
    """Derivative of the (regularised) flux w.r.t. grad u, shape (E, d, d)."""
    E, d = grads.shape
    g2 = np.sum(grads * grads, axis=1)
    eye = np.eye(d)[None, :, :]
    outer = grads[:, :, None] * grads[:, None, :]
    if e >= 2.0:
        a = g2 ** ((e - 2.0) / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(g2 > 0.0, (e - 2.0) * g2 ** ((e - 4.0) / 2.0), 0.0)
    else:
        s = g2 + eps * eps
        a = s ** ((e - 2.0) / 2.0)
        b = (e - 2.0) * s ** ((e - 4.0) / 2.0)
    return a[:, None, None] * eye + b[:, None, None] * outer


def _block_diag(blocks, weights):
    E, d, _ = blocks.shape
    data = blocks * weights[:, None, None]
    rows = np.repeat(np.arange(E * d).reshape(E, d), d, axis=1).reshape(E, d, d)
    cols = np.tile(np.arange(E * d).reshape(E, 1, d), (1, d, 1))
    return sp.csr_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(E * d, E * d))


def _check_mesh(u, prob):
    if u.mesh is not prob.mesh:
        raise InvalidArgument("function does not live on the problem mesh")


# -- functionals -------------------------------------------------------------

def phi_alpha(u, alpha, p, q):
    """Phi_alpha(u) = alpha ||grad u||_p^p + ||grad u||_q^q."""
    check_exponents(p, q)
    if alpha < 0:
        raise InvalidArgument("alpha must be >= 0")
    val = grad_power_integral(u, q)
    if alpha:
        val += alpha * grad_power_integral(u, p)
    return val


def phi_alpha_gradient(u, alpha, p, q):
    """Coefficient-space gradient of Phi_alpha (no regularisation needed)."""
    mesh = u.mesh
    grads = u.gradients()
    flux = q * _flux(grads, q)
    if alpha:
        flux = flux + alpha * p * _flux(grads, p)
    G = mesh.gradient_operator()
    return G.T @ (flux * mesh.volumes[:, None]).ravel()


def principal_hessian(u, weights_by_exponent, eps=EPS_REG):
    """sum_e c_e * d/du of the e-flux, assembled; ``weights_by_exponent`` is {e: c_e}."""
    mesh = u.mesh
    grads = u.gradients()
    blocks = 0.0
    for e, c in weights_by_exponent.items():
        if c:
            blocks = blocks + c * _flux_jacobian_blocks(grads, e, eps)
    G = mesh.gradient_operator()
    D = _block_diag(np.broadcast_to(blocks, (mesh.n_elements, mesh.dim, mesh.dim)),
                    mesh.volumes)
    return (G.T @ D @ G).tocsc()


def energy_I(u, prob):
    """I(u) = (1/p)||grad u||_p^p + (1/q)||grad u||_q^q - (ell_inf/q)||u||_q^q - int F(x, u)."""
    _check_mesh(u, prob)
    p, q = prob.p, prob.q
    B, w, X = prob.mesh.quadrature_operator(prob.quad_degree)
    uq = B @ u.coef
    val = grad_power_integral(u, p) / p + grad_power_integral(u, q) / q
    val -= prob.ell_inf / q * float(np.dot(w, np.abs(uq) ** q))
    if prob.f.family != "zero":
        val -= float(np.dot(w, eval_F(prob.f, uq, q, X)))
    return val


def residual(u, prob):
    """Weak residual: one entry per interior dof (nodal basis test functions)."""
    _check_mesh(u, prob)
    mesh = prob.mesh
    p, q = prob.p, prob.q
    grads = u.gradients()
    flux = _reg_flux(grads, p, prob.eps_reg) + _reg_flux(grads, q, prob.eps_reg)
    G = mesh.gradient_operator()
    r = G.T @ (flux * mesh.volumes[:, None]).ravel()
    B, w, X = mesh.quadrature_operator(prob.quad_degree)
    uq = B @ u.coef
    return r - B.T @ (w * prob.g(uq, X))


def jacobian(u, prob):
    """Derivative of :func:`residual` (sparse, symmetric)."""
    _check_mesh(u, prob)
    mesh = prob.mesh
    p, q = prob.p, prob.q
    J = principal_hessian(u, {p: 1.0, q: 1.0}, prob.eps_reg)
    B, w, X = mesh.quadrature_operator(prob.quad_degree)
    uq = B @ u.coef
    dg = prob.ell_inf * (q - 1.0) * np.abs(uq) ** (q - 2.0) if q >= 2 else \
        prob.ell_inf * (q - 1.0) * (uq * uq + prob.eps_reg ** 2) ** ((q - 2.0) / 2.0)
    dg = dg + eval_df(prob.f, uq, q, X, eps_reg=prob.eps_reg)
    return (J - B.T @ sp.diags(w * dg) @ B).tocsc()


def apply_A(u, v, p, q):
    """<A u, v> = int (|grad u|^(p-2) + |grad u|^(q-2)) grad u . grad v."""
    check_exponents(p, q)
    mesh = same_mesh(u, v)
    gu = u.gradients()
    gv = v.gradients()
    flux = _flux(gu, p) + _flux(gu, q)
    return float(np.dot(mesh.volumes, np.sum(flux * gv, axis=1)))


def holder_bound_A(u, v, p, q):
    """||grad u||_p^(p-1) ||grad v||_p + ||grad u||_q^(q-1) ||grad v||_q."""
    def n(w, r):
        return grad_power_integral(w, r) ** (1.0 / r)
    return n(u, p) ** (p - 1) * n(v, p) + n(u, q) ** (q - 1) * n(v, q)


def lq_power(u, q):
    return lebesgue_power_integral(u, q, degree_for_exponent(q))


def zero_like(prob):
    return FeFunction(prob.mesh)
