"""Built-in odd nonlinearities f(t) with closed-form primitives F(t).

All built-ins are autonomous.  A ``custom`` family accepts user callables
``f(x, t)`` and ``F(x, t)`` (``x`` the physical point, vectorised over
quadrature points), which is how coordinate-dependent data enter.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gamma, gammainc, hyp2f1

from .errors import InvalidArgument

FAMILIES = ("rational_decay", "gaussian_decay", "power_resonant", "zero", "custom")


@dataclass(frozen=True)
class NonlinearitySpec:
    """Family tag plus parameters.

    Parameters used per family:

    * ``rational_decay``: ``ell0`` (finite), ``s > 0``
    * ``gaussian_decay``: ``ell0`` (finite)
    * ``power_resonant``: ``mu > 0``, ``r`` with ``1 < r < q``
    * ``zero``: none
    * ``custom``: callables ``f``, ``F`` and optionally ``df``; ``ell0`` declared
    """

    family: str
    ell0: float = 0.0
    s: float = 2.0
    mu: float = 1.0
    r: float = 2.0
    odd: bool = True
    f: object = field(default=None, compare=False, repr=False)
    F: object = field(default=None, compare=False, repr=False)
    df: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown nonlinearity family {self.family!r}")
        if self.family in ("rational_decay", "gaussian_decay") and not math.isfinite(self.ell0):
            raise InvalidArgument(f"{self.family} needs a finite ell0")
        if self.family == "rational_decay" and not self.s > 0:
            raise InvalidArgument("rational_decay needs s > 0")
        if self.family == "power_resonant" and not (self.mu > 0 and self.r > 1):
            raise InvalidArgument("power_resonant needs mu > 0 and r > 1")
        if self.family == "custom" and (self.f is None or self.F is None):
            raise InvalidArgument("custom nonlinearity needs callables f and F")

    @property
    def declared_ell0(self):
        """Limit of f(t) / (|t|^(q-2) t) as t -> 0, as declared by the family."""
        if self.family == "power_resonant":
            return -math.inf
        if self.family == "zero":
            return 0.0
        return float(self.ell0)

    def validate_for(self, q):
        if self.family == "power_resonant" and not (1 < self.r < q):
            raise InvalidArgument("power_resonant needs 1 < r < q")

    def to_dict(self):
        if self.family == "custom":
            return {"family": "custom", "ell0": self.ell0}
        d = {"family": self.family}
        if self.family in ("rational_decay", "gaussian_decay"):
            d["ell0"] = self.ell0
        if self.family == "rational_decay":
            d["s"] = self.s
        if self.family == "power_resonant":
            d.update(mu=self.mu, r=self.r)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family", None)
        if family is None:
            raise InvalidArgument("nonlinearity needs a 'family' tag")
        allowed = {"ell0", "s", "mu", "r"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidArgument(f"unknown nonlinearity parameters {sorted(unknown)}")
        return cls(family, **{k: float(v) for k, v in d.items()})


def _spow(t, e):
    """|t|^(e-1) * sign(t), i.e. |t|^(e-2) t without the 0 ** negative trap."""
    return np.sign(t) * np.abs(t) ** (e - 1.0)


def eval_f(spec, t, q, x=None):
    t = np.asarray(t, dtype=float)
    spec.validate_for(q)
    fam = spec.family
    if fam == "zero":
        return np.zeros_like(t)
    if fam == "rational_decay":
        return spec.ell0 * _spow(t, q) / (1.0 + np.abs(t) ** spec.s)
    if fam == "gaussian_decay":
        return spec.ell0 * _spow(t, q) * np.exp(-t * t)
    if fam == "power_resonant":
        return -spec.mu * _spow(t, spec.r)
    return np.asarray(spec.f(x, t), dtype=float)


def eval_F(spec, t, q, x=None):
    """Primitive F(t) = integral of f from 0 to t, in closed form."""
    t = np.asarray(t, dtype=float)
    spec.validate_for(q)
    fam = spec.family
    a = np.abs(t)
    if fam == "zero":
        return np.zeros_like(t)
    if fam == "rational_decay":
        # int_0^a x^(q-1)/(1+x^s) dx = a^q/q * 2F1(1, q/s; 1+q/s; -a^s)
        k = q / spec.s
        return spec.ell0 * a ** q / q * hyp2f1(1.0, k, 1.0 + k, -(a ** spec.s))
    if fam == "gaussian_decay":
        # int_0^a x^(q-1) e^(-x^2) dx = Gamma(q/2) P(q/2, a^2) / 2
        return 0.5 * spec.ell0 * gamma(0.5 * q) * gammainc(0.5 * q, a * a)
    if fam == "power_resonant":
        return -spec.mu * a ** spec.r / spec.r
    return np.asarray(spec.F(x, t), dtype=float)


def eval_df(spec, t, q, x=None, eps_reg=0.0):
    """Derivative f'(t).  ``eps_reg`` smooths |t|^(e-2) for exponents e < 2."""
    t = np.asarray(t, dtype=float)
    fam = spec.family
    a = np.abs(t)

    def apow(e):
        if e < 2.0:
            return (t * t + eps_reg ** 2) ** ((e - 2.0) / 2.0)
        return a ** (e - 2.0)

    if fam == "zero":
        return np.zeros_like(t)
    if fam == "rational_decay":
        s = spec.s
        den = 1.0 + a ** s
        return spec.ell0 * apow(q) * ((q - 1.0) + (q - 1.0 - s) * a ** s) / den ** 2
    if fam == "gaussian_decay":
        return spec.ell0 * apow(q) * np.exp(-t * t) * ((q - 1.0) - 2.0 * t * t)
    if fam == "power_resonant":
        return -spec.mu * (spec.r - 1.0) * apow(spec.r)
    if spec.df is not None:
        return np.asarray(spec.df(x, t), dtype=float)
    h = 1e-6 * np.maximum(1.0, a)
    return (eval_f(spec, t + h, q, x) - eval_f(spec, t - h, q, x)) / (2.0 * h)


def growth_constant(spec, q, eps, t_grid=None, x=None):
    """Smallest A with |f(t)| <= eps |t|^(q-1) + A on a log grid of |t| values.

    Returns ``inf`` when the excess |f| - eps |t|^(q-1) is still growing at the
    end of the grid, i.e. no finite constant is visible.
    """
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if t_grid is None:
        t_grid = np.logspace(-6, 6, 241)
    t = np.concatenate([-t_grid[::-1], t_grid])

    def excess(s):
        return np.abs(eval_f(spec, s, q, x)) - eps * np.abs(s) ** (q - 1.0)

    ex = excess(t)
    tail = ex[-5:]
    if tail[-1] > 0 and np.all(np.diff(tail) > 0):
        return math.inf
    A = float(max(0.0, ex.max()))
    # refine each local grid maximum on its bracketing cell
    for i in np.flatnonzero((ex[1:-1] >= ex[:-2]) & (ex[1:-1] >= ex[2:]) & (ex[1:-1] > 0)) + 1:
        res = minimize_scalar(lambda s: -float(excess(s)), bounds=(t[i - 1], t[i + 1]),
                              method="bounded", options={"xatol": 1e-12 * max(1.0, abs(t[i]))})
        A = max(A, -float(res.fun))
    return A
