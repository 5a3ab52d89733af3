"""Gauss rules on the reference interval and triangle.

Points are stored in barycentric coordinates so one rule serves every
element of a mesh.  Weights sum to the measure of the reference simplex
(1 for [0, 1], 1/2 for the unit triangle).
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi

REFERENCE_MEASURE = {1: 1.0, 2: 0.5}


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int
    points: np.ndarray  # (n_points, dim + 1) barycentric
    weights: np.ndarray  # (n_points,)

    @property
    def n_points(self):
        return len(self.weights)


def degree_for_exponent(r):
    """Polynomial degree used for integrands like |u|^r on P1 elements."""
    return int(math.ceil(r)) + 2


@lru_cache(maxsize=None)
def gauss_rule(dim, degree):
    """Return a positive-weight rule on the reference simplex exact to `degree`.

    The triangle rule is the collapsed (Duffy) product of a Gauss-Jacobi
    rule in the collapsed direction and a Gauss-Legendre rule in the other.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    m = max(1, (degree + 2) // 2)  # 2m - 1 >= degree
    if dim == 1:
        x, w = np.polynomial.legendre.leggauss(m)
        s = 0.5 * (x + 1.0)
        pts = np.column_stack([1.0 - s, s])
        rule = QuadratureRule(1, degree, pts, 0.5 * w)
    elif dim == 2:
        # x = s(1 - t), y = t with dx dy = (1 - t) ds dt
        xs, ws = np.polynomial.legendre.leggauss(m)
        xt, wt = roots_jacobi(m, 1.0, 0.0)
        s = 0.5 * (xs + 1.0)
        t = 0.5 * (xt + 1.0)
        ws = 0.5 * ws
        wt = 0.25 * wt  # (1 - t) = (1 - xt)/2 absorbed by the Jacobi weight
        S, T = np.meshgrid(s, t, indexing="ij")
        W = np.outer(ws, wt)
        x = (S * (1.0 - T)).ravel()
        y = T.ravel()
        pts = np.column_stack([1.0 - x - y, x, y])
        rule = QuadratureRule(2, degree, pts, W.ravel())
    else:
        raise ValueError(f"unsupported dimension {dim}")
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule
