"""Piecewise-linear functions with homogeneous Dirichlet data, and their norms."""

import csv
import math

import numpy as np

from .errors import InvalidArgument, NumericDomainError
from .quadrature import degree_for_exponent


class FeFunction:
    """P1 field on ``mesh``, zero on boundary nodes.

    Only interior coefficients are stored; ``coef[mesh.dof_map[i]]`` is the
    nodal value at interior node ``i``.
    """

    __slots__ = ("mesh", "coef")

    def __init__(self, mesh, coef=None):
        self.mesh = mesh
        if coef is None:
            coef = np.zeros(mesh.n_interior)
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (mesh.n_interior,):
            raise InvalidArgument(
                f"coefficient vector has shape {coef.shape}, expected ({mesh.n_interior},)"
            )
        self.coef = coef

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh)

    def copy(self):
        return FeFunction(self.mesh, self.coef.copy())

    def nodal_values(self):
        """Values at every mesh node (zeros on the boundary)."""
        vals = np.zeros(self.mesh.n_nodes)
        vals[self.mesh.interior_nodes] = self.coef
        return vals

    def gradients(self):
        """Per-element constant gradient, shape (n_elements, dim)."""
        G = self.mesh.gradient_operator()
        return (G @ self.coef).reshape(self.mesh.n_elements, self.mesh.dim)

    def _check(self, other):
        if not isinstance(other, FeFunction):
            return NotImplemented
        if other.mesh is not self.mesh:
            raise InvalidArgument("FeFunctions live on different meshes")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return FeFunction(self.mesh, self.coef + other.coef)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return FeFunction(self.mesh, self.coef - other.coef)

    def __neg__(self):
        return FeFunction(self.mesh, -self.coef)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return FeFunction(self.mesh, float(c) * self.coef)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return FeFunction(self.mesh, self.coef / float(c))

    def __repr__(self):
        return f"FeFunction(n_interior={self.mesh.n_interior})"


def same_mesh(*funcs):
    mesh = funcs[0].mesh
    for f in funcs[1:]:
        if f.mesh is not mesh:
            raise InvalidArgument("FeFunctions live on different meshes")
    return mesh


def gradient_magnitudes(u):
    return np.linalg.norm(u.gradients(), axis=1)


def grad_power_integral(u, r):
    """Exact integral of |grad u|^r (gradients are elementwise constant)."""
    g = gradient_magnitudes(u)
    return float(np.dot(u.mesh.volumes, g ** r))


def grad_seminorm(u, r):
    """Gradient L^r norm ``||grad u||_r``."""
    if not r > 1:
        raise InvalidArgument("grad_seminorm needs r > 1")
    return grad_power_integral(u, r) ** (1.0 / r)


def lebesgue_power_integral(u, r, degree=None):
    """Gauss-quadrature value of the integral of |u|^r."""
    B, w, _ = u.mesh.quadrature_operator(degree or degree_for_exponent(r))
    return float(np.dot(w, np.abs(B @ u.coef) ** r))


def lebesgue_norm(u, r, degree=None):
    """``||u||_r`` by elementwise Gauss quadrature of degree ceil(r) + 2."""
    if not r >= 1:
        raise InvalidArgument("lebesgue_norm needs r >= 1")
    return lebesgue_power_integral(u, r, degree) ** (1.0 / r)


def interpolate(mesh, g):
    """Nodal interpolant of ``g`` with boundary values forced to zero.

    ``g`` receives the coordinates of one node as separate scalars, i.e.
    ``g(x)`` in 1D and ``g(x, y)`` in 2D; vectorised callables work too.
    """
    pts = mesh.nodes[mesh.interior_nodes]
    try:
        vals = np.asarray(g(*pts.T), dtype=float)
        if vals.shape != (len(pts),):
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([float(g(*p)) for p in pts])
    if not np.all(np.isfinite(vals)):
        raise NumericDomainError("interpolated function is not finite at some node")
    return FeFunction(mesh, vals)


def random_function(mesh, rng, smooth_modes=None, noise=1.0):
    """Random field: optional smooth combination plus white noise."""
    c = noise * rng.standard_normal(mesh.n_interior)
    if smooth_modes:
        for m in smooth_modes:
            c = c + rng.standard_normal() * m.coef
    return FeFunction(mesh, c)


# -- field files ------------------------------------------------------------

def write_field_csv(u, path):
    """CSV ``node_index,x[,y],value`` over all nodes, boundary rows included."""
    mesh = u.mesh
    vals = u.nodal_values()
    header = ["node_index", "x", "y"][: mesh.dim + 1] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(mesh.n_nodes):
            w.writerow([i] + [repr(float(v)) for v in mesh.nodes[i]] + [repr(float(vals[i]))])


def read_field_csv(mesh, path):
    vals = np.zeros(mesh.n_nodes)
    seen = np.zeros(mesh.n_nodes, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            i = int(row["node_index"])
            if not 0 <= i < mesh.n_nodes:
                raise InvalidArgument(f"field file references node {i} outside the mesh")
            vals[i] = float(row["value"])
            seen[i] = True
    if not seen[mesh.interior_nodes].all():
        raise InvalidArgument("field file does not cover every interior node")
    return FeFunction(mesh, vals[mesh.interior_nodes])


def write_vtk(u, path, name="u"):
    """Legacy ASCII VTK unstructured grid (triangles, 2D meshes only)."""
    mesh = u.mesh
    if mesh.dim != 2:
        raise InvalidArgument("VTK export is only provided for 2D meshes")
    vals = u.nodal_values()
    out = ["# vtk DataFile Version 3.0", name, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_nodes} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes]
    out.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    out.append(f"CELL_TYPES {mesh.n_elements}")
    out += ["5"] * mesh.n_elements
    out += [f"POINT_DATA {mesh.n_nodes}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    out += [repr(float(v)) for v in vals]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def holder_bound(u, r, q):
    """Right-hand side |Omega|^((q-r)/q) ||u||_q^r of the Hölder embedding."""
    return u.mesh.measure ** ((q - r) / q) * lebesgue_norm(u, q) ** r


def is_finite_number(x):
    return isinstance(x, (int, float)) and math.isfinite(x)
