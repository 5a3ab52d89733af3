"""Simplicial meshes in one and two dimensions.

A :class:`Mesh` is immutable after construction.  Element gradient and
quadrature operators are computed lazily and cached on the instance, so
a mesh can be shared freely between evaluations.
"""

import hashlib

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .quadrature import REFERENCE_MEASURE, gauss_rule


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Mesh:
    """P1 simplicial mesh with Dirichlet boundary nodes.

    Parameters
    ----------
    nodes : array_like, shape (n_nodes, dim)
    elements : array_like of int, shape (n_elements, dim + 1)
    boundary : array_like of int
        Indices of boundary nodes.  These carry no degree of freedom.
    """

    def __init__(self, nodes, elements, boundary):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        dim = nodes.shape[1]
        if dim not in (1, 2):
            raise InvalidArgument(f"mesh dimension must be 1 or 2, got {dim}")
        elements = np.asarray(elements, dtype=np.int64)
        if elements.ndim != 2 or elements.shape[1] != dim + 1:
            raise InvalidArgument("elements must be (n_elements, dim + 1) node tuples")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise InvalidArgument("element references a non-existent node")
        flags = np.zeros(len(nodes), dtype=bool)
        boundary = np.asarray(boundary, dtype=np.int64).ravel()
        if boundary.size and (boundary.min() < 0 or boundary.max() >= len(nodes)):
            raise InvalidArgument("boundary references a non-existent node")
        flags[boundary] = True

        self.dim = dim
        self.nodes = _frozen(nodes, float)
        self.elements = _frozen(elements, np.int64)
        self.boundary = _frozen(flags, bool)
        dof = np.full(len(nodes), -1, dtype=np.int64)
        interior = np.flatnonzero(~flags)
        dof[interior] = np.arange(len(interior))
        self.dof_map = _frozen(dof, np.int64)
        self.interior_nodes = _frozen(interior, np.int64)

        vols = self._signed_volumes()
        if np.any(vols <= 0.0):
            bad = int(np.flatnonzero(vols <= 0.0)[0])
            raise InvalidArgument(f"element {bad} is degenerate or inverted")
        self.volumes = _frozen(vols, float)
        self._cache = {}

    # -- geometry -----------------------------------------------------------
    def _signed_volumes(self):
        x = self.nodes[self.elements]
        if self.dim == 1:
            return x[:, 1, 0] - x[:, 0, 0]
        e1 = x[:, 1] - x[:, 0]
        e2 = x[:, 2] - x[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_interior(self):
        return len(self.interior_nodes)

    @property
    def measure(self):
        return float(self.volumes.sum())

    def digest(self):
        """SHA-256 of the mesh arrays; used in provenance records."""
        h = hashlib.sha256()
        for a in (self.nodes, self.elements, self.boundary):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    # -- cached operators ---------------------------------------------------
    def barycentric_gradients(self):
        """Gradients of the barycentric coordinates, shape (E, dim+1, dim)."""
        if "bgrad" not in self._cache:
            x = self.nodes[self.elements]
            D = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))  # columns x_i - x_0
            Dinv = np.linalg.inv(D)  # rows are grad(lambda_i), i >= 1
            g = np.empty((self.n_elements, self.dim + 1, self.dim))
            g[:, 1:, :] = Dinv
            g[:, 0, :] = -Dinv.sum(axis=1)
            g.setflags(write=False)
            self._cache["bgrad"] = g
        return self._cache["bgrad"]

    def gradient_operator(self):
        """Sparse map from interior coefficients to per-element gradients.

        Row ``e * dim + c`` holds the c-th gradient component on element e.
        """
        if "G" not in self._cache:
            g = self.barycentric_gradients()
            E, d = self.n_elements, self.dim
            dofs = self.dof_map[self.elements]  # (E, d+1)
            rows = (np.arange(E)[:, None, None] * d + np.arange(d)[None, None, :])
            rows = np.broadcast_to(rows, (E, d + 1, d))
            cols = np.broadcast_to(dofs[:, :, None], (E, d + 1, d))
            keep = cols >= 0
            G = sp.csr_matrix(
                (g[keep], (rows[keep], cols[keep])), shape=(E * d, self.n_interior)
            )
            self._cache["G"] = G
        return self._cache["G"]

    def quadrature_operator(self, degree):
        """Return ``(B, w, X)`` for the Gauss rule of the given degree.

        ``B @ c`` gives the values of the P1 field with interior
        coefficients ``c`` at every quadrature point (element-major order),
        ``w`` the matching physical weights and ``X`` the physical points.
        """
        key = ("quad", degree)
        if key not in self._cache:
            rule = gauss_rule(self.dim, degree)
            E, nq = self.n_elements, rule.n_points
            dofs = self.dof_map[self.elements]
            rows = np.broadcast_to(
                (np.arange(E)[:, None] * nq + np.arange(nq)[None, :])[:, :, None],
                (E, nq, self.dim + 1),
            )
            cols = np.broadcast_to(dofs[:, None, :], (E, nq, self.dim + 1))
            vals = np.broadcast_to(rule.points[None, :, :], (E, nq, self.dim + 1))
            keep = cols >= 0
            B = sp.csr_matrix(
                (vals[keep], (rows[keep], cols[keep])), shape=(E * nq, self.n_interior)
            )
            w = (self.volumes[:, None] * rule.weights[None, :]
                 / REFERENCE_MEASURE[self.dim]).ravel()
            X = np.einsum("qi,eid->eqd", rule.points, self.nodes[self.elements])
            X = X.reshape(E * nq, self.dim)
            for a in (w, X):
                a.setflags(write=False)
            self._cache[key] = (B, w, X)
        return self._cache[key]

    def stiffness_matrix(self):
        """Linear (q = 2) stiffness matrix on interior dofs."""
        if "K" not in self._cache:
            G = self.gradient_operator()
            vol = np.repeat(self.volumes, self.dim)
            self._cache["K"] = (G.T @ sp.diags(vol) @ G).tocsc()
        return self._cache["K"]

    def mass_matrix(self):
        """Consistent P1 mass matrix on interior dofs."""
        if "M" not in self._cache:
            B, w, _ = self.quadrature_operator(2)
            self._cache["M"] = (B.T @ sp.diags(w) @ B).tocsc()
        return self._cache["M"]

    def __repr__(self):
        return (f"Mesh(dim={self.dim}, nodes={self.n_nodes}, "
                f"elements={self.n_elements}, interior={self.n_interior})")


def build_interval_mesh(n, a=0.0, b=1.0):
    """Uniform mesh of (a, b) with ``n`` elements."""
    if int(n) != n or n < 2:
        raise InvalidArgument("interval mesh needs n >= 2 elements")
    if not b > a:
        raise InvalidArgument("interval mesh needs b > a")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], elements, [0, n])


def build_rect_mesh(nx, ny, rect=(0.0, 0.0, 1.0, 1.0)):
    """Structured triangle mesh of a rectangle with alternating diagonals.

    Each of the ``nx * ny`` cells is cut into two triangles; the diagonal
    direction alternates in a checkerboard ("union jack") pattern so the
    mesh has the symmetries of the rectangle.
    """
    if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
        raise InvalidArgument("rectangle mesh needs nx, ny >= 2")
    x0, y0, x1, y1 = (float(v) for v in rect)
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgument("degenerate rectangle")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    on_edge = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    boundary = np.flatnonzero(on_edge.ravel())
    return Mesh(nodes, np.array(tris), boundary)


def write_mesh(mesh, path):
    """Write the plain-text mesh format (dim / nodes / elements / boundary)."""
    lines = [f"dim {mesh.dim}", f"nodes {mesh.n_nodes}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in mesh.nodes]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(str(int(v)) for v in row) for row in mesh.elements]
    bnd = np.flatnonzero(mesh.boundary)
    lines.append(f"boundary {len(bnd)}")
    lines += [str(int(v)) for v in bnd]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    with open(path) as fh:
        tokens = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos][0] != name or len(tokens[pos]) != 2:
            raise InvalidArgument(f"mesh file: expected '{name} <count>' section")
        value = int(tokens[pos][1])
        pos += 1
        return value

    def block(count, conv):
        nonlocal pos
        rows = tokens[pos:pos + count]
        if len(rows) != count:
            raise InvalidArgument("mesh file: truncated section")
        pos += count
        return [[conv(t) for t in row] for row in rows]

    dim = header("dim")
    nodes = np.array(block(header("nodes"), float), dtype=float).reshape(-1, dim)
    elements = np.array(block(header("elements"), int), dtype=np.int64).reshape(-1, dim + 1)
    boundary = np.array(block(header("boundary"), int), dtype=np.int64).ravel()
    return Mesh(nodes, elements, boundary)
