"""Continuous Lagrange spaces of arbitrary degree and the prolongations between them.

Global dof numbering: vertex dofs first (mesh vertex order), then ``p - 1``
dofs per edge (mesh edge order, running from the lower to the higher vertex
index), then the interior dofs of every element.  This order fixes the sweep
direction of the Gauss-Seidel smoother.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, RefinementMap

__all__ = [
    "LagrangeElement",
    "FeSpace",
    "Prolongation",
    "build_space",
    "build_prolongation_refine",
    "build_prolongation_degree",
    "interpolate",
    "locate_reference",
    "evaluate",
    "dump_dofs",
]


def _lattice(p):
    """Barycentric multi-indices of the degree-p nodes: vertices, edges, interior."""
    nodes = [(p, 0, 0), (0, p, 0), (0, 0, p)]
    for j in range(3):
        s, t = (j + 1) % 3, (j + 2) % 3
        for k in range(1, p):
            b = [0, 0, 0]
            b[s], b[t] = p - k, k
            nodes.append(tuple(b))
    for i2 in range(1, p):
        for i1 in range(1, p - i2):
            nodes.append((p - i1 - i2, i1, i2))
    return np.array(nodes, dtype=np.int64)


class LagrangeElement:
    """Nodal basis of P_p on the reference triangle with uniformly spaced nodes."""

    def __init__(self, degree):
        p = int(degree)
        if p < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {degree}")
        self.degree = p
        self.bary = _lattice(p)
        self.nodes = self.bary[:, 1:] / p
        self.exponents = np.array([(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)])
        vander = self._monomials(self.nodes)
        # column i holds the monomial coefficients of basis function i
        self.coef = np.linalg.solve(vander, np.eye(len(self.nodes)))

    @property
    def n_local(self):
        return len(self.nodes)

    @property
    def n_interior(self):
        return (self.degree - 1) * (self.degree - 2) // 2

    def _monomials(self, pts, dx=0, dy=0):
        pts = np.atleast_2d(pts)
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        ca = np.ones_like(a, dtype=float)
        cb = np.ones_like(b, dtype=float)
        ea, eb = a.copy(), b.copy()
        for _ in range(dx):
            ca *= ea
            ea = ea - 1
        for _ in range(dy):
            cb *= eb
            eb = eb - 1
        ok = (ea >= 0) & (eb >= 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = (ca * cb)[None, :] * pts[:, :1] ** np.maximum(ea, 0) * pts[:, 1:2] ** np.maximum(eb, 0)
        return np.where(ok[None, :], vals, 0.0)

    def values(self, pts):
        """(npts, n_local) basis values."""
        return self._monomials(pts) @ self.coef

    def gradients(self, pts):
        """(npts, n_local, 2) reference gradients."""
        gx = self._monomials(pts, 1, 0) @ self.coef
        gy = self._monomials(pts, 0, 1) @ self.coef
        return np.stack([gx, gy], axis=-1)

    def hessians(self, pts):
        """(npts, n_local, 2, 2) reference second derivatives."""
        hxx = self._monomials(pts, 2, 0) @ self.coef
        hxy = self._monomials(pts, 1, 1) @ self.coef
        hyy = self._monomials(pts, 0, 2) @ self.coef
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


@lru_cache(maxsize=None)
def _element(p):
    return LagrangeElement(p)


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    degree: int
    element: LagrangeElement
    elem_dofs: np.ndarray     # (ne, n_local)
    dof_coords: np.ndarray    # (ndofs, 2)
    boundary_dofs: np.ndarray  # bool mask

    @property
    def ndofs(self):
        return len(self.dof_coords)

    @cached_property
    def free_dofs(self):
        return np.flatnonzero(~self.boundary_dofs)

    @property
    def n_free(self):
        return len(self.free_dofs)

    @cached_property
    def dof_multiplicity(self):
        """Number of elements whose closure contains each dof."""
        return np.bincount(self.elem_dofs.ravel(), minlength=self.ndofs)

    def __repr__(self):
        return f"FeSpace(P{self.degree}, ndofs={self.ndofs}, free={self.n_free}, {self.mesh!r})"


def build_space(mesh, degree):
    """Continuous P_p space on ``mesh``."""
    el = _element(int(degree)) if int(degree) >= 1 else LagrangeElement(degree)
    p = el.degree
    nv, ne = mesh.n_vertices, mesh.n_elements
    n_edges = len(mesh.edges)
    nloc = el.n_local
    dofs = np.empty((ne, nloc), dtype=np.int64)
    dofs[:, :3] = mesh.elements
    if p > 1:
        k = np.arange(1, p)
        for j in range(3):
            s = mesh.elements[:, (j + 1) % 3]
            t = mesh.elements[:, (j + 2) % 3]
            base = nv + mesh.elem_edges[:, j] * (p - 1)
            forward = (s < t)[:, None]
            pos = np.where(forward, k[None, :] - 1, p - 1 - k[None, :])
            dofs[:, 3 + j * (p - 1):3 + (j + 1) * (p - 1)] = base[:, None] + pos
        ni = el.n_interior
        if ni:
            start = nv + n_edges * (p - 1)
            dofs[:, 3 + 3 * (p - 1):] = start + np.arange(ne)[:, None] * ni + np.arange(ni)[None, :]
    ndofs = nv + n_edges * (p - 1) + ne * el.n_interior

    origin, jac, _, _ = mesh.geometry
    local = origin[:, None, :] + np.einsum("eij,kj->eki", jac, el.nodes)
    coords = np.empty((ndofs, 2))
    coords[dofs.ravel()] = local.reshape(-1, 2)

    bmask = np.zeros(ndofs, dtype=bool)
    bmask[:nv] = mesh.boundary_vertex_mask
    if p > 1 and len(mesh.boundary_edge_ids):
        be = mesh.boundary_edge_ids
        bmask[(nv + be[:, None] * (p - 1) + np.arange(p - 1)[None, :]).ravel()] = True

    for a in (dofs, coords, bmask):
        a.setflags(write=False)
    return FeSpace(mesh, p, el, dofs, coords, bmask)


@dataclass(frozen=True, eq=False)
class Prolongation:
    """Sparse ``fine.ndofs x coarse.ndofs`` matrix expressing coarse basis functions
    in the fine basis."""

    matrix: sp.csr_matrix
    source: FeSpace
    target: FeSpace

    @cached_property
    def free(self):
        """Block acting between the free dofs of both spaces."""
        return self.matrix[self.target.free_dofs][:, self.source.free_dofs].tocsr()

    def __matmul__(self, x):
        return self.matrix @ x


def _representatives(space):
    """One (element, local index) pair for every dof."""
    _, first = np.unique(space.elem_dofs.ravel(), return_index=True)
    nloc = space.element.n_local
    return first // nloc, first % nloc


def _evaluation_matrix(source, points, owner, shape_rows, rows):
    origin, _, _, inv = source.mesh.geometry
    xi = np.einsum("nij,nj->ni", inv[owner], points - origin[owner])
    vals = source.element.values(xi)  # (n, nloc) -- row-wise different points
    cols = source.elem_dofs[owner]
    r = np.repeat(rows, vals.shape[1])
    v = vals.ravel()
    c = cols.ravel()
    keep = np.abs(v) > 1e-13
    m = sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(shape_rows, source.ndofs))
    return m.tocsr()


def build_prolongation_refine(coarse, fine, rmap):
    """Prolongation from ``coarse`` to the same-degree space on its red refinement."""
    if not isinstance(rmap, RefinementMap):
        raise TypeError("rmap must be a RefinementMap")
    if coarse.degree != fine.degree:
        raise ValueError(f"degree mismatch: coarse P{coarse.degree}, fine P{fine.degree}")
    if rmap.coarse is not coarse.mesh or rmap.fine is not fine.mesh:
        raise ValueError("spaces are not built on the meshes of this refinement map")
    elem, _ = _representatives(fine)
    parents = rmap.parent_of[elem]
    m = _evaluation_matrix(coarse, fine.dof_coords, parents, fine.ndofs, np.arange(fine.ndofs))
    return Prolongation(m, coarse, fine)


def build_prolongation_degree(low, high):
    """Inclusion of P_p into P_q (q > p) on the same mesh."""
    if low.mesh is not high.mesh:
        raise ValueError("degree prolongation needs both spaces on the same mesh")
    if high.degree <= low.degree:
        raise ValueError(f"target degree {high.degree} must exceed source degree {low.degree}")
    elem, _ = _representatives(high)
    m = _evaluation_matrix(low, high.dof_coords, elem, high.ndofs, np.arange(high.ndofs))
    return Prolongation(m, low, high)


def interpolate(space, g):
    """Nodal interpolant of ``g(x, y)`` (vectorised callable or constant)."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    vals = g(x, y) if callable(g) else np.full(space.ndofs, float(g))
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (space.ndofs,)).copy()
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise ValueError(f"non-finite values at dofs {bad[:10].tolist()} "
                         f"(first at {space.dof_coords[bad[0]].tolist()})")
    return vals


def locate_reference(mesh, points):
    """Brute-force point location: element index and reference coordinates."""
    points = np.atleast_2d(points)
    origin, _, _, inv = mesh.geometry
    owner = np.full(len(points), -1, dtype=np.int64)
    xi_out = np.zeros((len(points), 2))
    for i, x in enumerate(points):
        xi = np.einsum("eij,ej->ei", inv, x - origin)
        lam = np.column_stack([1 - xi.sum(1), xi])
        score = lam.min(axis=1)
        e = int(np.argmax(score))
        if score[e] < -1e-10:
            raise ValueError(f"point {x.tolist()} lies outside the mesh")
        owner[i] = e
        xi_out[i] = xi[e]
    return owner, xi_out


def evaluate(space, u, points):
    """Values of the finite element function ``u`` at arbitrary points."""
    owner, xi = locate_reference(space.mesh, points)
    vals = space.element.values(xi)
    return np.einsum("nk,nk->n", vals, np.asarray(u)[space.elem_dofs[owner]])


def dump_dofs(space):
    """Plain-text dof table: index, x, y, boundary flag."""
    lines = [f"# P{space.degree} ndofs={space.ndofs} free={space.n_free}"]
    for i, (xy, b) in enumerate(zip(space.dof_coords, space.boundary_dofs)):
        lines.append(f"{i} {xy[0]:.17g} {xy[1]:.17g} {int(b)}")
    return "\n".join(lines) + "\n"
