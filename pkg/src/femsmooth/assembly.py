"""Vectorised element-loop assembly of matrices and load vectors.

The diffusion coefficient is evaluated once per element at the centroid, so
piecewise-constant coefficients are integrated exactly on meshes aligned with
their discontinuities.  Convection and reaction coefficients are sampled at
the quadrature points.
"""
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .quadrature import triangle_rule

__all__ = [
    "BilinearForm",
    "quadrature_points",
    "basis_at",
    "element_matrices",
    "scatter",
    "assemble_matrix",
    "assemble_load",
    "assemble_h1_seminorm_matrix",
    "assemble_mass_matrix",
    "restrict_free",
    "expand_free",
    "write_matrix_market",
]


@dataclass(frozen=True)
class BilinearForm:
    """``(alpha grad u, grad v) + (beta u, grad v) + (c u, v)``.

    Coefficients are constants or vectorised callables ``f(x, y)``.
    ``convection`` returns a pair ``(beta_x, beta_y)``.
    """

    diffusion: object = 1.0
    convection: object = None
    reaction: object = None

    @property
    def symmetric(self):
        return self.convection is None


def _field(coef, x, y):
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(x, y), dtype=float), np.shape(x))
    return np.full(np.shape(x), float(coef))


def _vector_field(coef, x, y):
    if callable(coef):
        bx, by = coef(x, y)
    else:
        bx, by = coef
    return (np.broadcast_to(np.asarray(bx, float), np.shape(x)),
            np.broadcast_to(np.asarray(by, float), np.shape(x)))


def quadrature_points(mesh, rule):
    """Physical quadrature points, shape (ne, nq, 2)."""
    origin, jac, _, _ = mesh.geometry
    return origin[:, None, :] + np.einsum("eij,qj->eqi", jac, rule.points)


def basis_at(space, rule):
    """Reference values (nq, nloc) and physical gradients (ne, nq, nloc, 2)."""
    el = space.element
    vals = el.values(rule.points)
    gref = el.gradients(rule.points)
    inv = space.mesh.geometry[3]
    grads = np.einsum("eji,qkj->eqki", inv, gref)
    return vals, grads


def element_matrices(space, form=None, kind="stiffness", qdeg=None):
    """Dense element matrices, shape (ne, nloc, nloc).

    ``kind`` is ``"stiffness"`` (full bilinear form), ``"laplace"`` or ``"mass"``.
    """
    p = space.degree
    mesh = space.mesh
    det = np.abs(mesh.geometry[2])
    if kind == "mass":
        rule = triangle_rule(qdeg or 2 * p)
        vals = space.element.values(rule.points)
        ref = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
        return det[:, None, None] * ref[None]

    rule = triangle_rule(qdeg or max(2 * p, 4))
    vals, grads = basis_at(space, rule)
    if kind == "laplace" or form is None:
        alpha = np.ones(mesh.n_elements)
    else:
        c = mesh.centroids
        alpha = _field(form.diffusion, c[:, 0], c[:, 1])
        if np.any(~(alpha > 0)):
            bad = np.flatnonzero(~(alpha > 0))
            raise ValueError(f"non-positive diffusion coefficient on elements {bad[:10].tolist()}")
    wdet = det[:, None] * rule.weights[None, :]
    mats = np.einsum("eq,eqid,eqjd->eij", wdet, grads, grads) * alpha[:, None, None]
    if kind == "laplace" or form is None:
        return mats
    if form.convection is not None or form.reaction is not None:
        x = quadrature_points(mesh, rule)
        if form.convection is not None:
            bx, by = _vector_field(form.convection, x[..., 0], x[..., 1])
            bgrad = grads[..., 0] * bx[..., None] + grads[..., 1] * by[..., None]  # (ne,nq,nloc)
            # row = test function i, column = trial function j: int phi_j beta . grad phi_i
            mats = mats + np.einsum("eq,eqi,qj->eij", wdet, bgrad, vals)
        if form.reaction is not None:
            c = _field(form.reaction, x[..., 0], x[..., 1])
            mats = mats + np.einsum("eq,qi,qj->eij", wdet * c, vals, vals)
    return mats


def scatter(space, mats):
    """Sum element matrices into a CSR matrix."""
    dofs = space.elem_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    m = sp.coo_matrix((mats.ravel(), (rows, cols)), shape=(space.ndofs, space.ndofs))
    return m.tocsr()


def assemble_matrix(space, form, qdeg=None):
    """System matrix of ``form`` over all dofs (no boundary conditions)."""
    return scatter(space, element_matrices(space, form, "stiffness", qdeg))


def assemble_h1_seminorm_matrix(space):
    return scatter(space, element_matrices(space, kind="laplace"))


def assemble_mass_matrix(space):
    return scatter(space, element_matrices(space, kind="mass"))


def assemble_load(space, f, qdeg=None):
    """Vector of ``int f phi_i``."""
    rule = triangle_rule(qdeg or 2 * space.degree + 2)
    x = quadrature_points(space.mesh, rule)
    fx = _field(f, x[..., 0], x[..., 1])
    vals = space.element.values(rule.points)
    det = np.abs(space.mesh.geometry[2])
    local = np.einsum("eq,q,qi->ei", fx * det[:, None], rule.weights, vals)
    return np.bincount(space.elem_dofs.ravel(), weights=local.ravel(), minlength=space.ndofs)


def restrict_free(A, b, space, lift=None):
    """Reduce ``A x = b`` to the free dofs.

    With a Dirichlet lift ``g`` (full-length vector whose boundary entries
    carry the data) the right side becomes ``b_F - A_FB g_B``.
    """
    free = space.free_dofs
    A = sp.csr_matrix(A)
    Aff = A[free][:, free].tocsr()
    bf = np.asarray(b, dtype=float)[free].copy()
    if lift is not None:
        g = np.zeros(space.ndofs)
        bnd = space.boundary_dofs
        g[bnd] = np.asarray(lift, dtype=float)[bnd]
        bf -= (A[free] @ g)
    return Aff, bf


def expand_free(space, x_free, lift=None):
    """Full dof vector from free values and optional Dirichlet lift."""
    u = np.zeros(space.ndofs)
    if lift is not None:
        bnd = space.boundary_dofs
        u[bnd] = np.asarray(lift, dtype=float)[bnd]
    u[space.free_dofs] = x_free
    return u


def write_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
