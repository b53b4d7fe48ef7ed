"""Smoother-type and residual-type a posteriori error estimators.

A coarse solution ``u_h`` is transferred to an auxiliary richer space (the red
refinement ``T_{h/2}`` or a higher polynomial degree on the same mesh).  Its
residual ``r = f - A u_h`` in that space is post-processed by one sweep of a
pointwise smoother:

* Jacobi: ``<r, D^{-1} r>^{1/2}``, or a norm of ``D^{-1} r``;
* Gauss-Seidel: a norm of ``U^{-1} r`` with ``U`` the upper triangle of the
  fine matrix, diagonal included (a backward sweep in dof order).

Indicators are always reported per element of the coarse mesh.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    assemble_load, assemble_matrix, element_matrices, scatter,
)
from .fe_space import build_prolongation_degree, build_space
from .linear_solve import weighted_norm
from .mesh import vertex_patches
from .quadrature import line_rule, triangle_rule

__all__ = [
    "GalerkinOrthogonalityError",
    "Localization",
    "Residual",
    "EstimatorResult",
    "localize_refined",
    "localize_same_mesh",
    "fine_residual",
    "jacobi_estimate",
    "jacobi_smooth",
    "gauss_seidel_smooth",
    "smoothed_norm_estimate",
    "low_high_degree_estimate",
    "implicit_patch_estimate",
    "residual_estimate_h1",
    "residual_estimate_l2",
    "contraction_factor_estimate",
]

ORTHOGONALITY_TOL = 1e-9


class GalerkinOrthogonalityError(RuntimeError):
    """The fine residual does not annihilate the coarse space."""


@dataclass(frozen=True, eq=False)
class Localization:
    """How fine-space quantities are attributed to coarse elements."""

    space: object          # FeSpace carrying the smoothed quantities
    parent_of: np.ndarray  # fine element -> coarse element
    n_coarse: int

    def to_coarse(self, fine_values):
        return np.bincount(self.parent_of, weights=fine_values, minlength=self.n_coarse)


def localize_refined(fine_space, rmap):
    return Localization(fine_space, rmap.parent_of, rmap.n_coarse)


def localize_same_mesh(space):
    ne = space.mesh.n_elements
    return Localization(space, np.arange(ne), ne)


@dataclass(frozen=True, eq=False)
class Residual:
    """Fine residual restricted to the free dofs of the fine space."""

    values: np.ndarray
    fine: object
    prolongation: object
    orthogonality: float  # ||P^T r||_inf / ||r||_inf (0 for a vanishing residual)


@dataclass(frozen=True, eq=False)
class EstimatorResult:
    value: float
    indicators: np.ndarray  # eta_T >= 0 per coarse element
    kind: str
    norm: str
    extra: dict = field(default_factory=dict)

    @property
    def indicators_squared(self):
        return self.indicators ** 2

    def splitting_defect(self):
        """Relative gap between ``sqrt(sum eta_T^2)`` and the global value."""
        s = float(np.sqrt(np.sum(self.indicators ** 2)))
        return abs(s - self.value) / max(self.value, 1e-300) if self.value > 0 else s

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "indicator"])
            for i, v in enumerate(self.indicators):
                w.writerow([i, repr(float(v))])


def _result(contrib_coarse, value, kind, norm, **extra):
    eta = np.sqrt(np.maximum(contrib_coarse, 0.0))
    return EstimatorResult(float(value), eta, kind, norm, dict(extra))


def fine_residual(coarse_solution, A_fine, b_fine, prolongation, check=True):
    """``b_fine - A_fine P u_h`` on the fine free dofs, with an orthogonality check.

    ``coarse_solution`` is the full coarse dof vector (Dirichlet values
    included).  Galerkin orthogonality ``P^T r = 0`` on the coarse free dofs
    holds whenever the coarse system is the Galerkin restriction of the fine
    one; a violation aborts with :class:`GalerkinOrthogonalityError`.
    """
    fine = prolongation.target
    u_fine = prolongation.matrix @ np.asarray(coarse_solution, dtype=float)
    full = np.asarray(b_fine, dtype=float) - A_fine @ u_fine
    r = full[fine.free_dofs]
    rnorm = float(np.max(np.abs(r))) if r.size else 0.0
    defect = float(np.max(np.abs(prolongation.free.T @ r), initial=0.0)) if r.size else 0.0
    scale = (float(np.max(np.abs(b_fine), initial=0.0))
             + float(abs(A_fine).sum(axis=1).max()) * float(np.max(np.abs(u_fine), initial=0.0)))
    if rnorm <= 1e-12 * scale:
        ratio = 0.0
    else:
        ratio = defect / rnorm
        if check and ratio > ORTHOGONALITY_TOL:
            raise GalerkinOrthogonalityError(
                f"||P^T r||_inf / ||r||_inf = {ratio:.3e} exceeds {ORTHOGONALITY_TOL:g}; "
                "the coarse system is not the Galerkin restriction of the fine one")
    return Residual(r, fine, prolongation, ratio)


def _free_diagonal(A_fine, space):
    d = A_fine.diagonal()[space.free_dofs]
    if np.any(~(d > 0)):
        raise ValueError("fine matrix has a non-positive diagonal entry on a free dof")
    return d


def _dof_to_coarse(contrib_free, loc):
    """Split per-dof contributions equally over the fine elements touching the dof."""
    space = loc.space
    full = np.zeros(space.ndofs)
    full[space.free_dofs] = contrib_free
    share = full / np.maximum(space.dof_multiplicity, 1)
    per_fine = share[space.elem_dofs].sum(axis=1)
    return loc.to_coarse(per_fine)


def jacobi_estimate(r, A_fine, loc):
    """``<r, D^{-1} r>^{1/2}`` with ``D`` the diagonal of the fine matrix."""
    d = _free_diagonal(A_fine, r.fine)
    c = r.values ** 2 / d
    return _result(_dof_to_coarse(c, loc), np.sqrt(c.sum()), "jacobi", "energy")


def jacobi_smooth(r, A_fine):
    """``D^{-1} r`` on the fine free dofs."""
    return r.values / _free_diagonal(A_fine, r.fine)


def gauss_seidel_smooth(r, A_fine):
    """Backward Gauss-Seidel sweep from zero: solve ``U x = r``.

    ``U`` is the upper triangle (diagonal included) of the free-dof block of
    the fine matrix, in the fixed dof order of the fine space.
    """
    free = r.fine.free_dofs
    Aff = sp.csr_matrix(A_fine)[free][:, free]
    U = sp.triu(Aff, format="csr")
    if np.any(U.diagonal() == 0):
        raise ValueError("zero diagonal entry in Gauss-Seidel sweep")
    if len(free) == 0:
        return np.zeros(0)
    return spla.spsolve_triangular(U, np.asarray(r.values, dtype=float), lower=False)


def _norm_kind(norm):
    if norm in ("h1_semi", "energy", "h1"):
        return "laplace", "h1_semi"
    if norm == "l2":
        return "mass", "l2"
    raise ValueError(f"unknown norm {norm!r}")


def smoothed_norm_estimate(x_free, loc, norm="h1_semi", kind="smoothed", elem_mats=None):
    """Norm of the smoothed residual, split exactly over coarse elements."""
    space = loc.space
    mkind, norm = _norm_kind(norm)
    if elem_mats is None:
        elem_mats = element_matrices(space, kind=mkind)
    x = np.zeros(space.ndofs)
    x[space.free_dofs] = x_free
    xe = x[space.elem_dofs]
    local = np.einsum("ei,eij,ej->e", xe, elem_mats, xe)
    value = weighted_norm(x, scatter(space, elem_mats))
    return _result(loc.to_coarse(local), value, kind, norm)


def low_high_degree_estimate(u_h, low, form, f, q=None, variant="jacobi", norm="energy"):
    """Estimator built on the pair P_p / P_q on the same mesh.

    Parameters
    ----------
    u_h : full coarse dof vector in ``low``.
    low : FeSpace of degree p.
    form, f : bilinear form and right-hand side.
    q : high degree, default ``p + 1``.
    variant : ``"jacobi"`` or ``"gauss_seidel"``.
    norm : ``"energy"`` (Jacobi only), ``"h1_semi"`` or ``"l2"``.

    Returns
    -------
    (EstimatorResult, Residual)
    """
    q = q or low.degree + 1
    high = build_space(low.mesh, q)
    P = build_prolongation_degree(low, high)
    A = assemble_matrix(high, form)
    b = assemble_load(high, f)
    r = fine_residual(u_h, A, b, P)
    loc = localize_same_mesh(high)
    if variant == "jacobi":
        if norm == "energy":
            res = jacobi_estimate(r, A, loc)
        else:
            res = smoothed_norm_estimate(jacobi_smooth(r, A), loc, norm, kind="jacobi")
    elif variant == "gauss_seidel":
        res = smoothed_norm_estimate(gauss_seidel_smooth(r, A), loc, norm, kind="gauss_seidel")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return res, r


def implicit_patch_estimate(u_h, space, form, f, q=None):
    """Additive vertex-patch estimator with local Dirichlet problems.

    For every vertex ``k`` solve, in the degree-``q`` space on the patch
    ``Omega_k`` with zero trace on the patch boundary,
    ``a(eta_k, v) = (f, v) - a(u_h, v)``.  Returns
    ``sqrt(sum_k a(eta_k, eta_k))``; each local energy is shared equally
    among the elements of its patch.
    """
    mesh = space.mesh
    q = q or space.degree + 1
    if form.convection is not None:
        raise ValueError("implicit patch estimator needs a symmetric positive definite form")
    high = build_space(mesh, q) if q != space.degree else space
    A = assemble_matrix(high, form)
    b = assemble_load(high, f)
    u_high = u_h if high is space else build_prolongation_degree(space, high).matrix @ u_h
    r = b - A @ u_high
    A = A.tocsr()

    nv = mesh.n_vertices
    patches = vertex_patches(mesh)
    bnd = high.boundary_dofs
    # dofs interior to the patch of k: k itself, dofs on edges through k, element interiors
    edges = mesh.edges
    edge_dofs = nv + np.arange(len(edges))[:, None] * (q - 1) + np.arange(q - 1)[None, :]
    ni = high.element.n_interior
    start = nv + len(edges) * (q - 1)
    inc = sp.csr_matrix((np.ones(2 * len(edges)), (edges.ravel(), np.repeat(np.arange(len(edges)), 2))),
                        shape=(nv, len(edges)))
    energies = np.zeros(nv)
    contrib = np.zeros(mesh.n_elements)
    for k in range(nv):
        elems = patches[k]
        ids = [np.array([k])]
        if q > 1:
            ids.append(edge_dofs[inc.indices[inc.indptr[k]:inc.indptr[k + 1]]].ravel())
        if ni:
            ids.append((start + elems[:, None] * ni + np.arange(ni)[None, :]).ravel())
        idx = np.concatenate(ids)
        idx = idx[~bnd[idx]]
        if idx.size == 0:
            continue
        Aloc = A[idx][:, idx].toarray()
        rloc = r[idx]
        eta = np.linalg.solve(Aloc, rloc)
        e = float(rloc @ eta)
        energies[k] = e
        contrib[elems] += e / len(elems)
    return _result(contrib, np.sqrt(energies.sum()), "implicit_patch", "energy",
                   vertex_energies=energies)


def _volume_residual_sq(u_h, space, f, qdeg=None):
    """``||f + Laplace u_h||^2_{L2(T)}`` for every element."""
    p = space.degree
    rule = triangle_rule(qdeg or 2 * p + 2)
    mesh = space.mesh
    origin, jac, det, inv = mesh.geometry
    x = origin[:, None, :] + np.einsum("eij,qj->eqi", jac, rule.points)
    fx = f(x[..., 0], x[..., 1]) if callable(f) else np.full(x.shape[:2], float(f))
    fx = np.broadcast_to(np.asarray(fx, float), x.shape[:2])
    if p >= 2:
        H = space.element.hessians(rule.points)  # (nq, nloc, 2, 2)
        # Laplacian of basis: trace(inv^T H inv)
        G = np.einsum("eia,eja->eij", inv, inv)
        lap = np.einsum("qkij,eij->eqk", H, G)
        coeffs = u_h[space.elem_dofs]
        lap_u = np.einsum("eqk,ek->eq", lap, coeffs)
    else:
        lap_u = 0.0
    res = fx + lap_u
    return np.abs(det) * np.einsum("q,eq->e", rule.weights, res ** 2)


def _jump_sq(u_h, space):
    """Squared L2 norm of the normal-derivative jump on each interior edge."""
    mesh = space.mesh
    e2e = mesh.edge_elements
    interior = np.flatnonzero(e2e[:, 1] >= 0)
    if interior.size == 0:
        return interior, np.zeros(0), np.zeros(0)
    edges = mesh.edges[interior]
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    normal = np.column_stack([(b - a)[:, 1], -(b - a)[:, 0]]) / length[:, None]
    s, w = line_rule(max(2 * space.degree - 2, 1))
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]  # (nE, ns, 2)
    origin, _, _, inv = mesh.geometry
    grads = []
    for side in (0, 1):
        T = e2e[interior, side]
        xi = np.einsum("eij,esj->esi", inv[T], pts - origin[T][:, None, :])
        gref = space.element.gradients(xi.reshape(-1, 2)).reshape(len(T), len(s), -1, 2)
        gphys = np.einsum("eji,eskj->eski", inv[T], gref)
        grads.append(np.einsum("eski,ek->esi", gphys, u_h[space.elem_dofs[T]]))
    jump = np.einsum("esi,ei->es", grads[0] - grads[1], normal)
    return interior, length, length * np.einsum("s,es->e", w, jump ** 2)


def _residual_estimate(u_h, space, f, vol_pow, edge_pow, kind, norm):
    mesh = space.mesh
    u_h = np.asarray(u_h, dtype=float)
    hT = mesh.diameters
    vol = hT ** vol_pow * _volume_residual_sq(u_h, space, f)
    interior, hE, jsq = _jump_sq(u_h, space)
    edge_term = hE ** edge_pow * jsq
    contrib = vol.copy()
    e2e = mesh.edge_elements[interior]
    contrib += np.bincount(e2e[:, 0], weights=0.5 * edge_term, minlength=mesh.n_elements)
    contrib += np.bincount(e2e[:, 1], weights=0.5 * edge_term, minlength=mesh.n_elements)
    total = vol.sum() + edge_term.sum()
    return _result(contrib, np.sqrt(total), kind, norm,
                   volume=float(vol.sum()), jumps=float(edge_term.sum()))


def residual_estimate_h1(u_h, space, f):
    """Explicit residual estimator for the H1 seminorm error of the Poisson problem."""
    return _residual_estimate(u_h, space, f, 2, 1, "residual_h1", "h1_semi")


def residual_estimate_l2(u_h, space, f):
    """Explicit residual estimator for the L2 error (weights h_T^4 and h_E^3)."""
    return _residual_estimate(u_h, space, f, 4, 3, "residual_l2", "l2")


def _is_symmetric(A):
    A = sp.csr_matrix(A)
    m = abs(A).max() if A.nnz else 0.0
    return (abs(A - A.T).max() if A.nnz else 0.0) <= 1e-12 * max(m, 1e-300)


def _smoother(A, kind):
    A = sp.csr_matrix(A)
    if callable(kind):
        return kind
    if kind == "gauss_seidel":
        U = sp.triu(A, format="csr")
        return lambda y: spla.spsolve_triangular(U, y, lower=False)
    if kind == "forward_gauss_seidel":
        L = sp.tril(A, format="csr")
        return lambda y: spla.spsolve_triangular(L, y, lower=True)
    if kind == "symmetric_gauss_seidel":
        L = sp.tril(A, format="csr")
        U = sp.triu(A, format="csr")

        def sgs(y):
            x = spla.spsolve_triangular(L, y, lower=True)
            return x + spla.spsolve_triangular(U, y - A @ x, lower=False)
        return sgs
    if kind == "jacobi":
        d = A.diagonal()
        return lambda y: y / d
    if kind == "exact":
        lu = spla.splu(sp.csc_matrix(A))
        return lu.solve
    raise ValueError(f"unknown smoother {kind!r}")


def contraction_factor_estimate(A_fine, A_coarse, P, smoother="gauss_seidel", probes=50, seed=0):
    """Probe the A-norm of the two-level error operator.

    ``E = (I - S A)(I - P A_c^{-1} P^T A)``; returns the largest ratio
    ``||E v||_A / ||v||_A`` over ``probes`` standard-normal vectors ``v``.
    All matrices act on free dofs only; ``P`` may be a sparse matrix or a
    :class:`~femsmooth.fe_space.Prolongation` (its free block is used).
    """
    if hasattr(P, "free"):
        P = P.free
    A = sp.csr_matrix(A_fine)
    Ac = sp.csc_matrix(A_coarse)
    if not (_is_symmetric(A) and _is_symmetric(Ac)):
        raise ValueError("contraction estimate needs symmetric positive definite matrices")
    P = sp.csr_matrix(P)
    try:
        coarse = spla.splu(Ac)
    except RuntimeError as exc:
        raise ValueError(f"coarse matrix is singular: {exc}") from exc
    S = _smoother(A, smoother)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(int(probes)):
        v = rng.standard_normal(A.shape[0])
        nv = v @ (A @ v)
        if nv <= 0:
            raise ValueError("matrix is not positive definite")
        w = v - P @ coarse.solve(P.T @ (A @ v))
        z = w - S(A @ w)
        worst = max(worst, float(np.sqrt(max(z @ (A @ z), 0.0) / nv)))
    return worst
