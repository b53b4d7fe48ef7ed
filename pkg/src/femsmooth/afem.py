"""The solve -> estimate -> mark -> refine loop."""
import csv
import io
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import (
    assemble_h1_seminorm_matrix, assemble_load, assemble_mass_matrix, assemble_matrix,
    expand_free, quadrature_points, restrict_free,
)
from .estimators import (
    fine_residual, gauss_seidel_smooth, implicit_patch_estimate, jacobi_estimate,
    jacobi_smooth, localize_refined, localize_same_mesh, residual_estimate_h1,
    residual_estimate_l2, smoothed_norm_estimate,
)
from .fe_space import (
    build_prolongation_degree, build_prolongation_refine, build_space, interpolate,
)
from .linear_solve import solve_general, solve_spd, weighted_norm
from .mesh import bisect_marked, uniform_red_refine
from .quadrature import triangle_rule

__all__ = [
    "ESTIMATORS",
    "NORMS",
    "AfemConfig",
    "AfemAbort",
    "IterationRow",
    "ConvergenceRecord",
    "CSV_HEADER",
    "csv_line",
    "FineLayer",
    "Discrete",
    "dorfler_mark",
    "solve_problem",
    "build_fine_layer",
    "estimate_on",
    "exact_error",
    "reference_error",
    "saturation_estimate",
    "afem_run",
    "loglog_slope",
]

ESTIMATORS = ("jacobi", "gauss_seidel", "implicit_patch", "residual_h1", "residual_l2")
NORMS = ("h1_semi", "l2", "energy")
VARIANTS = ("red", "degree")


class AfemAbort(RuntimeError):
    """An adaptive run stopped early; ``record`` holds the completed iterations."""

    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class AfemConfig:
    theta: float = 0.5
    estimator: str = "jacobi"
    norm: str = "h1_semi"
    degree: int = 1
    max_dofs: int = 10_000
    variant: str = "red"
    fine_degree: Optional[int] = None
    solver: str = "direct"
    tol: float = 1e-12
    max_iterations: int = 200
    measure_saturation: bool = False

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown fine-space variant {self.variant!r}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.fine_degree is not None and self.fine_degree <= self.degree:
            raise ValueError("fine_degree must exceed degree")
        if self.max_dofs < 1:
            raise ValueError("max_dofs must be positive")


@dataclass(frozen=True)
class IterationRow:
    iter: int
    dofs: int
    error: float
    estimator: float
    effectivity: float
    seconds: float


CSV_HEADER = ("iter", "dofs", "error", "estimator", "effectivity", "seconds")


def _fmt(x):
    return format(float(x), ".17g")


def csv_line(row, timing=True):
    """One CSV record (with trailing newline) for an :class:`IterationRow`."""
    vals = (row.iter, row.dofs, _fmt(row.error), _fmt(row.estimator), _fmt(row.effectivity),
            _fmt(row.seconds if timing else 0.0))
    return ",".join(str(v) for v in vals) + "\n"


@dataclass
class ConvergenceRecord:
    rows: list = field(default_factory=list)
    # per-iteration diagnostics that are not part of the CSV
    n_elements: list = field(default_factory=list)
    saturation: list = field(default_factory=list)
    orthogonality: list = field(default_factory=list)
    solve_residuals: list = field(default_factory=list)
    marked: list = field(default_factory=list)
    marked_centroids: list = field(default_factory=list)
    marked_diameters: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    final_mesh: object = None
    final_indicators: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, fh=None, timing=True):
        """CSV text with header ``iter,dofs,error,estimator,effectivity,seconds``.

        With ``timing=False`` the seconds column is written as 0 so that
        repeated runs produce byte-identical files.
        """
        text = ",".join(CSV_HEADER) + "\n" + "".join(csv_line(r, timing) for r in self.rows)
        if fh is not None:
            fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = [IterationRow(int(a), int(b), float(c), float(d), float(e), float(f))
                for a, b, c, d, e, f in reader]
        return cls(rows=rows)


def dorfler_mark(eta_sq, theta):
    """Minimal set carrying a ``theta`` fraction of the total squared indicator.

    Elements are taken greedily by descending ``eta_T^2``, ties broken by
    lower element index.  Returns the sorted marked indices.
    """
    eta_sq = np.asarray(eta_sq, dtype=float)
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if eta_sq.size == 0 or np.any(eta_sq < 0) or not np.all(np.isfinite(eta_sq)):
        raise ValueError("indicators must be finite and non-negative")
    total = eta_sq.sum()
    if total <= 0:
        raise ValueError("all indicators vanish; nothing to mark")
    order = np.lexsort((np.arange(eta_sq.size), -eta_sq))
    csum = np.cumsum(eta_sq[order])
    if theta == 1.0:
        k = int(np.count_nonzero(eta_sq > 0))
    else:
        k = min(int(np.searchsorted(csum, theta * total, side="left")) + 1, eta_sq.size)
    return np.sort(order[:k])


@dataclass(eq=False)
class Discrete:
    space: object
    A: object
    b: object
    lift: np.ndarray
    u: np.ndarray
    report: object


@dataclass(eq=False)
class FineLayer:
    space: object
    A: object
    b: object
    P: object
    loc: object
    rmap: object = None


def solve_problem(problem, space, A=None, b=None, solver="direct", tol=1e-12):
    """Assemble (unless given), impose Dirichlet data and solve."""
    A = assemble_matrix(space, problem.form) if A is None else A
    b = assemble_load(space, problem.f) if b is None else b
    lift = interpolate(space, problem.g)
    Aff, bf = restrict_free(A, b, space, lift)
    if problem.symmetric:
        x, rep = solve_spd(Aff, bf, tol=tol, method=solver)
    else:
        x, rep = solve_general(Aff, bf, tol=tol)
    return Discrete(space, A, b, lift, expand_free(space, x, lift), rep)


def build_fine_layer(problem, space, variant="red", fine_degree=None):
    mesh = space.mesh
    if variant == "red":
        fmesh, rmap = uniform_red_refine(mesh)
        fspace = build_space(fmesh, space.degree)
        P = build_prolongation_refine(space, fspace, rmap)
        loc = localize_refined(fspace, rmap)
    elif variant == "degree":
        fspace = build_space(mesh, fine_degree or space.degree + 1)
        P = build_prolongation_degree(space, fspace)
        loc = localize_same_mesh(fspace)
        rmap = None
    else:
        raise ValueError(f"unknown variant {variant!r}")
    A = assemble_matrix(fspace, problem.form)
    b = assemble_load(fspace, problem.f)
    return FineLayer(fspace, A, b, P, loc, rmap)


def estimate_on(problem, disc, fine, estimator, norm):
    """Evaluate one estimator for the discrete solution ``disc``.

    Returns ``(EstimatorResult, Residual or None)``.

    Jacobi in the H1/energy setting of a symmetric problem is the quadratic
    form ``<r, D^{-1} r>^{1/2}``; otherwise Jacobi and Gauss-Seidel outputs
    are measured in the H1 seminorm or the L2 norm.
    """
    l2 = norm == "l2"
    if estimator in ("jacobi", "gauss_seidel"):
        r = fine_residual(disc.u, fine.A, fine.b, fine.P)
        if estimator == "jacobi" and problem.symmetric and not l2:
            return jacobi_estimate(r, fine.A, fine.loc), r
        x = jacobi_smooth(r, fine.A) if estimator == "jacobi" else gauss_seidel_smooth(r, fine.A)
        return smoothed_norm_estimate(x, fine.loc, "l2" if l2 else "h1_semi", kind=estimator), r
    if estimator == "implicit_patch":
        if l2:
            raise ValueError("implicit_patch estimates the energy norm only")
        return implicit_patch_estimate(disc.u, disc.space, problem.form, problem.f), None
    if estimator == "residual_h1":
        return residual_estimate_h1(disc.u, disc.space, problem.f), None
    if estimator == "residual_l2":
        return residual_estimate_l2(disc.u, disc.space, problem.f), None
    raise ValueError(f"unknown estimator {estimator!r}")


def _error_sq(space, u, exact, norm, rule, elems):
    mesh = space.mesh
    x = quadrature_points(mesh, rule)[elems]
    det = np.abs(mesh.geometry[2][elems])
    coeffs = np.asarray(u)[space.elem_dofs[elems]]
    if norm == "l2":
        vals = space.element.values(rule.points)
        uh = np.einsum("qk,ek->eq", vals, coeffs)
        diff = exact.value(x[..., 0], x[..., 1]) - uh
        integrand = diff ** 2
    else:
        inv = mesh.geometry[3][elems]
        gref = space.element.gradients(rule.points)
        grads = np.einsum("eji,qkj->eqki", inv, gref)
        guh = np.einsum("eqki,ek->eqi", grads, coeffs)
        gx, gy = exact.gradient(x[..., 0], x[..., 1])
        integrand = (gx - guh[..., 0]) ** 2 + (gy - guh[..., 1]) ** 2
    if not np.all(np.isfinite(integrand)):
        raise FloatingPointError("non-finite error integrand at a quadrature point")
    return det * np.einsum("q,eq->e", rule.weights, integrand)


def exact_error(space, u, exact, norm="h1_semi", qdeg=None, per_element=False):
    """``|u - u_h|`` in the H1 seminorm (``"h1_semi"``/``"energy"``) or ``"l2"``.

    Elements touching a declared singular point use a rule of degree
    ``2p + 6``, all others ``2p + 2``.
    """
    p = space.degree
    mesh = space.mesh
    all_elems = np.arange(mesh.n_elements)
    e2 = _error_sq(space, u, exact, norm, triangle_rule(qdeg or 2 * p + 2), all_elems)
    if exact.singular_points:
        touch = np.zeros(mesh.n_elements, dtype=bool)
        for pt in exact.singular_points:
            near = np.flatnonzero(np.linalg.norm(mesh.vertices - np.asarray(pt), axis=1) < 1e-12)
            touch |= np.isin(mesh.elements, near).any(axis=1)
        sel = np.flatnonzero(touch)
        if sel.size:
            e2[sel] = _error_sq(space, u, exact, norm, triangle_rule(2 * p + 6), sel)
    return e2 if per_element else float(np.sqrt(e2.sum()))


def _norm_matrix(space, norm):
    return assemble_mass_matrix(space) if norm == "l2" else assemble_h1_seminorm_matrix(space)


def reference_error(problem, disc, norm="h1_semi", fine=None, solver="direct", tol=1e-12):
    """``||I_h u_h - u_{h/2}||`` with ``u_{h/2}`` solved on the red refinement.

    Returns ``(error, fine_discrete)``.
    """
    if fine is None or fine.rmap is None:
        fine = build_fine_layer(problem, disc.space, "red")
    fd = solve_problem(problem, fine.space, fine.A, fine.b, solver=solver, tol=tol)
    diff = fine.P.matrix @ disc.u - fd.u
    return weighted_norm(diff, _norm_matrix(fine.space, norm)), fd


def saturation_estimate(problem, levels, degree=1, norm="h1_semi", mesh=None, solver="direct"):
    """Measured ``||u - u_{h/2}|| / ||u - u_h||`` along uniform red refinement.

    Returns a list with one entry per coarse level; ``None`` marks levels where
    the coarse error vanishes (ratio undefined).
    """
    if problem.exact is None:
        raise ValueError("saturation measurement needs an exact solution")
    mesh = problem.initial_mesh() if mesh is None else mesh
    errs = []
    for _ in range(levels + 1):
        space = build_space(mesh, degree)
        d = solve_problem(problem, space, solver=solver)
        errs.append(exact_error(space, d.u, problem.exact, norm))
        mesh, _ = uniform_red_refine(mesh)
    out = []
    for ec, ef in zip(errs[:-1], errs[1:]):
        out.append(ef / ec if ec > 1e-14 else None)
    return out


def loglog_slope(dofs, values):
    """Least-squares slope of ``log(values)`` against ``log(dofs)``."""
    return float(np.polyfit(np.log(np.asarray(dofs, float)), np.log(np.asarray(values, float)), 1)[0])


def _estimation_norm(config):
    return "l2" if config.norm == "l2" else "h1_semi"


def afem_run(problem, config, keep_meshes=False, on_row=None, mesh=None):
    """Run the adaptive loop until the dof count exceeds ``config.max_dofs``.

    Each iteration solves on the current mesh, evaluates the configured
    estimator, measures the error (exact, or the reference error against the
    red-refined solution when no exact solution is known), logs a row, marks
    with Dorfler's criterion and refines by newest-vertex bisection.
    """
    mesh = problem.initial_mesh() if mesh is None else mesh
    rec = ConvergenceRecord()
    norm = _estimation_norm(config)
    needs_fine = config.estimator in ("jacobi", "gauss_seidel")
    last_dofs = -1
    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        try:
            space = build_space(mesh, config.degree)
            if space.ndofs <= last_dofs:
                raise RuntimeError(f"dof count did not increase ({space.ndofs} <= {last_dofs})")
            fine = build_fine_layer(problem, space, config.variant, config.fine_degree) if needs_fine else None
            red = fine if (fine is not None and fine.rmap is not None) else None
            if red is None and (problem.exact is None or config.measure_saturation):
                red = build_fine_layer(problem, space, "red")
            layer = fine if fine is not None else red
            # Galerkin-consistent coarse load: quadrature happens on the fine layer only
            b = layer.P.matrix.T @ layer.b if layer is not None else None
            A = layer.P.matrix.T @ layer.A @ layer.P.matrix if layer is not None else None
            disc = solve_problem(problem, space, A=A, b=b, solver=config.solver, tol=config.tol)
            est, r = estimate_on(problem, disc, fine, config.estimator, config.norm)
            sat = None
            if problem.exact is not None:
                error = exact_error(space, disc.u, problem.exact, norm)
                if config.measure_saturation:
                    fd = solve_problem(problem, red.space, red.A, red.b, solver=config.solver, tol=config.tol)
                    sat = exact_error(red.space, fd.u, problem.exact, norm) / error
            else:
                error, _ = reference_error(problem, disc, norm, fine=red, solver=config.solver, tol=config.tol)
        except Exception as exc:
            raise AfemAbort(f"iteration {it}: {exc}", rec) from exc

        row = IterationRow(it, space.ndofs, error, est.value,
                           est.value / error if error > 0 else np.inf, time.perf_counter() - t0)
        rec.rows.append(row)
        rec.n_elements.append(mesh.n_elements)
        rec.saturation.append(sat)
        rec.orthogonality.append(r.orthogonality if r is not None else None)
        rec.solve_residuals.append(disc.report.residual)
        if keep_meshes:
            rec.meshes.append(mesh)
        rec.final_mesh = mesh
        rec.final_indicators = est.indicators
        if on_row is not None:
            on_row(row)
        last_dofs = space.ndofs
        if space.ndofs > config.max_dofs:
            break
        try:
            marked = dorfler_mark(est.indicators_squared, config.theta)
        except ValueError as exc:
            raise AfemAbort(f"iteration {it}: {exc}", rec) from exc
        rec.marked.append(marked)
        rec.marked_centroids.append(mesh.centroids[marked])
        rec.marked_diameters.append(mesh.diameters[marked])
        mesh = bisect_marked(mesh, marked)
    else:
        raise AfemAbort(f"max_iterations={config.max_iterations} reached before max_dofs", rec)
    return rec
