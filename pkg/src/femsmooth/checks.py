"""Quick self-checks of the library invariants (the ``check`` subcommand)."""
import numpy as np
import scipy.sparse as sp

from .afem import build_fine_layer, dorfler_mark, solve_problem
from .assembly import assemble_matrix, assemble_mass_matrix
from .estimators import contraction_factor_estimate, fine_residual, jacobi_estimate
from .fe_space import build_space, interpolate
from .mesh import bisect_marked, make_lshape, make_structured_square, uniform_red_refine, validate
from .problems import convection_diffusion_interface, poisson_lshape, poisson_square_smooth


def _mesh_checks():
    meshes = [make_structured_square(3), make_lshape()]
    fine, rmap = uniform_red_refine(meshes[0])
    meshes.append(fine)
    m = meshes[1]
    for _ in range(4):
        m = bisect_marked(m, [0])
    meshes.append(m)
    bad = [v for mesh in meshes for v in validate(mesh)]
    yield "meshes valid", not bad, "; ".join(bad[:3])
    ok = np.isclose(fine.areas.sum(), meshes[0].areas.sum(), rtol=1e-14)
    yield "red refinement preserves area", bool(ok), ""
    yield "red refinement has 4 children per element", bool(np.all(np.bincount(rmap.parent_of) == 4)), ""


def _space_checks():
    mesh = make_structured_square(2)
    for p in (1, 2, 3):
        V = build_space(mesh, p)
        one = interpolate(V, 1.0)
        M = assemble_mass_matrix(V)
        yield f"P{p} mass matrix integrates 1 to the area", bool(np.isclose(one @ M @ one, 1.0, rtol=1e-12)), ""
        K = assemble_matrix(V, poisson_square_smooth().form)
        yield f"P{p} stiffness annihilates constants", bool(np.abs(K @ one).max() < 1e-12), ""
        asym = abs(K - K.T).max()
        yield f"P{p} stiffness symmetric", bool(asym <= 1e-12 * abs(K).max()), f"{asym:.2e}"
    prob = convection_diffusion_interface(n=4)
    A = assemble_matrix(build_space(prob.initial_mesh(), 1), prob.form)
    yield "convection matrix nonsymmetric", bool(abs(A - A.T).max() > 0), ""


def _estimator_checks():
    prob = poisson_lshape()
    mesh, _ = uniform_red_refine(prob.initial_mesh())
    V = build_space(mesh, 1)
    fine = build_fine_layer(prob, V)
    P = fine.P.matrix
    disc = solve_problem(prob, V, P.T @ fine.A @ P, P.T @ fine.b)
    r = fine_residual(disc.u, fine.A, fine.b, fine.P, check=False)
    yield "Galerkin orthogonality", r.orthogonality <= 1e-9, f"{r.orthogonality:.2e}"
    est = jacobi_estimate(r, fine.A, fine.loc)
    yield "indicators split the estimator", est.splitting_defect() <= 1e-10, f"{est.splitting_defect():.2e}"
    marked = dorfler_mark(est.indicators_squared, 0.5)
    share = est.indicators_squared[marked].sum() / est.indicators_squared.sum()
    yield "Dorfler set carries theta", bool(share >= 0.5), f"{share:.3f}"
    free_f = fine.space.free_dofs
    Af = sp.csr_matrix(fine.A)[free_f][:, free_f]
    Ac = sp.csr_matrix(assemble_matrix(V, prob.form))[V.free_dofs][:, V.free_dofs]
    rho = contraction_factor_estimate(Af, Ac, fine.P, "gauss_seidel", probes=10)
    yield "two-level iteration contracts", rho < 1.0, f"rho={rho:.3f}"


def run_checks():
    """Return ``[(name, passed, detail), ...]``."""
    out = []
    for group in (_mesh_checks, _space_checks, _estimator_checks):
        try:
            out.extend((n, bool(ok), d) for n, ok, d in group())
        except Exception as exc:  # a crash counts as a failed check
            out.append((group.__name__.strip("_"), False, f"{type(exc).__name__}: {exc}"))
    return out
