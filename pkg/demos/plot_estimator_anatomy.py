"""
What a smoother-based estimator computes
========================================

On a fixed mesh, compare the quantities behind each estimator with the true
error.  The coarse solution is computed from the Galerkin projection of the
fine system, so the fine residual is orthogonal to the coarse space.  The
estimators only see that residual.
"""
import numpy as np

from femsmooth import (
    exact_error, fine_residual, gauss_seidel_smooth, implicit_patch_estimate, jacobi_estimate,
    low_high_degree_estimate, make_lshape, poisson_lshape, residual_estimate_h1,
    smoothed_norm_estimate,
)
from femsmooth.afem import build_fine_layer, reference_error, solve_problem
from femsmooth import build_space

problem = poisson_lshape()
V = build_space(make_lshape(4), 1)
fine = build_fine_layer(problem, V)
P = fine.P.matrix
disc = solve_problem(problem, V, P.T @ fine.A @ P, P.T @ fine.b)

###############################################################################
# The residual ``r = b_f - A_f P u_h`` lives on the fine free dofs.  Its
# projection onto the coarse space vanishes up to round-off.

r = fine_residual(disc.u, fine.A, fine.b, fine.P)
print(f"fine dofs {fine.space.n_free}, ||P^T r|| / ||r|| = {r.orthogonality:.1e}")

###############################################################################
# Collect the estimates next to the exact and reference errors.

err = exact_error(V, disc.u, problem.exact)
ref, _ = reference_error(problem, disc, fine=fine)
rows = [
    ("Jacobi <r, D^-1 r>^1/2", jacobi_estimate(r, fine.A, fine.loc)),
    ("GS sweep, H1 seminorm", smoothed_norm_estimate(gauss_seidel_smooth(r, fine.A), fine.loc)),
    ("P1 -> P2 Jacobi", low_high_degree_estimate(disc.u, V, problem.form, problem.f)[0]),
    ("vertex patch solves", implicit_patch_estimate(disc.u, V, problem.form, problem.f)),
    ("explicit residual", residual_estimate_h1(disc.u, V, problem.f)),
]
print(f"{'exact error':<26}{err:.5f}")
print(f"{'reference error':<26}{ref:.5f}")
for label, res in rows:
    print(f"{label:<26}{res.value:.5f}   effectivity {res.value / err:.3f}")

###############################################################################
# Every estimate splits exactly into element indicators; the largest sit at
# the re-entrant corner.

res = rows[0][1]
top = np.argsort(res.indicators)[::-1][:3]
print("splitting defect", f"{res.splitting_defect():.1e}")
print("largest indicators at centroids", np.round(V.mesh.centroids[top], 3).tolist())
