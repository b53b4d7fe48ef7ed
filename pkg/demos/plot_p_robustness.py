"""
Effectivity as the polynomial degree grows
==========================================

Fix a sequence of adaptive meshes from a P1 run and evaluate the estimators
in P1 to P4 on each of them.  The Jacobi estimator keeps its effectivity
nearly constant while the explicit residual estimator overestimates more and
more with increasing degree.
"""
from pathlib import Path

import numpy as np

from femsmooth import AfemConfig, afem_run, exact_error, fine_residual, jacobi_estimate, poisson_lshape
from femsmooth import residual_estimate_h1, build_space
from femsmooth.afem import build_fine_layer, solve_problem
from femsmooth.plots import loglog_svg

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)
problem = poisson_lshape()
rec = afem_run(problem, AfemConfig(max_dofs=1500), keep_meshes=True)
meshes = rec.meshes[::3]

###############################################################################
# For each mesh and degree solve the Galerkin-consistent coarse problem and
# record both effectivities.

table = {p: ([], [], []) for p in (1, 2, 3, 4)}
for mesh in meshes:
    for p in table:
        V = build_space(mesh, p)
        fine = build_fine_layer(problem, V)
        P = fine.P.matrix
        disc = solve_problem(problem, V, P.T @ fine.A @ P, P.T @ fine.b)
        err = exact_error(V, disc.u, problem.exact)
        r = fine_residual(disc.u, fine.A, fine.b, fine.P)
        table[p][0].append(V.ndofs)
        table[p][1].append(jacobi_estimate(r, fine.A, fine.loc).value / err)
        table[p][2].append(residual_estimate_h1(disc.u, V, problem.f).value / err)

for p, (d, jac, res) in table.items():
    print(f"P{p}: Jacobi {np.round(jac, 2).tolist()}  residual {np.round(res, 2).tolist()}")

series = [(f"Jacobi P{p}", d, j) for p, (d, j, _) in table.items()]
series += [(f"residual P{p}", d, r) for p, (d, _, r) in table.items()]
(OUT / "p_robustness.svg").write_text(loglog_svg(series, ylabel="effectivity", title="effectivity vs dofs"))
