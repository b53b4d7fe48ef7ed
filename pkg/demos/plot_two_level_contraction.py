"""
Two-level contraction behind the estimators
===========================================

The estimators rest on the fact that one smoothing step plus an exact coarse
correction contracts the error by a mesh-independent factor.  Probe
``E = (I - S A)(I - P A_c^-1 P^T A)`` with random vectors on a sequence of
structured meshes.
"""
from femsmooth import (
    BilinearForm, assemble_matrix, build_prolongation_refine, build_space,
    contraction_factor_estimate, make_structured_square, uniform_red_refine,
)

for n in (4, 8, 16, 32):
    m = make_structured_square(n)
    fm, rmap = uniform_red_refine(m)
    Vc, Vf = build_space(m, 1), build_space(fm, 1)
    P = build_prolongation_refine(Vc, Vf, rmap)
    Af = assemble_matrix(Vf, BilinearForm())[Vf.free_dofs][:, Vf.free_dofs]
    Ac = assemble_matrix(Vc, BilinearForm())[Vc.free_dofs][:, Vc.free_dofs]
    rho = {k: contraction_factor_estimate(Af, Ac, P, k, probes=50)
           for k in ("jacobi", "gauss_seidel", "symmetric_gauss_seidel")}
    print(f"n={n:>3}: " + "  ".join(f"{k} {v:.3f}" for k, v in rho.items()))
