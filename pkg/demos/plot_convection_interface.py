"""
A convection-dominated interface problem
========================================

``(alpha grad u, grad v) + (beta u, grad v) = (1, v)`` on the unit square
with ``beta = (1, 2)`` and a diffusion jump from 1 to 1e-3 across
``x = 0.5``.  Transport runs along ``-beta``, so layers form at the interface
and at the left and bottom edges.  No exact solution is known, so the error
is measured against the solution on the red-refined mesh.

Centred Galerkin with 1e-3 diffusion is far from resolved on the initial
mesh.  Expect the Gauss-Seidel estimate to be erratic until the layers are
resolved; the Jacobi estimate stays much tamer.
"""
from pathlib import Path

from femsmooth import AfemConfig, afem_run, convection_diffusion_interface
from femsmooth.experiments import marked_near_fraction
from femsmooth.mesh_io import write_mesh_svg
from femsmooth.problems import layer_distance

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)
problem = convection_diffusion_interface(n=16)

for est in ("jacobi", "gauss_seidel"):
    rec = afem_run(problem, AfemConfig(estimator=est, max_dofs=6000))
    eff = rec.column("effectivity")
    print(f"{est:>13}: final dofs {rec.rows[-1].dofs}, ratio range [{eff.min():.3g}, {eff.max():.3g}], "
          f"marked near layers {marked_near_fraction(rec, layer_distance):.0%}")
    write_mesh_svg(rec.final_mesh, OUT / f"interface_{est}.svg", values=rec.final_indicators,
                   title=f"{est}, {rec.final_mesh.n_elements} elements")
