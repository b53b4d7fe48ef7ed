"""Smoother-type a posteriori error estimators for adaptive finite elements in 2D."""
from .mesh import (
    Mesh, RefinementMap, make_structured_square, make_lshape, uniform_red_refine,
    bisect_marked, vertex_patches, validate,
)
from .fe_space import (
    FeSpace, Prolongation, build_space, build_prolongation_refine,
    build_prolongation_degree, interpolate,
)
from .assembly import (
    BilinearForm, assemble_matrix, assemble_load, assemble_h1_seminorm_matrix,
    assemble_mass_matrix, restrict_free, expand_free,
)
from .linear_solve import solve_spd, solve_general, weighted_norm, SolveReport, SolverError
from .estimators import (
    Residual, EstimatorResult, fine_residual, jacobi_estimate, gauss_seidel_smooth,
    smoothed_norm_estimate, low_high_degree_estimate, implicit_patch_estimate,
    residual_estimate_h1, residual_estimate_l2, contraction_factor_estimate,
)
from .afem import (
    AfemConfig, ConvergenceRecord, dorfler_mark, exact_error, reference_error,
    saturation_estimate, afem_run,
)
from .problems import (
    ProblemSpec, poisson_lshape, poisson_square_smooth, convection_diffusion_interface,
    get_problem,
)

from .config import RunConfig, ConfigError, parse_config, serialize_config, load_config
from .experiments import run_experiment, compare_estimators, mesh_dump
from .mesh_io import read_triangle, write_triangle, mesh_svg

__version__ = "0.1.0"
