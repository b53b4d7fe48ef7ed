"""Randomised invariants."""
import numpy as np
from hypothesis import given, settings, strategies as st

from femsmooth import (
    ConvergenceRecord, RunConfig, build_space, dorfler_mark, fine_residual, jacobi_estimate,
    make_lshape, make_structured_square, parse_config, poisson_lshape, serialize_config,
    uniform_red_refine,
)
from femsmooth.afem import ESTIMATORS, NORMS, IterationRow, build_fine_layer, solve_problem
from femsmooth.mesh import bisect_marked, min_angles, validate

SETTINGS = settings(max_examples=25, deadline=None)

base_meshes = st.sampled_from([("square", make_structured_square(2)), ("lshape", make_lshape())])


@st.composite
def refined_meshes(draw):
    name, mesh = draw(base_meshes)
    rounds = draw(st.integers(0, 6))
    for _ in range(rounds):
        k = draw(st.integers(1, max(1, mesh.n_elements // 3)))
        marked = draw(st.lists(st.integers(0, mesh.n_elements - 1), min_size=1, max_size=k))
        mesh = bisect_marked(mesh, marked)
    return name, mesh


@SETTINGS
@given(refined_meshes())
def test_bisection_keeps_mesh_valid(item):
    name, mesh = item
    init = make_structured_square(2) if name == "square" else make_lshape()
    assert validate(mesh) == []
    assert np.isclose(mesh.areas.sum(), init.areas.sum(), rtol=1e-13)
    assert np.all(mesh.areas > 0)
    assert min_angles(mesh).min() >= 0.5 * min_angles(init).min() - 1e-12


@SETTINGS
@given(refined_meshes())
def test_red_refinement_children(item):
    _, mesh = item
    fine, rmap = uniform_red_refine(mesh)
    assert validate(fine) == []
    assert np.all(np.bincount(rmap.parent_of, minlength=mesh.n_elements) == 4)
    assert np.allclose(np.bincount(rmap.parent_of, weights=fine.areas), mesh.areas, rtol=1e-12)


@SETTINGS
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=60).filter(lambda v: sum(v) > 0),
       st.floats(0.01, 1.0))
def test_dorfler_properties(eta, theta):
    eta = np.array(eta)
    m = dorfler_mark(eta, theta)
    assert len(m) >= 1 and np.all(np.diff(m) > 0)
    assert eta[m].sum() >= theta * eta.sum() * (1 - 1e-12)
    if len(m) > 1:
        assert eta[m].sum() - eta[m].min() < theta * eta.sum()
    # the marked set is a greedy prefix, so a larger theta never unmarks anything
    bigger = dorfler_mark(eta, min(1.0, theta + 0.2))
    assert set(m) <= set(bigger)


finite = st.floats(min_value=1e-300, max_value=1e300, allow_nan=False, allow_infinity=False)


@SETTINGS
@given(st.lists(st.tuples(st.integers(1, 10 ** 7), finite, finite, finite), min_size=1, max_size=20))
def test_csv_roundtrip(rows):
    rec = ConvergenceRecord([IterationRow(i, d, e, s, r, 0.0) for i, (d, e, s, r) in enumerate(rows)])
    back = ConvergenceRecord.from_csv(rec.to_csv())
    assert [(r.dofs, r.error, r.estimator, r.effectivity) for r in back.rows] == \
           [(r.dofs, r.error, r.estimator, r.effectivity) for r in rec.rows]


@st.composite
def run_configs(draw):
    est = draw(st.sampled_from(ESTIMATORS))
    norms = ["h1_semi", "energy"] if est == "implicit_patch" else list(NORMS)
    degree = draw(st.integers(1, 4))
    variant = draw(st.sampled_from(["red", "degree"]))
    q = draw(st.one_of(st.none(), st.integers(degree + 1, degree + 3)))
    return RunConfig(problem=draw(st.sampled_from(["poisson_lshape", "poisson_square_smooth"])),
                     estimator=est, variant=variant, q=q, degree=degree,
                     theta=draw(st.floats(0.01, 1.0)), max_dofs=draw(st.integers(10, 10 ** 6)),
                     norm=draw(st.sampled_from(norms)), seed=draw(st.integers(0, 2 ** 31)),
                     timing=draw(st.booleans()))


@SETTINGS
@given(run_configs())
def test_config_roundtrip(cfg):
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text


@settings(max_examples=10, deadline=None)
@given(refined_meshes().filter(lambda it: it[0] == "lshape"), st.integers(1, 2))
def test_galerkin_orthogonality_on_random_meshes(item, p):
    _, mesh = item
    prob = poisson_lshape()
    V = build_space(mesh, p)
    fine = build_fine_layer(prob, V)
    P = fine.P.matrix
    disc = solve_problem(prob, V, P.T @ fine.A @ P, P.T @ fine.b)
    r = fine_residual(disc.u, fine.A, fine.b, fine.P)
    assert r.orthogonality <= 1e-9
    res = jacobi_estimate(r, fine.A, fine.loc)
    assert res.splitting_defect() <= 1e-10


@settings(max_examples=10, deadline=None)
@given(refined_meshes(), st.integers(1, 3))
def test_prolongation_energy_identity(item, p):
    from femsmooth import BilinearForm, assemble_matrix, build_prolongation_refine
    _, mesh = item
    fine, rmap = uniform_red_refine(mesh)
    Vc, Vf = build_space(mesh, p), build_space(fine, p)
    P = build_prolongation_refine(Vc, Vf, rmap).matrix
    Ac, Af = assemble_matrix(Vc, BilinearForm()), assemble_matrix(Vf, BilinearForm())
    assert abs(P.T @ Af @ P - Ac).max() <= 1e-10 * abs(Ac).max()
    assert np.allclose(P @ np.ones(Vc.ndofs), 1.0)
