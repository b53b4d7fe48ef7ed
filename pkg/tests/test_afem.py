import numpy as np
import pytest

from femsmooth import (
    AfemConfig, BilinearForm, ConvergenceRecord, afem_run, build_space, dorfler_mark, exact_error,
    interpolate, make_structured_square, poisson_lshape, poisson_square_smooth, reference_error,
    saturation_estimate, uniform_red_refine,
)
from femsmooth.afem import AfemAbort, loglog_slope, solve_problem
from femsmooth.problems import ExactSolution, ProblemSpec


def test_dorfler_examples():
    assert dorfler_mark([4, 3, 2, 1], 0.5).tolist() == [0, 1]
    assert dorfler_mark([4, 3, 0, 1], 1.0).tolist() == [0, 1, 3]
    assert dorfler_mark([2.0], 0.5).tolist() == [0]
    # ties go to the lower index
    assert dorfler_mark([1, 1, 1, 1], 0.5).tolist() == [0, 1]


@pytest.mark.parametrize("bad", [([0, 0], 0.5), ([1, -1], 0.5), ([1, np.nan], 0.5),
                                 ([1, 2], 0.0), ([1, 2], 1.5), ([], 0.5)])
def test_dorfler_errors(bad):
    with pytest.raises(ValueError):
        dorfler_mark(*bad)


def test_dorfler_minimality_random():
    rng = np.random.default_rng(4)
    for _ in range(200):
        eta = rng.exponential(size=rng.integers(1, 40))
        theta = rng.uniform(0.05, 1.0)
        m = dorfler_mark(eta, theta)
        assert eta[m].sum() >= theta * eta.sum() * (1 - 1e-12)
        if len(m) > 1:
            smallest = m[np.argmin(eta[m])]
            assert eta[m].sum() - eta[smallest] < theta * eta.sum()


def quadratic_problem():
    u = lambda x, y: x ** 2 - y ** 2 + x * y  # noqa: E731  harmonic
    grad = lambda x, y: (2 * x + y, -2 * y + x)  # noqa: E731
    return ProblemSpec("quad", lambda: make_structured_square(2), BilinearForm(), 0.0, u,
                       ExactSolution(u, grad))


def test_exact_error_examples():
    V = build_space(make_structured_square(3), 1)
    ex = ExactSolution(lambda x, y: x, lambda x, y: (np.ones_like(x), np.zeros_like(x)))
    assert np.isclose(exact_error(V, np.zeros(V.ndofs), ex), 1.0, rtol=1e-13)
    assert exact_error(V, interpolate(V, ex.value), ex) <= 1e-10
    assert exact_error(V, interpolate(V, ex.value), ex, "l2") <= 1e-10
    prob = quadratic_problem()
    V2 = build_space(prob.initial_mesh(), 2)
    assert exact_error(V2, interpolate(V2, prob.exact.value), prob.exact) <= 1e-10


def test_exact_error_monotone_on_uniform_lshape():
    prob = poisson_lshape()
    mesh = prob.initial_mesh()
    errs = []
    for _ in range(5):
        V = build_space(mesh, 1)
        errs.append(exact_error(V, solve_problem(prob, V).u, prob.exact))
        mesh, _ = uniform_red_refine(mesh)
    assert np.all(np.diff(errs) < 0), errs


def test_nonfinite_error_integrand_aborts():
    V = build_space(make_structured_square(2), 1)
    ex = ExactSolution(lambda x, y: np.where(x > 0.5, np.nan, 0.0),
                       lambda x, y: (np.zeros_like(x), np.zeros_like(x)))
    with pytest.raises(FloatingPointError):
        exact_error(V, np.zeros(V.ndofs), ex, "l2")


def test_reference_error_vanishes_for_polynomial_solution():
    prob = quadratic_problem()
    V = build_space(prob.initial_mesh(), 2)
    err, fd = reference_error(prob, solve_problem(prob, V))
    assert err <= 1e-10
    assert fd.space.mesh.n_elements == 4 * V.mesh.n_elements


def test_saturation_examples():
    assert saturation_estimate(quadratic_problem(), 2, degree=2) == [None, None]
    gam = saturation_estimate(poisson_square_smooth(), 3)
    assert 0.4 <= gam[-1] <= 0.6
    with pytest.raises(ValueError):
        from femsmooth import convection_diffusion_interface
        saturation_estimate(convection_diffusion_interface(n=2), 1)


@pytest.fixture(scope="module")
def lshape_run():
    cfg = AfemConfig(max_dofs=10_000, measure_saturation=True)
    return afem_run(poisson_lshape(), cfg, keep_meshes=True)


def test_lshape_rate_and_effectivity(lshape_run):
    rec = lshape_run
    d = rec.column("dofs")
    assert np.all(np.diff(d) > 0) and d[-1] > 10_000 >= d[-2]
    slope = loglog_slope(d[-5:], rec.column("error")[-5:])
    assert -0.6 <= slope <= -0.4
    eff = rec.column("effectivity")
    assert np.all((eff >= 0.2) & (eff <= 5))
    assert eff[-5:].max() / eff[-5:].min() < 2
    assert max(o for o in rec.orthogonality) <= 1e-9


def test_lshape_origin_marked(lshape_run):
    rec = lshape_run
    hits = 0
    for mesh, marked in zip(rec.meshes, rec.marked):
        origin = np.flatnonzero(np.all(mesh.vertices == 0.0, axis=1))
        hits += bool(np.isin(mesh.elements[marked], origin).any())
    assert hits >= 0.8 * len(rec.marked)


def test_lshape_saturation_and_reference_bound(lshape_run):
    rec = lshape_run
    gam = np.array(rec.saturation, dtype=float)
    assert np.all(gam < 1)
    prob = poisson_lshape()
    for mesh, g, row in list(zip(rec.meshes, gam, rec.rows))[::3]:
        V = build_space(mesh, 1)
        ref, _ = reference_error(prob, solve_problem(prob, V))
        assert ref <= exact_error(V, solve_problem(prob, V).u, prob.exact) / (1 - g)


def test_theta_one_is_near_uniform():
    rec = afem_run(poisson_square_smooth(), AfemConfig(theta=1.0, estimator="residual_h1", max_dofs=5000))
    d = rec.column("dofs").astype(float)
    growth = (d[-1] / d[0]) ** (1 / (len(d) - 1))
    assert growth > 1.8
    assert np.all(rec.column("dofs")[1:] == np.sort(rec.column("dofs")[1:]))


def test_determinism_and_csv_roundtrip():
    cfg = AfemConfig(estimator="gauss_seidel", max_dofs=800)
    a = afem_run(poisson_lshape(), cfg).to_csv(timing=False)
    b = afem_run(poisson_lshape(), cfg).to_csv(timing=False)
    assert a == b
    back = ConvergenceRecord.from_csv(a)
    assert back.to_csv(timing=False) == a
    assert a.splitlines()[0] == "iter,dofs,error,estimator,effectivity,seconds"
    with pytest.raises(ValueError):
        ConvergenceRecord.from_csv("a,b\n1,2\n")


def test_zero_indicators_abort_with_partial_record():
    zero = ExactSolution(lambda x, y: 0 * x, lambda x, y: (0 * x, 0 * y))
    prob = ProblemSpec("zero", lambda: make_structured_square(2), BilinearForm(), 0.0, 0.0, zero)
    with pytest.raises(AfemAbort, match="vanish") as exc:
        afem_run(prob, AfemConfig(max_dofs=1000))
    assert len(exc.value.record) == 1


@pytest.mark.parametrize("kw", [dict(theta=0.0), dict(theta=1.5), dict(estimator="nope"),
                                dict(norm="h2"), dict(variant="green"), dict(degree=0),
                                dict(degree=2, fine_degree=2), dict(max_dofs=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AfemConfig(**kw)


def test_degree_variant_and_l2_mode_run():
    rec = afem_run(poisson_lshape(), AfemConfig(variant="degree", max_dofs=600))
    assert np.all(rec.column("effectivity") > 0)
    rec = afem_run(poisson_lshape(), AfemConfig(norm="l2", max_dofs=600))
    assert np.all(rec.column("effectivity") > 0)
