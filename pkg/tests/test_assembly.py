import numpy as np
import pytest
import scipy.io

from femsmooth import (
    BilinearForm, assemble_h1_seminorm_matrix, assemble_load, assemble_mass_matrix,
    assemble_matrix, build_space, expand_free, interpolate, make_lshape, make_structured_square,
    restrict_free, solve_spd,
)
from femsmooth.assembly import element_matrices, write_matrix_market
from femsmooth.mesh import Mesh
from femsmooth.quadrature import line_rule, triangle_rule


def reference_space(p=1):
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]])
    return build_space(m, p)


def test_reference_element_matrices():
    V = reference_space()
    K = element_matrices(V, BilinearForm())[0]
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-14)
    M = element_matrices(V, kind="mass")[0]
    assert np.allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-15)


@pytest.mark.parametrize("deg", range(0, 13))
def test_triangle_rule_exactness(deg):
    from math import factorial
    rule = triangle_rule(deg)
    assert np.all(rule.weights > 0)
    assert np.isclose(rule.weights.sum(), 0.5, atol=1e-15)
    for a in range(deg + 1):
        b = deg - a
        exact = factorial(a) * factorial(b) / factorial(a + b + 2)
        approx = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
        assert abs(approx - exact) <= 1e-14


def test_line_rule_exactness():
    for deg in range(10):
        s, w = line_rule(deg)
        assert np.isclose(w @ s ** deg, 1 / (deg + 1), atol=1e-15)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_pure_diffusion_properties(p):
    V = build_space(make_lshape(), p)
    A = assemble_matrix(V, BilinearForm())
    assert np.abs(A @ np.ones(V.ndofs)).max() <= 1e-12
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    K = assemble_h1_seminorm_matrix(V)
    assert abs(A - K).max() == 0.0
    x = interpolate(V, lambda x, y: x)
    assert np.isclose(x @ K @ x, 3.0, rtol=1e-12)
    assert np.linalg.eigvalsh(K.toarray()).min() > -1e-10


@pytest.mark.parametrize("p", [1, 2, 3])
def test_quadrature_degree_independence(p):
    V = build_space(make_structured_square(3), p)
    form = BilinearForm(diffusion=2.5)
    d = max(2 * p - 2, 1)
    A1, A2 = assemble_matrix(V, form, qdeg=d), assemble_matrix(V, form, qdeg=d + 2)
    assert abs(A1 - A2).max() <= 1e-12 * abs(A1).max()


def test_convection_antisymmetry():
    # (beta u, grad v) + (beta v, grad u) = -int div(beta) u v = 0 for interior pairs
    V = build_space(make_structured_square(2), 2)
    C = (assemble_matrix(V, BilinearForm(diffusion=1.0, convection=(1.0, 2.0)))
         - assemble_matrix(V, BilinearForm())).toarray()
    fr = V.free_dofs
    S = C[np.ix_(fr, fr)] + C[np.ix_(fr, fr)].T
    assert np.abs(S).max() <= 1e-13
    assert np.abs(C[np.ix_(fr, fr)]).max() > 0.1


def test_nonpositive_diffusion_rejected():
    V = build_space(make_structured_square(2), 1)
    with pytest.raises(ValueError, match="diffusion"):
        assemble_matrix(V, BilinearForm(diffusion=lambda x, y: x - 0.5))


def test_load_examples():
    m = make_structured_square(3)
    V = build_space(m, 1)
    b = assemble_load(V, 1.0)
    star_area = np.bincount(m.elements.ravel(), weights=np.repeat(m.areas, 3), minlength=m.n_vertices)
    assert np.allclose(b, star_area / 3)
    assert np.isclose(b.sum(), 1.0)
    assert not np.any(assemble_load(V, 0.0))
    assert np.isclose(assemble_load(build_space(m, 3), 1.0).sum(), 1.0)


def test_mass_matrix():
    for p in (1, 2, 3):
        V = build_space(make_lshape(), p)
        M = assemble_mass_matrix(V)
        one = np.ones(V.ndofs)
        assert np.isclose(one @ M @ one, 3.0)
    M = assemble_mass_matrix(build_space(make_structured_square(2), 1)).toarray()
    assert np.linalg.eigvalsh(M).min() > 0


def test_restrict_free_examples():
    V = build_space(make_structured_square(2), 1)
    A = assemble_matrix(V, BilinearForm())
    b = assemble_load(V, 1.0)
    Aff, bf = restrict_free(A, b, V)
    assert Aff.shape == (1, 1)
    V1 = build_space(make_structured_square(1), 1)
    g = interpolate(V1, lambda x, y: x + y)
    Aff, bf = restrict_free(assemble_matrix(V1, BilinearForm()), np.zeros(4), V1, g)
    assert Aff.shape == (0, 0)
    assert np.array_equal(expand_free(V1, np.zeros(0), g), g)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_exact_solution_in_space(p):
    # -Laplace(x^2 + y^2) = -4 and the quadratic lies in V_h for p >= 2; for p = 1 use x + 2y
    u = (lambda x, y: x + 2 * y) if p == 1 else (lambda x, y: x ** 2 + y ** 2)
    f = 0.0 if p == 1 else -4.0
    V = build_space(make_lshape(2), p)
    g = interpolate(V, u)
    Aff, bf = restrict_free(assemble_matrix(V, BilinearForm()), assemble_load(V, f), V, g)
    x, _ = solve_spd(Aff, bf)
    assert np.abs(expand_free(V, x, g) - g).max() <= 1e-10


def test_matrix_market_roundtrip(tmp_path):
    V = build_space(make_structured_square(2), 2)
    A = assemble_matrix(V, BilinearForm(convection=(1.0, 0.5)))
    path = tmp_path / "A.mtx"
    write_matrix_market(path, A, comment="test")
    B = scipy.io.mmread(str(path))
    assert abs(A - B).max() <= 1e-15 * abs(A).max()
