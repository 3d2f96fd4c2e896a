import math

import numpy as np
import pytest
from scipy import integrate

from pmequiv.errors import DegreeUnavailable
from pmequiv.polyquad import (
    MAX_DEGREE,
    cell_basis,
    cell_mean,
    face_basis,
    face_mean,
    integrate_cell,
    integrate_cell_composite,
    integrate_face,
    monomial_exponents,
    project_cell,
    project_face,
    quad_rule,
)


def dblquad_triangle(f):
    """Integral over the reference triangle with adaptive scipy quadrature."""
    val, _ = integrate.dblquad(lambda y, x: f(x, y), 0, 1, 0, lambda x: 1 - x, epsabs=1e-14, epsrel=1e-14)
    return val


def test_reference_integrals(ref_triangle):
    m = ref_triangle
    assert integrate_cell(m, 0, lambda p: np.ones(len(p))) == pytest.approx(0.5, abs=1e-15)
    assert integrate_cell(m, 0, lambda p: p[:, 0]) == pytest.approx(1 / 6, abs=1e-15)
    val = integrate_cell(m, 0, lambda p: ((p - 1 / 3) ** 2).sum(axis=1))
    assert val == pytest.approx(1 / 18, abs=1e-15)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_rules_exact_on_monomials(dim):
    """Exactness up to MAX_DEGREE: int x^a over the unit simplex = a! / (|a| + dim)!."""
    for n in range(MAX_DEGREE + 1):
        rule = quad_rule(dim, n)
        assert np.all(rule.weights > 0)
        for a in monomial_exponents(dim, n):
            exact = math.prod(math.factorial(k) for k in a) / math.factorial(sum(a) + dim)
            approx = rule.weights @ np.prod(rule.points ** np.array(a), axis=1)
            assert approx == pytest.approx(exact, rel=1e-13, abs=1e-16)


def test_degree_unavailable():
    with pytest.raises(DegreeUnavailable):
        quad_rule(2, MAX_DEGREE + 1)


def test_projection_reproduces_polynomials(mesh4):
    rng = np.random.default_rng(0)
    for K in (0, 7, 31):
        for n in range(3):
            c = rng.standard_normal(cell_basis(mesh4, K, n).dimension)
            f = lambda p, c=c, n=n, K=K: cell_basis(mesh4, K, n).evaluate(p) @ c
            assert np.allclose(project_cell(mesh4, K, f, n), c, atol=1e-13)
        c = project_cell(mesh4, K, lambda p: np.full(len(p), 2.5), 2)
        pts = mesh4.cell_vertices(K)
        assert np.allclose(cell_basis(mesh4, K, 2).evaluate(pts) @ c, 2.5, atol=1e-13)


def test_sinsin_cell_mean_matches_adaptive_oracle(ref_triangle):
    f = lambda x, y: math.sin(math.pi * x) * math.sin(math.pi * y)
    oracle = dblquad_triangle(f) / 0.5
    assert oracle == pytest.approx(4 / math.pi**2, abs=1e-13)  # frozen closed form
    approx = integrate_cell_composite(
        ref_triangle, 0, lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]), levels=3
    ) / 0.5
    assert approx == pytest.approx(oracle, abs=1e-10)
    # plain degree-6 rule is already close on the single cell
    plain = cell_mean(ref_triangle, 0, lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]))
    assert plain == pytest.approx(oracle, abs=1e-4)


def test_face_projection(ref_triangle):
    m = ref_triangle
    F = [f for f in range(m.n_faces) if set(m.faces[f]) == {1, 2}][0]
    assert face_mean(m, F, lambda p: np.full(len(p), 3.0)) == pytest.approx(3.0)
    lin = lambda p: 2 * p[:, 0] - p[:, 1]
    c = project_face(m, F, lin, 1)
    pts = m.face_vertices(F)
    assert np.allclose(face_basis(m, F, 1).evaluate(pts) @ c, lin(pts), atol=1e-13)
    # trace of the weak bubble (b = I): one-dimensional scipy oracle
    psi = lambda p: 0.5 * ((p - 1 / 3) ** 2).sum(axis=1)
    oracle, _ = integrate.quad(lambda t: psi(np.array([[1 - t, t]]))[0], 0, 1, epsabs=1e-15)
    assert face_mean(m, F, psi) == pytest.approx(oracle, abs=1e-14)
    assert integrate_face(m, F, psi) == pytest.approx(oracle * np.sqrt(2), abs=1e-14)
