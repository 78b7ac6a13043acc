from math import factorial

import mpmath
import numpy as np
import pytest
import sympy as sp

from dgmaxwell.polys import (eval_jacobi, eval_legendre, quad_interval, quad_simplex,
                             scaled_jacobi_table)

X = sp.Symbol("x")


def test_legendre_examples():
    assert eval_legendre(0, 0.3) == 1.0
    for x in (-2.0, -0.4, 0.7, 3.0):
        assert eval_legendre(1, x) == pytest.approx(x, abs=1e-15)
    assert eval_legendre(3, 0.5) == pytest.approx(-0.4375, abs=1e-15)


def test_legendre_matches_closed_forms():
    xs = np.linspace(-1, 1, 41)
    for n in range(6):
        exact = sp.lambdify(X, sp.legendre(n, X), "numpy")(xs)
        assert np.max(np.abs(eval_legendre(n, xs) - exact)) <= 1e-13


def test_jacobi_examples():
    assert eval_jacobi(0, 2.5, 0.3, 0.1) == 1.0
    assert eval_jacobi(1, 2, 0, 0) == pytest.approx(1.0, abs=1e-15)
    assert eval_jacobi(4, 3, 0, -1) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (3, 0), (2.5, 1.5), (5, 0)])
def test_jacobi_against_sympy(a, b):
    xs = np.linspace(-1, 1, 17)
    for n in range(8):
        exact = np.array([float(sp.jacobi(n, a, b, sp.Float(x, 30))) for x in xs])
        assert np.allclose(eval_jacobi(n, a, b, xs), exact, rtol=1e-13, atol=1e-13)


def test_jacobi_legendre_consistency():
    xs = np.linspace(-1.2, 1.2, 31)
    for n in range(12):
        assert np.max(np.abs(eval_jacobi(n, 0, 0, xs) - eval_legendre(n, xs))) <= 1e-14


def test_endpoint_sign_pattern():
    for n in range(10):
        assert eval_jacobi(n, 7.0, 0.0, -1.0) == pytest.approx((-1.0) ** n, abs=1e-12)


def test_scaled_table_is_homogenised():
    u = np.array([0.3, -0.2, 0.5])
    v = np.array([0.7, 0.4, 1.3])
    q = scaled_jacobi_table(6, 3.0, 0.0, u, v)
    for m in range(7):
        assert np.allclose(q[m], v ** m * eval_jacobi(m, 3.0, 0.0, u / v), rtol=1e-13)
    q0 = scaled_jacobi_table(4, 0.0, 0.0, np.array([0.0]), np.array([0.0]))
    assert np.all(q0[1:] == 0.0)


def test_scaled_table_gradient_matches_finite_differences():
    u, v, h = 0.31, 0.62, 1e-6
    q, qu, qv = scaled_jacobi_table(7, 1.0, 0.0, u, v, grad=True)
    fu = (scaled_jacobi_table(7, 1.0, 0.0, u + h, v) - scaled_jacobi_table(7, 1.0, 0.0, u - h, v)) / (2 * h)
    fv = (scaled_jacobi_table(7, 1.0, 0.0, u, v + h) - scaled_jacobi_table(7, 1.0, 0.0, u, v - h)) / (2 * h)
    assert np.allclose(qu, fu, atol=1e-7)
    assert np.allclose(qv, fv, atol=1e-7)


def test_quad_interval_examples():
    r = quad_interval(1)
    assert r.points[0, 0] == pytest.approx(0.0, abs=1e-16)
    assert r.weights[0] == pytest.approx(2.0)
    r = quad_interval(2)
    assert np.allclose(np.sort(r.points[:, 0]), [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    assert np.allclose(r.weights, [1, 1], atol=1e-15)
    assert quad_interval(3, 1, 0).weights.sum() == pytest.approx(2.0, abs=1e-13)


def test_quad_interval_matches_numpy_gauss_legendre():
    for n in (3, 8, 20, 40, 64):
        x, w = np.polynomial.legendre.leggauss(n)
        r = quad_interval(n)
        assert np.allclose(r.points[:, 0], x, atol=1e-14)
        assert np.allclose(r.weights, w, atol=1e-14)


def _weighted_moment(a, b, deg):
    # x^d = sum_r C(d,r) (1+x)^r (-1)^(d-r); each term is a Beta integral
    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for r in range(deg + 1):
            total += (mpmath.binomial(deg, r) * (-1) ** (deg - r) * mpmath.mpf(2) ** (a + b + r + 1)
                      * mpmath.beta(a + 1, b + r + 1))
        return float(total)


@pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (2, 0), (2.5, 0.5)])
def test_gauss_jacobi_exactness(a, b):
    for n in (1, 2, 5, 11):
        r = quad_interval(n, a, b)
        assert np.all(r.weights > 0)
        for deg in (2 * n - 1, 2 * n - 2):
            exact = _weighted_moment(a, b, deg)
            got = r.integrate(r.points[:, 0] ** deg)
            assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


def test_newton_cap_raises(monkeypatch):
    import dgmaxwell.polys as polys

    monkeypatch.setattr(polys, "NEWTON_MAXITER", 1)
    with pytest.raises(RuntimeError):
        polys.quad_interval(9, 0.0, 0.0)


def test_quad_interval_rejects_zero_points():
    with pytest.raises(ValueError):
        quad_interval(0)


def test_simplex_measures():
    for q in (1, 4, 9):
        assert quad_simplex(2, q).weights.sum() == pytest.approx(0.5, abs=1e-13)
        assert quad_simplex(3, q).weights.sum() == pytest.approx(1 / 6, abs=1e-13)


def test_triangle_monomials():
    r = quad_simplex(2, 4)
    x, y = r.points.T
    assert r.integrate(x ** 2 * y ** 2) == pytest.approx(1 / 180, rel=1e-12)
    for q in (3, 6, 10):
        r = quad_simplex(2, q)
        x, y = r.points.T
        for m in range(q + 1):
            for n in range(q + 1 - m):
                exact = factorial(m) * factorial(n) / factorial(m + n + 2)
                assert r.integrate(x ** m * y ** n) == pytest.approx(exact, rel=1e-12)


def test_tetrahedron_monomials():
    r = quad_simplex(3, 5)
    x, y, z = r.points.T
    for m in range(6):
        for n in range(6 - m):
            for l in range(6 - m - n):
                exact = factorial(m) * factorial(n) * factorial(l) / factorial(m + n + l + 3)
                assert r.integrate(x ** m * y ** n * z ** l) == pytest.approx(exact, rel=1e-12)


def test_simplex_points_inside():
    for dim in (2, 3):
        pts = quad_simplex(dim, 7).points
        assert np.all(pts > 0) and np.all(pts.sum(axis=1) < 1)
