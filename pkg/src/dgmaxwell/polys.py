"""Legendre/Jacobi polynomial evaluation and Gauss-type quadrature rules.

Everything here works on plain numpy arrays. Polynomial evaluators accept
arguments outside [-1, 1] without clamping, since collapsed-coordinate maps
hit the ends of the interval exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, exp, lgamma, log, pi

import numpy as np

NEWTON_TOL = 1e-15
NEWTON_MAXITER = 100


@dataclass(frozen=True)
class QuadratureRule:
    """Points (shape ``(npts, dim)``) and positive weights on a reference domain."""

    points: np.ndarray
    weights: np.ndarray
    order: int = -1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _asarray(x):
    return np.asarray(x, dtype=float)


def eval_legendre(n: int, x):
    """P_n(x) by the upward three-term recurrence."""
    return eval_jacobi(n, 0.0, 0.0, x)


def eval_jacobi(n: int, a: float, b: float, x):
    """P_n^{(a,b)}(x) by the standard three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = _asarray(x)
    return scaled_jacobi_table(n, a, b, x, np.ones_like(x))[n]


def jacobi_table(n: int, a: float, b: float, x):
    """Rows P_0^{(a,b)}(x), ..., P_n^{(a,b)}(x)."""
    x = _asarray(x)
    return scaled_jacobi_table(n, a, b, x, np.ones_like(x))


def legendre_table(n: int, x):
    return jacobi_table(n, 0.0, 0.0, x)


def _jacobi_coeffs(m: int, a: float, b: float):
    # P_m = ((c1 * t + c2) P_{m-1} - c3 P_{m-2}) / c0 for m >= 2
    s = 2 * m + a + b
    c0 = 2 * m * (m + a + b) * (s - 2)
    c1 = (s - 1) * s * (s - 2)
    c2 = (s - 1) * (a * a - b * b)
    c3 = 2 * (m + a - 1) * (m + b - 1) * s
    return c0, c1, c2, c3


def scaled_jacobi_table(n: int, a: float, b: float, u, v, grad: bool = False):
    """Homogenised Jacobi polynomials ``v**m * P_m^{(a,b)}(u / v)``, m = 0..n.

    The recurrence is run on the pair (u, v) directly, so ``v == 0`` is not a
    singularity. With ``grad=True`` also returns the partial derivatives with
    respect to u and v (forward-mode through the same recurrence).
    """
    u = _asarray(u)
    v = _asarray(v)
    shape = np.broadcast(u, v).shape
    u = np.broadcast_to(u, shape)
    v = np.broadcast_to(v, shape)
    q = np.zeros((n + 1,) + shape)
    q[0] = 1.0
    if grad:
        qu = np.zeros_like(q)
        qv = np.zeros_like(q)
    if n >= 1:
        q[1] = 0.5 * ((a + b + 2) * u + (a - b) * v)
        if grad:
            qu[1] = 0.5 * (a + b + 2)
            qv[1] = 0.5 * (a - b)
    for m in range(2, n + 1):
        c0, c1, c2, c3 = _jacobi_coeffs(m, a, b)
        lin = c1 * u + c2 * v
        q[m] = (lin * q[m - 1] - c3 * v * v * q[m - 2]) / c0
        if grad:
            qu[m] = (c1 * q[m - 1] + lin * qu[m - 1] - c3 * v * v * qu[m - 2]) / c0
            qv[m] = (c2 * q[m - 1] + lin * qv[m - 1]
                     - c3 * (2 * v * q[m - 2] + v * v * qv[m - 2])) / c0
    if grad:
        return q, qu, qv
    return q


def eval_jacobi_deriv(n: int, a: float, b: float, x):
    """d/dx P_n^{(a,b)}(x) = (n+a+b+1)/2 * P_{n-1}^{(a+1,b+1)}(x)."""
    if n == 0:
        return np.zeros_like(_asarray(x))
    return 0.5 * (n + a + b + 1) * eval_jacobi(n - 1, a + 1, b + 1, x)


def quad_interval(n: int, a: float = 0.0, b: float = 0.0) -> QuadratureRule:
    """n-point Gauss rule for the weight (1-x)^a (1+x)^b on [-1, 1].

    Nodes come from Newton's method with polynomial deflation, started from
    Chebyshev points; weights from the closed-form Christoffel numbers.
    """
    if n < 1:
        raise ValueError("need at least one quadrature point")
    roots = np.zeros(n)
    for k in range(n):
        r = -cos((2 * k + 1) * pi / (2 * n))
        if k > 0:
            r = 0.5 * (r + roots[k - 1])
        for _ in range(NEWTON_MAXITER):
            p = float(eval_jacobi(n, a, b, r))
            dp = float(eval_jacobi_deriv(n, a, b, r))
            defl = np.sum(1.0 / (r - roots[:k])) if k else 0.0
            delta = -p / (dp - p * defl)
            r += delta
            if abs(delta) <= NEWTON_TOL:
                break
        else:
            raise RuntimeError(
                f"Gauss-Jacobi node search did not converge (n={n}, a={a}, b={b}, k={k})")
        roots[k] = r
    dp = eval_jacobi_deriv(n, a, b, roots)
    logc = ((a + b + 1) * log(2.0) + lgamma(n + a + 1) + lgamma(n + b + 1)
            - lgamma(n + a + b + 1) - lgamma(n + 1))
    weights = exp(logc) / ((1.0 - roots ** 2) * dp ** 2)
    return QuadratureRule(roots[:, None], weights, order=2 * n - 1)


def quad_simplex(dim: int, q: int) -> QuadratureRule:
    """Collapsed-coordinate rule exact for total degree <= q.

    Reference triangle has vertices (0,0), (1,0), (0,1); the tetrahedron adds
    (0,0,1). The collapse is x = (1+r)/2, y = (1-x)(1+s)/2, z = (1-x-y)(1+t)/2,
    and the Jacobian factors are absorbed into Gauss-Jacobi weights.
    """
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    n = q // 2 + 1
    if dim == 2:
        r = quad_interval(n, 1.0, 0.0)
        s = quad_interval(n, 0.0, 0.0)
        R, S = np.meshgrid(r.points[:, 0], s.points[:, 0], indexing="ij")
        W = np.outer(r.weights, s.weights) / 8.0
        x = 0.5 * (1 + R)
        y = (1 - x) * 0.5 * (1 + S)
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        return QuadratureRule(pts, W.ravel(), order=q)
    if dim == 3:
        r = quad_interval(n, 2.0, 0.0)
        s = quad_interval(n, 1.0, 0.0)
        t = quad_interval(n, 0.0, 0.0)
        R, S, T = np.meshgrid(r.points[:, 0], s.points[:, 0], t.points[:, 0], indexing="ij")
        W = (r.weights[:, None, None] * s.weights[None, :, None]
             * t.weights[None, None, :]) / 64.0
        x = 0.5 * (1 + R)
        y = (1 - x) * 0.5 * (1 + S)
        z = (1 - x - y) * 0.5 * (1 + T)
        pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        return QuadratureRule(pts, W.ravel(), order=q)
    raise ValueError(f"unsupported simplex dimension {dim}")
