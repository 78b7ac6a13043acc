"""Dubiner shape functions on the reference triangle and tetrahedron.

The basis is kept unnormalized (exactly the Jacobi-product form) and the
squared L2 norms are stored on the :class:`ReferenceElement`.

Collapsed factors such as ``(1-x)**i * P_i(2y/(1-x) - 1)`` are evaluated as
homogenised polynomials in (2y + x - 1, 1 - x), so the collapsed vertex needs
no special casing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .polys import QuadratureRule, quad_simplex, scaled_jacobi_table


def index_set(dim: int, p: int) -> list[tuple[int, ...]]:
    """Multi-indices of total degree <= p, graded lexicographic."""
    if dim == 2:
        return [(i, d - i) for d in range(p + 1) for i in range(d + 1)]
    if dim == 3:
        return [(i, j, d - i - j)
                for d in range(p + 1) for i in range(d + 1) for j in range(d - i + 1)]
    raise ValueError(f"unsupported dimension {dim}")


def num_modes(dim: int, p: int) -> int:
    if p < 0:
        return 0
    if dim == 2:
        return (p + 1) * (p + 2) // 2
    return (p + 1) * (p + 2) * (p + 3) // 6


def mode_index(dim: int, alpha) -> int:
    """Position of ``alpha`` in :func:`index_set` (any p large enough)."""
    if dim == 2:
        i, j = alpha
        d = i + j
        return d * (d + 1) // 2 + i
    i, j, k = alpha
    d = i + j + k
    # modes of lower degree, then the (i, j) position inside degree d
    return num_modes(3, d - 1) + i * (d + 1) - i * (i - 1) // 2 + j


def eval_shape_2d(i: int, j: int, x, y):
    """phi_{i,j}(x, y) = P_i(2y/(1-x)-1) (1-x)^i P_j^{(2i+1,0)}(2x-1)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = scaled_jacobi_table(i, 0.0, 0.0, 2 * y + x - 1, 1 - x)[i]
    ones = np.ones_like(x)
    r = scaled_jacobi_table(j, 2 * i + 1.0, 0.0, 2 * x - 1, ones)[j]
    return q * r


def eval_shape_3d(i: int, j: int, k: int, x, y, z):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    a = scaled_jacobi_table(i, 0.0, 0.0, 2 * z + x + y - 1, 1 - x - y)[i]
    b = scaled_jacobi_table(j, 2 * i + 1.0, 0.0, 2 * y + x - 1, 1 - x)[j]
    c = scaled_jacobi_table(k, 2 * i + 2 * j + 2.0, 0.0, 2 * x - 1, np.ones_like(x))[k]
    return a * b * c


def shape_grad_2d(i: int, j: int, x, y):
    """(phi, d/dx phi, d/dy phi) for a single index."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Q, Qu, Qv = scaled_jacobi_table(i, 0.0, 0.0, 2 * y + x - 1, 1 - x, grad=True)
    R, Rt, _ = scaled_jacobi_table(j, 2 * i + 1.0, 0.0, 2 * x - 1, np.ones_like(x), grad=True)
    q, qu, qv, r, rt = Q[i], Qu[i], Qv[i], R[j], Rt[j]
    return q * r, (qu - qv) * r + 2.0 * q * rt, 2.0 * qu * r


def shape_grad_3d(i: int, j: int, k: int, x, y, z):
    """(phi, dx, dy, dz) for a single index."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    A, Au, Av = scaled_jacobi_table(i, 0.0, 0.0, 2 * z + x + y - 1, 1 - x - y, grad=True)
    B, Bu, Bv = scaled_jacobi_table(j, 2 * i + 1.0, 0.0, 2 * y + x - 1, 1 - x, grad=True)
    C, Ct, _ = scaled_jacobi_table(k, 2 * i + 2 * j + 2.0, 0.0, 2 * x - 1, np.ones_like(x),
                                   grad=True)
    a, b, c = A[i], B[j], C[k]
    a_x, b_x = Au[i] - Av[i], Bu[j] - Bv[j]
    return (a * b * c,
            a_x * b * c + a * b_x * c + 2.0 * a * b * Ct[k],
            (a_x * b + 2.0 * a * Bu[j]) * c,
            2.0 * Au[i] * b * c)


def shape_table_2d(p: int, x, y, grad: bool = False):
    """All phi_alpha at the given points: array ``(N, *x.shape)``.

    With ``grad=True`` returns ``(values, dx, dy)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u, v, s = 2 * y + x - 1, 1 - x, 2 * x - 1
    ones = np.ones_like(x)
    N = num_modes(2, p)
    vals = np.zeros((N,) + x.shape)
    if grad:
        dx = np.zeros_like(vals)
        dy = np.zeros_like(vals)
        Q, Qu, Qv = scaled_jacobi_table(p, 0.0, 0.0, u, v, grad=True)
    else:
        Q = scaled_jacobi_table(p, 0.0, 0.0, u, v)
    for i in range(p + 1):
        if grad:
            R, Rt, _ = scaled_jacobi_table(p - i, 2 * i + 1.0, 0.0, s, ones, grad=True)
        else:
            R = scaled_jacobi_table(p - i, 2 * i + 1.0, 0.0, s, ones)
        for j in range(p - i + 1):
            m = mode_index(2, (i, j))
            vals[m] = Q[i] * R[j]
            if grad:
                dx[m] = (Qu[i] - Qv[i]) * R[j] + 2.0 * Q[i] * Rt[j]
                dy[m] = 2.0 * Qu[i] * R[j]
    if grad:
        return vals, dx, dy
    return vals


def shape_table_3d(p: int, x, y, z, grad: bool = False):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    u1, v1 = 2 * z + x + y - 1, 1 - x - y
    u2, v2 = 2 * y + x - 1, 1 - x
    s = 2 * x - 1
    ones = np.ones_like(x)
    N = num_modes(3, p)
    vals = np.zeros((N,) + x.shape)
    if grad:
        gx = np.zeros_like(vals)
        gy = np.zeros_like(vals)
        gz = np.zeros_like(vals)
    A, Au, Av = scaled_jacobi_table(p, 0.0, 0.0, u1, v1, grad=True)
    for i in range(p + 1):
        B, Bu, Bv = scaled_jacobi_table(p - i, 2 * i + 1.0, 0.0, u2, v2, grad=True)
        for j in range(p - i + 1):
            C, Ct, _ = scaled_jacobi_table(p - i - j, 2 * i + 2 * j + 2.0, 0.0, s, ones,
                                           grad=True)
            for k in range(p - i - j + 1):
                m = mode_index(3, (i, j, k))
                vals[m] = A[i] * B[j] * C[k]
                if grad:
                    a_x = Au[i] - Av[i]
                    b_x = Bu[j] - Bv[j]
                    gx[m] = (a_x * B[j] * C[k] + A[i] * b_x * C[k]
                             + 2.0 * A[i] * B[j] * Ct[k])
                    gy[m] = (a_x * B[j] + 2.0 * A[i] * Bu[j]) * C[k]
                    gz[m] = 2.0 * Au[i] * B[j] * C[k]
    if grad:
        return vals, gx, gy, gz
    return vals


def shape_table(dim: int, p: int, points, grad: bool = False):
    points = np.asarray(points, dtype=float)
    if dim == 2:
        return shape_table_2d(p, points[..., 0], points[..., 1], grad=grad)
    return shape_table_3d(p, points[..., 0], points[..., 1], points[..., 2], grad=grad)


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Basis metadata for one (dimension, order) pair.

    ``eval_table[q, m]`` is phi_m at quadrature point q and ``norms[m]`` is
    the squared L2 norm of phi_m on the reference simplex.
    """

    dim: int
    order: int
    index_set: list
    quadrature: QuadratureRule
    eval_table: np.ndarray
    norms: np.ndarray
    lookup: dict = field(repr=False, default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.index_set)

    def index(self, alpha) -> int:
        return self.lookup[tuple(alpha)]

    def degrees(self) -> np.ndarray:
        return np.array([sum(a) for a in self.index_set])


@lru_cache(maxsize=None)
def reference_element(dim: int, p: int, quad_order: int | None = None) -> ReferenceElement:
    if p < 0:
        raise ValueError("order must be nonnegative")
    q = max(2 * p + 1, quad_order or 0)
    rule = quad_simplex(dim, q)
    table = shape_table(dim, p, rule.points).T.copy()
    norms = np.einsum("q,qm,qm->m", rule.weights, table, table)
    idx = index_set(dim, p)
    return ReferenceElement(dim, p, idx, rule, table, norms,
                            {a: m for m, a in enumerate(idx)})


@dataclass
class ModalField:
    """Coefficients against the Dubiner basis of ``ref``.

    ``coeffs`` has shape ``(N,)`` for a scalar field and ``(ncomp, N)`` for a
    vector field.
    """

    ref: ReferenceElement
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape[-1] != self.ref.size:
            raise ValueError(
                f"expected {self.ref.size} coefficients per component, got {self.coeffs.shape[-1]}")

    @property
    def ncomp(self) -> int:
        return 1 if self.coeffs.ndim == 1 else self.coeffs.shape[0]

    def __call__(self, point):
        return eval_field(self, point)


def project(values, ref: ReferenceElement) -> ModalField:
    """L2 projection of samples taken at ``ref.quadrature.points``."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != len(ref.quadrature):
        raise ValueError(
            f"got {values.shape[-1]} samples for a {len(ref.quadrature)}-point rule")
    coeffs = (values * ref.quadrature.weights) @ ref.eval_table / ref.norms
    return ModalField(ref, coeffs)


def eval_field(field: ModalField, point):
    """Evaluate at one point (shape ``(dim,)``) or many (shape ``(npts, dim)``)."""
    point = np.asarray(point, dtype=float)
    phi = shape_table(field.ref.dim, field.ref.order, point)
    return np.tensordot(field.coeffs, phi, axes=(-1, 0))
