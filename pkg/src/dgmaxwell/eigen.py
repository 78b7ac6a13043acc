"""Cyclic Jacobi eigensolver for dense symmetric matrices."""
from __future__ import annotations

import numba
import numpy as np

JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 60


class EigenError(RuntimeError):
    pass


@numba.njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):
    n = a.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = np.sqrt(scale)
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if np.sqrt(2.0 * off) <= tol * scale:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp = a[r, p]
                    arq = a[r, q]
                    a[r, p] = c * arp - s * arq
                    a[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = a[p, r]
                    aqr = a[q, r]
                    a[p, r] = c * apr - s * aqr
                    a[q, r] = s * apr + c * aqr
                for r in range(n):
                    vrp = v[r, p]
                    vrq = v[r, q]
                    v[r, p] = c * vrp - s * vrq
                    v[r, q] = s * vrp + c * vrq
    return -1


def jacobi_eigh(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Eigenvalues (ascending) and orthonormal eigenvectors of symmetric ``a``."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    sweeps = _jacobi_sweeps(a, v, tol, max_sweeps)
    if sweeps < 0:
        raise EigenError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def generalized_eigh_diag(A, mdiag, tol: float = JACOBI_TOL):
    """Solve A x = lambda diag(mdiag) x by the symmetric reduction M^{-1/2} A M^{-1/2}."""
    mdiag = np.asarray(mdiag, dtype=float)
    if np.any(mdiag <= 0):
        raise ValueError("mass diagonal must be positive")
    s = 1.0 / np.sqrt(mdiag)
    w, y = jacobi_eigh(s[:, None] * A * s[None, :], tol=tol)
    return w, s[:, None] * y
