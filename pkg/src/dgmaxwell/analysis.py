"""Energy monitoring, resonance spectra, spurious-mode scans, p-convergence
and the sweep-vs-dense scaling benchmark."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numba
import numpy as np

from .basis import num_modes, project, reference_element, shape_table_2d
from .dg import (SemiDiscreteSystem, apply_inverse_mass_variable, assemble_dense,
                 make_system, stiffness_frequency_domain, variable_mass_dense)
from .eigen import EigenError, generalized_eigh_diag
from .kernels import dense_derivative_matrix, sweep_plan
from .mesh import Mesh2D
from .polys import quad_simplex
from .timestep import State, energy

ZERO_THRESHOLD = 1e-8
EIG_RESIDUAL_TOL = 1e-9


def total_energy(system: SemiDiscreteSystem, state: State) -> float:
    return energy(system, state)


def cavity_frequencies(count: int, size: float = 1.0) -> np.ndarray:
    """Lowest TM frequencies pi*sqrt(m^2+n^2)/size of a PEC square, with multiplicity."""
    r = int(np.ceil(np.sqrt(count))) + 2
    vals = sorted(np.pi / size * np.sqrt(m * m + n * n)
                  for m in range(1, r + 1) for n in range(1, r + 1))
    return np.array(vals[:count])


def project_mode(system: SemiDiscreteSystem, m: int, n: int, size: float = 1.0) -> State:
    """E_z = sin(m pi x) sin(n pi y) projected elementwise, H = H^F = 0."""
    ref = system.ref_E
    E = np.empty((system.mesh.nelem, ref.size))
    for e in range(system.mesh.nelem):
        xy = system.mesh.to_physical(e, ref.quadrature.points)
        vals = np.sin(m * np.pi * xy[:, 0] / size) * np.sin(n * np.pi * xy[:, 1] / size)
        E[e] = project(vals, ref).coeffs
    zero = State.zeros(system)
    return State(0.0, E.ravel(), zero.H, zero.HF)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    threshold: float
    kernel_dim: int
    max_residual: float

    @property
    def nonzero(self) -> np.ndarray:
        return self.eigenvalues[self.eigenvalues > self.threshold]

    def omegas(self, m: int) -> np.ndarray:
        return np.sqrt(self.nonzero[:m])


def frequency_spectrum(system: SemiDiscreteSystem, zero_threshold: float = ZERO_THRESHOLD,
                       check: bool = True) -> Spectrum:
    """All eigenvalues of A e = omega^2 M_eps e with the residual self-check."""
    M, K = assemble_dense(system)
    A = stiffness_frequency_domain(system, K, M)
    mdiag = system.mass_E().ravel()
    w, X = generalized_eigh_diag(A, mdiag)
    thr = zero_threshold * max(abs(w).max(), np.finfo(float).tiny)
    res = np.linalg.norm(A @ X - (X * w) * mdiag[:, None], axis=0)
    rel = res / (np.linalg.norm(A, 2) * np.linalg.norm(X, axis=0))
    worst = float(rel.max()) if len(rel) else 0.0
    if check and worst > EIG_RESIDUAL_TOL:
        raise EigenError(f"eigenpair residual {worst:.2e} exceeds {EIG_RESIDUAL_TOL}")
    return Spectrum(w, thr, int(np.sum(w <= thr)), worst)


def resonance_spectrum(system: SemiDiscreteSystem, m: int) -> np.ndarray:
    """Lowest m nonzero omega, ascending."""
    if system.alpha <= 0:
        raise ValueError("resonance computation needs alpha > 0")
    return frequency_spectrum(system).omegas(m)


@dataclass
class SpuriousRow:
    alpha: float
    kernel_dim: int
    near_kernel_count: int
    band_count: int
    lowest_nonzero: float


def spurious_mode_scan(system_factory: Callable[[float], SemiDiscreteSystem], alphas,
                       band_upper: float | None = None) -> list[SpuriousRow]:
    """Kernel size and low-band eigenvalue counts for each stabilization alpha.

    ``near_kernel_count`` counts eigenvalues at or below the zero threshold;
    ``band_count`` counts eigenvalues in (threshold, band_upper).
    """
    rows = []
    for alpha in alphas:
        spec = frequency_spectrum(system_factory(alpha))
        nz = spec.nonzero
        band = int(np.sum(nz < band_upper)) if band_upper is not None else 0
        rows.append(SpuriousRow(float(alpha), spec.kernel_dim, spec.kernel_dim, band,
                                float(nz[0]) if len(nz) else float("nan")))
    return rows


@dataclass
class ConvergenceRecord:
    p: int
    errors: np.ndarray
    dof: int
    wall_time: float
    omegas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exact: np.ndarray = field(default_factory=lambda: np.zeros(0))


def p_convergence_study(mesh: Mesh2D, p_values, m: int = 4, size: float = 1.0,
                        alpha=None) -> list[ConvergenceRecord]:
    """Resonance errors for each E degree p = k+1 against the analytic cavity values."""
    exact = cavity_frequencies(m, size)
    out = []
    for p in p_values:
        if p < 1:
            raise ValueError("E degree must be at least 1")
        t0 = time.perf_counter()
        system = make_system(mesh, p - 1, alpha=alpha)
        om = resonance_spectrum(system, m)
        wall = time.perf_counter() - t0
        got = np.full(m, np.nan)
        got[:len(om)] = om
        out.append(ConvergenceRecord(p, np.abs(got - exact) / exact, system.sizes[0], wall,
                                     got, exact))
    return out


def inverse_mass_error(mesh: Mesh2D, p: int, eps_func: Callable, f: Callable) -> float:
    """Relative energy-norm gap between the approximate and exact eps-mass inverses.

    The right side is the load vector of ``f`` on every element.
    """
    system = make_system(mesh, max(p - 1, 0))
    rule = quad_simplex(2, 2 * p + 20)
    phi = shape_table_2d(p, rule.points[:, 0], rule.points[:, 1])
    r = []
    for e in range(mesh.nelem):
        xy = mesh.to_physical(e, rule.points)
        r.append(phi @ (rule.weights * mesh.detF[e] * f(xy[:, 0], xy[:, 1])))
    r = np.concatenate(r)
    M = variable_mass_dense(system, eps_func, p)
    exact = np.linalg.solve(M, r)
    approx = apply_inverse_mass_variable(system, eps_func, r, p)
    d = approx - exact
    return float(np.sqrt(d @ M @ d / (exact @ M @ exact)))


# ---------------------------------------------------------------------------
# benchmark

@numba.njit(cache=True)
def _dense_batch(mat, X, Y):
    for e in range(X.shape[0]):
        for r in range(mat.shape[0]):
            acc = 0.0
            for c in range(mat.shape[1]):
                acc += mat[r, c] * X[e, c]
            Y[e, r] = acc


@dataclass
class TimingRow:
    p: int
    N: int
    t_sweep_ns: float
    t_dense_ns: float
    ops: int


def _median_ns(func, reps: int) -> float:
    func()  # warm-up
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        func()
        samples.append(time.perf_counter_ns() - t0)
    return float(np.median(samples))


def scaling_benchmark(p_values, repetitions: int = 11, batch: int = 64, seed: int = 0,
                      direction: str = "x") -> list[TimingRow]:
    """Median per-element time of the x-derivative: sweep program vs stored dense matrix.

    Both kernels are compiled loops run single-threaded over the same batch
    of random elements, so per-call dispatch is amortized.
    """
    if repetitions < 11:
        raise ValueError("use at least 11 repetitions")
    rng = np.random.default_rng(seed)
    rows = []
    for p in p_values:
        plan = sweep_plan(p, direction)
        D = np.ascontiguousarray(dense_derivative_matrix(p, direction))
        X = rng.standard_normal((batch, num_modes(2, p)))
        Y = np.empty((batch, D.shape[0]))
        prog = plan.program
        t_sweep = _median_ns(lambda: prog(X, parallel=False), repetitions)
        t_dense = _median_ns(lambda: _dense_batch(D, X, Y), repetitions)
        rows.append(TimingRow(p, num_modes(2, p), t_sweep / batch, t_dense / batch,
                              plan.op_count))
    return rows


def loglog_slope(N, t) -> float:
    return float(np.polyfit(np.log(np.asarray(N, float)), np.log(np.asarray(t, float)), 1)[0])


# ---------------------------------------------------------------------------
# CSV

def _write(path, header, rows, comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_energy_csv(path, history, comments=()):
    _write(path, ["step", "t", "energy"],
           [(n, repr(float(t)), repr(float(e))) for n, t, e in history], comments)


def write_convergence_csv(path, records: list[ConvergenceRecord], comments=()):
    rows = []
    for r in records:
        for i in range(len(r.errors)):
            rows.append((r.p, r.dof, i, repr(float(r.omegas[i])), repr(float(r.exact[i])),
                         repr(float(r.errors[i]))))
    _write(path, ["p", "dof", "mode_index", "omega_computed", "omega_exact", "rel_error"],
           rows, comments)


def write_scaling_csv(path, rows: list[TimingRow], comments=()):
    _write(path, ["p", "N", "t_sweep_ns", "t_dense_ns"],
           [(r.p, r.N, f"{r.t_sweep_ns:.1f}", f"{r.t_dense_ns:.1f}") for r in rows], comments)


def write_spurious_csv(path, rows: list[SpuriousRow], comments=()):
    _write(path, ["alpha", "near_kernel_count"],
           [(repr(r.alpha), r.near_kernel_count) for r in rows], comments)
