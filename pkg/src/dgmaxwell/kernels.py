"""Recurrence-based modal derivative and trace kernels.

Every kernel is compiled once per order into a straight-line program: a
list of ``state[dst] += coef * state[src]`` updates on a flat work vector
laid out as ``[input | scratch | output]``. Executing the program costs
exactly one multiply-add per op, so ``op_count`` is the arithmetic cost.
The program runs under numba over a batch of elements.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .basis import (ModalField, index_set, mode_index, num_modes, reference_element,
                    shape_table_2d, shape_table_3d)
from .relations import (OreRelation, dubiner_x_relation, dubiner_y_relation,
                        x_column_relation, x_edge_link_relation, y_column_relation)


# ---------------------------------------------------------------------------
# executors

@numba.njit(cache=True)
def _run_serial(src, dst, coef, nin, nstate, out_lo, out_hi, inp, out):
    state = np.zeros(nstate)
    for e in range(inp.shape[0]):
        state[:] = 0.0
        state[:nin] = inp[e]
        for o in range(src.shape[0]):
            state[dst[o]] += coef[o] * state[src[o]]
        out[e] = state[out_lo:out_hi]


@numba.njit(cache=True, parallel=True)
def _run_parallel(src, dst, coef, nin, nstate, out_lo, out_hi, inp, out):
    for e in numba.prange(inp.shape[0]):
        state = np.zeros(nstate)
        state[:nin] = inp[e]
        for o in range(src.shape[0]):
            state[dst[o]] += coef[o] * state[src[o]]
        out[e] = state[out_lo:out_hi]


@numba.njit(cache=True)
def _run_transpose(src, dst, coef, nin, nstate, out_lo, out_hi, inp, out):
    # adjoint sweep: replay the ops backwards with src and dst exchanged
    state = np.zeros(nstate)
    for e in range(inp.shape[0]):
        state[:] = 0.0
        state[out_lo:out_hi] = inp[e]
        for o in range(src.shape[0] - 1, -1, -1):
            state[src[o]] += coef[o] * state[dst[o]]
        out[e] = state[:nin]


@numba.njit(cache=True)
def dense_matvec(mat, x, y):
    """Plain double loop ``y = mat @ x``; the O(N^2) reference in benchmarks."""
    for r in range(mat.shape[0]):
        acc = 0.0
        for c in range(mat.shape[1]):
            acc += mat[r, c] * x[c]
        y[r] = acc


PARALLEL_MIN_BATCH = 64


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Straight-line program ``state[dst] += coef * state[src]``."""

    nin: int
    nout: int
    nstate: int
    src: np.ndarray
    dst: np.ndarray
    coef: np.ndarray

    @property
    def op_count(self) -> int:
        return len(self.src)

    def __call__(self, inp, parallel: bool | None = None) -> np.ndarray:
        """Apply to ``inp`` of shape ``(nin,)`` or ``(batch, nin)``."""
        inp = np.asarray(inp, dtype=float)
        single = inp.ndim == 1
        batch = np.ascontiguousarray(inp.reshape(-1, self.nin))
        out = np.empty((batch.shape[0], self.nout))
        if parallel is None:
            parallel = batch.shape[0] >= PARALLEL_MIN_BATCH
        run = _run_parallel if parallel else _run_serial
        run(self.src, self.dst, self.coef, self.nin, self.nstate,
            self.nstate - self.nout, self.nstate, batch, out)
        return out[0] if single else out

    def transpose(self, inp) -> np.ndarray:
        """Apply the adjoint program to ``inp`` of shape ``(nout,)`` or ``(batch, nout)``."""
        inp = np.asarray(inp, dtype=float)
        single = inp.ndim == 1
        batch = np.ascontiguousarray(inp.reshape(-1, self.nout))
        out = np.empty((batch.shape[0], self.nin))
        _run_transpose(self.src, self.dst, self.coef, self.nin, self.nstate,
                       self.nstate - self.nout, self.nstate, batch, out)
        return out[0] if single else out

    def dense(self) -> np.ndarray:
        """Matrix of the program, by running it on unit vectors."""
        return self(np.eye(self.nin), parallel=False).T


class _ProgramBuilder:
    def __init__(self, nin: int):
        self.nin = nin
        self.nscratch = 0
        self.ops: list = []

    def scratch(self) -> int:
        self.nscratch += 1
        return -self.nscratch  # resolved once the scratch size is known

    def add(self, src: int, dst, c: float):
        if c != 0.0:
            self.ops.append((src, dst, float(c)))

    def finish(self, nout: int) -> LinearProgram:
        base_out = self.nin + self.nscratch

        def resolve(slot):
            if isinstance(slot, tuple):  # ("out", k)
                return base_out + slot[1]
            if slot < 0:
                return self.nin + (-slot - 1)
            return slot

        src = np.array([resolve(s) for s, _, _ in self.ops], dtype=np.int64)
        dst = np.array([resolve(d) for _, d, _ in self.ops], dtype=np.int64)
        coef = np.array([c for _, _, c in self.ops], dtype=float)
        return LinearProgram(self.nin, nout, base_out + nout, src, dst, coef)


# ---------------------------------------------------------------------------
# 1D

def deriv_sweep_1d(v) -> np.ndarray:
    """Legendre coefficients of the derivative of ``sum v_i P_i``.

    Uses P'_n = (2n-1) P_{n-1} + P'_{n-2}, eliminating from the top down.
    """
    v = np.array(v, dtype=float)
    n = len(v) - 1
    if n <= 0:
        return np.zeros(0)
    w = np.zeros(n)
    for m in range(n, 0, -1):
        w[m - 1] += (2 * m - 1) * v[m]
        if m >= 2:
            v[m - 2] += v[m]
    return w


# ---------------------------------------------------------------------------
# 2D derivative sweeps

@dataclass(frozen=True, eq=False)
class SweepPlan:
    """Elimination order for one direction and order p.

    ``sequence`` holds ``(target, relation name, base, pivot)`` in execution
    order; ``program`` is the compiled straight-line form.
    """

    order: int
    direction: str
    sequence: tuple
    program: LinearProgram

    @property
    def op_count(self) -> int:
        return self.program.op_count

    def apply(self, coeffs, parallel: bool | None = None) -> np.ndarray:
        return self.program(coeffs, parallel=parallel)


def _x_schedule(p: int):
    rx, link, col = dubiner_x_relation(), x_edge_link_relation(), x_column_relation()
    for d in range(p, 0, -1):
        yield (d, 0), link, (d - 1, 0)
        for a in range(d - 1, 0, -1):
            yield (a, d - a), rx, (a - 1, d - a - 2)
        yield (0, d), col, (0, d - 2)


def _y_schedule(p: int):
    ry, col = dubiner_y_relation(), y_column_relation()
    for d in range(p, 0, -1):
        for a in range(d, 1, -1):
            yield (a, d - a), ry, (a - 2, d - a - 2)
        yield (1, d - 1), col, (1, d - 3)
        # phi_{0,d} is independent of y: no contribution


def _compile_sweep(p: int, direction: str) -> SweepPlan:
    axis = 0 if direction == "x" else 1
    n_in = num_modes(2, p)
    n_out = num_modes(2, p - 1)
    builder = _ProgramBuilder(n_in)
    schedule = _x_schedule(p) if direction == "x" else _y_schedule(p)
    done: set = set()
    sequence = []
    for target, rel, base in schedule:
        inst = rel.instance(base)
        pivot = [c for idx, d, c in inst if idx == target and d[axis] == 1]
        if len(pivot) != 1 or pivot[0] == 0.0:
            raise ValueError(f"{rel.name}: vanishing pivot for target {target} at base {base}")
        cp = pivot[0]
        t_slot = mode_index(2, target)
        for idx, d, c in inst:
            if idx == target and d[axis] == 1:
                continue
            if min(idx) < 0:
                raise ValueError(f"{rel.name}: index {idx} outside the family at base {base}")
            if d[axis] == 1:
                if idx in done:
                    raise ValueError(f"{rel.name}: {idx} already eliminated before {target}")
                if sum(idx) == 0 or (direction == "y" and idx[0] == 0):
                    continue  # derivative vanishes identically
                builder.add(t_slot, mode_index(2, idx), -c / cp)
            else:
                builder.add(t_slot, ("out", mode_index(2, idx)), -c / cp)
        done.add(target)
        sequence.append((target, rel.name, base, cp))
    expected = {a for a in index_set(2, p) if sum(a) >= 1}
    if direction == "y":
        expected = {a for a in expected if a[0] >= 1}
    if {s[0] for s in sequence} != expected:
        raise ValueError("sweep schedule does not cover every target exactly once")
    return SweepPlan(p, direction, tuple(sequence), builder.finish(n_out))


@lru_cache(maxsize=None)
def sweep_plan(p: int, direction: str) -> SweepPlan:
    if direction not in ("x", "y"):
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    if p < 0:
        raise ValueError("order must be nonnegative")
    return _compile_sweep(p, direction)


def _lower_ref(p: int):
    return reference_element(2, max(p - 1, 0))


def deriv_sweep_2d(v: ModalField, direction: str) -> ModalField:
    """Exact modal derivative of a triangle field, degree p -> p-1."""
    p = v.ref.order
    out_ref = _lower_ref(p)
    if p == 0:
        return ModalField(out_ref, np.zeros_like(v.coeffs))
    return ModalField(out_ref, sweep_plan(p, direction).apply(v.coeffs))


def operation_count(p: int, direction: str = "x") -> int:
    return sweep_plan(p, direction).op_count


# ---------------------------------------------------------------------------
# traces

def _jacobi_shift_ops(builder, slots, a: float):
    """Rewrite coefficients on P^{(a+1,0)} into coefficients on P^{(a,0)}.

    Top-down with P_n^{(a+1,0)} = ((2n+a+1) P_n^{(a,0)} + n P_{n-1}^{(a+1,0)}) / (n+a+1).
    """
    out = [builder.scratch() for _ in slots]
    for m in range(len(slots) - 1, -1, -1):
        builder.add(slots[m], out[m], (2 * m + a + 1) / (m + a + 1))
        if m >= 1:
            builder.add(slots[m], slots[m - 1], m / (m + a + 1))
    return out


def _times_w_ops(builder, slots, i: int):
    """Multiply by w = (1-t)/2 while lowering P^{(2i+1,0)} to P^{(2i,0)}.

    w P_m^{(2i+1,0)} = ((m+2i+1) P_m^{(2i,0)} - (m+1) P_{m+1}^{(2i,0)}) / (2m+2i+2).
    """
    out = [builder.scratch() for _ in range(len(slots) + 1)]
    for m, s in enumerate(slots):
        builder.add(s, out[m], (m + 2 * i + 1) / (2 * m + 2 * i + 2))
        builder.add(s, out[m + 1], -(m + 1) / (2 * m + 2 * i + 2))
    return out


def _trace_ops(builder, p: int, edge: int, out_offset: int):
    if edge == 2:
        for i in range(p + 1):
            for j in range(p - i + 1):
                builder.add(mode_index(2, (i, j)), ("out", out_offset + i), (-1.0) ** j)
        return
    # g(t) = sum_i w^i sum_j s_i a_ij P_j^{(2i+1,0)}(t), nested from i = p down
    acc: list = []
    for i in range(p, -1, -1):
        sign = (-1.0) ** i if edge == 0 else 1.0
        if acc:
            acc = _times_w_ops(builder, acc, i + 1)  # now on P^{(2i+2,0)}
            acc = _jacobi_shift_ops(builder, acc, 2 * i + 1)  # P^{(2i+1,0)}
        else:
            acc = [builder.scratch() for _ in range(p - i + 1)]
        for j in range(p - i + 1):
            builder.add(mode_index(2, (i, j)), acc[j], sign)
    legendre = _jacobi_shift_ops(builder, acc, 0)
    for m, s in enumerate(legendre):
        c = (-1.0) ** m if edge == 1 else 1.0
        builder.add(s, ("out", out_offset + m), c)


@lru_cache(maxsize=None)
def trace_program(p: int, edges: tuple = (0, 1, 2)) -> LinearProgram:
    """Legendre edge coefficients for the listed edges, concatenated."""
    builder = _ProgramBuilder(num_modes(2, p))
    for pos, edge in enumerate(edges):
        if edge not in (0, 1, 2):
            raise ValueError(f"edge must be 0, 1 or 2, got {edge}")
        _trace_ops(builder, p, edge, pos * (p + 1))
    return builder.finish(len(edges) * (p + 1))


# local edge e runs between these reference vertices, ascending local numbering
EDGE_VERTICES = ((0, 1), (1, 2), (0, 2))
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def edge_points(edge: int, t) -> np.ndarray:
    """Reference points at edge parameter t in [-1, 1]."""
    a, b = EDGE_VERTICES[edge]
    t = np.asarray(t, dtype=float)[..., None]
    return 0.5 * (1 - t) * REF_VERTICES[a] + 0.5 * (1 + t) * REF_VERTICES[b]


def trace_edge(v: ModalField, edge: int) -> np.ndarray:
    """Legendre coefficients (degree p) of ``v`` restricted to a reference edge."""
    return trace_program(v.ref.order, (edge,))(v.coeffs)


# ---------------------------------------------------------------------------
# dense oracles

@lru_cache(maxsize=None)
def dense_derivative_matrix(p: int, direction: str) -> np.ndarray:
    """Projection of d/dx (d/dy) of each phi_alpha onto degree p-1 by quadrature."""
    if p == 0:
        return np.zeros((1, 1))
    ref = reference_element(2, p)
    pts = ref.quadrature.points
    _, dx, dy = shape_table_2d(p, pts[:, 0], pts[:, 1], grad=True)
    deriv = dx if direction == "x" else dy
    low = reference_element(2, p - 1)
    test = shape_table_2d(p - 1, pts[:, 0], pts[:, 1])
    return (test * ref.quadrature.weights) @ deriv.T / low.norms[:, None]


def deriv_project_3d(v: ModalField, direction: str) -> ModalField:
    """Directional derivative of a tetrahedral field by dense quadrature projection."""
    axis = "xyz".index(direction)
    p = v.ref.order
    ref = reference_element(3, p)
    low = reference_element(3, max(p - 1, 0))
    pts = ref.quadrature.points
    grads = shape_table_3d(p, pts[:, 0], pts[:, 1], pts[:, 2], grad=True)[1 + axis]
    values = np.tensordot(v.coeffs, grads, axes=(-1, 0))
    test = shape_table_3d(low.order, pts[:, 0], pts[:, 1], pts[:, 2])
    coeffs = (values * ref.quadrature.weights) @ test.T / low.norms
    if p == 0:
        coeffs = np.zeros_like(v.coeffs)
    return ModalField(low, coeffs)
