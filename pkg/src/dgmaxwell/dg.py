"""DG operators for the 2D TM Maxwell system with a stabilized central flux.

Unknowns per element: E_z of degree k+1 (scalar, pure composition) and
H = (H_x, H_y) of degree k (covariant pullback), plus one scalar face field
H^F of degree k+1 per face. All integrals run on the reference element; on
affine elements the covariant map makes the curl pairings geometry free.

The semi-discrete system reads M x' = K x with x = (E, H, H^F) and
K = [[0, -C^T], [C, 0]]; ``rhs_E`` applies -C^T and ``rhs_H`` applies C.
Boundary faces use the PEC mirror: exterior E = -interior E, exterior H =
interior H.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import num_modes, reference_element, shape_table_2d
from .kernels import sweep_plan, trace_program
from .mesh import EDGE_CCW, EDGE_VERTICES, Mesh2D
from .polys import legendre_table, quad_interval

DENSE_CAP = 20000

# reference edge vectors b - a, local direction
EDGE_DIRS = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, 1.0]])


def _as_element_values(value, nelem: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (nelem,)).copy()
    if np.any(arr <= 0):
        raise ValueError(f"{name} must be positive on every element")
    return arr


@dataclass(eq=False)
class SemiDiscreteSystem:
    mesh: Mesh2D
    k: int
    alpha: float
    eps: np.ndarray
    mu: np.ndarray
    h_mode: str = "face"
    face_h: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self.eps = _as_element_values(self.eps, self.mesh.nelem, "epsilon")
        self.mu = _as_element_values(self.mu, self.mesh.nelem, "mu")
        self.ref_E = reference_element(2, self.k + 1)
        self.ref_H = reference_element(2, self.k)
        self.face_h = self.mesh.face_sizes(self.h_mode)
        self._setup_faces()

    # -- layout -----------------------------------------------------------

    @property
    def kF(self) -> int:
        return self.k + 1

    @property
    def nE(self) -> int:
        return self.ref_E.size

    @property
    def nH(self) -> int:
        return self.ref_H.size

    @property
    def nF(self) -> int:
        """Face modes per face; zero when alpha = 0 (face field switched off)."""
        return self.kF + 1 if self.alpha > 0 else 0

    @property
    def sizes(self):
        m = self.mesh
        return m.nelem * self.nE, m.nelem * 2 * self.nH, m.nfaces * self.nF

    @property
    def ndof(self) -> int:
        return sum(self.sizes)

    def split(self, x):
        a, b, _ = self.sizes
        return x[:a], x[a:a + b], x[a + b:]

    def join(self, E, H, HF) -> np.ndarray:
        return np.concatenate([np.ravel(E), np.ravel(H), np.ravel(HF)])

    # -- geometry ---------------------------------------------------------

    def _setup_faces(self):
        m = self.mesh
        nf = m.nfaces
        self.fL = np.array([f.left for f in m.faces], dtype=np.int64)
        self.eL = np.array([f.left_edge for f in m.faces], dtype=np.int64)
        self.fR = np.array([f.right for f in m.faces], dtype=np.int64)
        self.eR = np.array([f.right_edge for f in m.faces], dtype=np.int64)
        self.rhoL = np.array([-1.0 if f.left_flip else 1.0 for f in m.faces])
        self.rhoR = np.array([-1.0 if f.right_flip else 1.0 for f in m.faces])
        self.interior = self.fR >= 0
        self.boundary = ~self.interior
        # +1 when the face direction runs counterclockwise around the left element
        self.sL = EDGE_CCW[self.eL] * self.rhoL
        self.length = np.array([m.face_length(f) for f in range(nf)])
        G = np.einsum("eij,ekj->eik", m.F_inv, m.F_inv)  # F^-1 F^-T
        self.G = G
        self.G_inv = np.linalg.inv(G)

    @staticmethod
    def _alt(n: int) -> np.ndarray:
        return (-1.0) ** np.arange(n)

    def _reparam(self, coeffs, rho):
        """Legendre coefficients under t -> rho t, rho = +-1 per face."""
        alt = self._alt(coeffs.shape[-1])
        return np.where((rho < 0)[:, None], coeffs * alt, coeffs)

    # -- mass -------------------------------------------------------------

    def mass_E(self) -> np.ndarray:
        return (self.eps * self.mesh.detF)[:, None] * self.ref_E.norms

    def mass_H_blocks(self) -> np.ndarray:
        """(nelem, 2, 2) factor multiplying diag(norms) in each H block."""
        return (self.mu * self.mesh.detF)[:, None, None] * self.G

    def mass_F(self) -> np.ndarray:
        if self.nF == 0:
            return np.zeros((self.mesh.nfaces, 0))
        n = np.arange(self.nF)
        weight = self.face_h / self.alpha * self.length / 2
        return weight[:, None] * (2.0 / (2 * n + 1))

    def apply_mass(self, x) -> np.ndarray:
        E, H, HF = self.split(np.asarray(x, dtype=float))
        ne = self.mesh.nelem
        ME = self.mass_E().ravel() * E
        Hb = H.reshape(ne, 2, self.nH)
        MH = np.einsum("ecd,edm->ecm", self.mass_H_blocks(), Hb) * self.ref_H.norms
        MF = self.mass_F().ravel() * HF
        return self.join(ME, MH, MF)

    # -- discrete curl ----------------------------------------------------

    def rhs_H(self, E) -> tuple[np.ndarray, np.ndarray]:
        """C E split into the element-H part and the face part."""
        m = self.mesh
        ne, k = m.nelem, self.k
        Eb = np.asarray(E, dtype=float).reshape(ne, self.nE)
        norms = self.ref_H.norms
        out = np.zeros((ne, 2, self.nH))
        dEx = sweep_plan(k + 1, "x").apply(Eb)
        dEy = sweep_plan(k + 1, "y").apply(Eb)
        out[:, 0] = -dEy * norms
        out[:, 1] = dEx * norms

        KE = k + 2
        tr = trace_program(k + 1)(Eb).reshape(ne, 3, KE)
        EL = self._reparam(tr[self.fL, self.eL], self.rhoL)
        ER = np.zeros_like(EL)
        inner = self.interior
        ER[inner] = self._reparam(tr[self.fR[inner], self.eR[inner]], self.rhoR[inner])
        ER[~inner] = -EL[~inner]
        jump = EL - ER

        # -1/2 int (E_T - E_N) h.t ds, identical for both sides in face terms
        f = (-0.5 * self.sL)[:, None] * jump[:, :k + 1]
        wts = f * (2.0 / (2 * np.arange(k + 1) + 1))
        bar = np.zeros((ne, 3, k + 1))
        bar[self.fL, self.eL] = self._reparam(wts, self.rhoL) * self.rhoL[:, None]
        bar[self.fR[inner], self.eR[inner]] = (
            self._reparam(wts[inner], self.rhoR[inner]) * self.rhoR[inner, None])
        tp = trace_program(k)
        for c in range(2):
            comp = bar * (EDGE_DIRS[:, c] / 2)[None, :, None]
            out[:, c] += tp.transpose(comp.reshape(ne, -1))

        if self.nF:
            n = np.arange(self.nF)
            rF = (self.length / 2)[:, None] * (2.0 / (2 * n + 1)) * jump
        else:
            rF = np.zeros((m.nfaces, 0))
        return out.reshape(-1), rF.reshape(-1)

    def rhs_E(self, H, HF) -> np.ndarray:
        """-C^T (H, H^F)."""
        m = self.mesh
        ne, k = m.nelem, self.k
        Hb = np.asarray(H, dtype=float).reshape(ne, 2, self.nH)
        out = np.zeros((ne, self.nE))
        if k >= 1:
            curl = sweep_plan(k, "x").apply(Hb[:, 1]) - sweep_plan(k, "y").apply(Hb[:, 0])
            nlow = num_modes(2, k - 1)
            out[:, :nlow] = curl * self.ref_E.norms[:nlow]

        tp = trace_program(k)
        trx = tp(Hb[:, 0]).reshape(ne, 3, k + 1)
        try_ = tp(Hb[:, 1]).reshape(ne, 3, k + 1)
        q = (trx * (EDGE_DIRS[:, 0] / 2)[None, :, None]
             + try_ * (EDGE_DIRS[:, 1] / 2)[None, :, None])
        gL = self._reparam(q[self.fL, self.eL], self.rhoL) * self.rhoL[:, None]
        inner = self.interior
        gR = gL.copy()
        gR[inner] = (self._reparam(q[self.fR[inner], self.eR[inner]], self.rhoR[inner])
                     * self.rhoR[inner, None])
        KE = k + 2
        f_common = np.zeros((m.nfaces, KE))
        f_common[:, :k + 1] = (0.5 * self.sL)[:, None] * (gR - gL)
        fLside = f_common.copy()
        fRside = f_common.copy()
        if self.nF:
            HFb = np.asarray(HF, dtype=float).reshape(m.nfaces, self.nF)
            half = (self.length / 2)[:, None] * HFb
            fLside -= np.where(inner[:, None], half, 2 * half)
            fRside += half
        wscale = 2.0 / (2 * np.arange(KE) + 1)
        bar = np.zeros((ne, 3, KE))
        bar[self.fL, self.eL] = self._reparam(fLside * wscale, self.rhoL)
        bar[self.fR[inner], self.eR[inner]] = self._reparam(
            fRside[inner] * wscale, self.rhoR[inner])
        out += trace_program(k + 1).transpose(bar.reshape(ne, -1))
        return out.reshape(-1)

    def apply_K(self, x) -> np.ndarray:
        E, H, HF = self.split(np.asarray(x, dtype=float))
        rH, rF = self.rhs_H(E)
        return self.join(self.rhs_E(H, HF), rH, rF)


def make_system(mesh: Mesh2D, k: int, alpha=None, eps=1.0, mu=1.0,
                h_mode: str = "face") -> SemiDiscreteSystem:
    """Default alpha is (k+1)^2."""
    if alpha is None:
        alpha = float((k + 1) ** 2)
    return SemiDiscreteSystem(mesh, k, float(alpha), eps, mu, h_mode)


# ---------------------------------------------------------------------------
# inverse mass

def apply_inverse_mass_flat(system: SemiDiscreteSystem, which: str, r) -> np.ndarray:
    """Block-diagonal inverse mass for piecewise constant materials."""
    r = np.asarray(r, dtype=float)
    ne = system.mesh.nelem
    if which == "E":
        return (r.reshape(ne, system.nE) / system.mass_E()).reshape(r.shape)
    if which == "H":
        blocks = np.linalg.inv(system.mass_H_blocks())
        rb = r.reshape(ne, 2, system.nH)
        return (np.einsum("ecd,edm->ecm", blocks, rb) / system.ref_H.norms).reshape(r.shape)
    if which == "HF":
        if system.nF == 0:
            return np.zeros(0)
        return (r.reshape(system.mesh.nfaces, -1) / system.mass_F()).reshape(r.shape)
    raise ValueError(f"unknown field {which!r}")


def apply_inverse_mass(system: SemiDiscreteSystem, x) -> np.ndarray:
    E, H, HF = system.split(np.asarray(x, dtype=float))
    return system.join(apply_inverse_mass_flat(system, "E", E),
                       apply_inverse_mass_flat(system, "H", H),
                       apply_inverse_mass_flat(system, "HF", HF))


def _variable_setup(system: SemiDiscreteSystem, eps_func: Callable, p: int | None):
    p = system.k + 1 if p is None else p
    ref = reference_element(2, p)
    rule = ref.quadrature
    mesh = system.mesh
    eps_q = np.array([eps_func(*mesh.to_physical(e, rule.points).T) for e in range(mesh.nelem)])
    eps_q = np.broadcast_to(eps_q, (mesh.nelem, len(rule))).astype(float)
    if np.any(eps_q <= 0):
        bad = int(np.argmax((eps_q <= 0).any(axis=1)))
        raise ValueError(f"epsilon is not positive at a quadrature node of element {bad}")
    return ref, eps_q


def apply_inverse_mass_variable(system: SemiDiscreteSystem, eps_func: Callable, r,
                                p: int | None = None) -> np.ndarray:
    """Approximate inverse of the eps-weighted scalar mass matrix.

    Per element: read the nodal values of the Riesz representer off the modal
    functional (divide by the norms, evaluate at the quadrature nodes), divide
    by eps there, and integrate back against the basis.
    """
    ref, eps_q = _variable_setup(system, eps_func, p)
    V, w = ref.eval_table, ref.quadrature.weights
    r = np.asarray(r, dtype=float)
    ne = system.mesh.nelem
    rb = r.reshape(ne, ref.size, -1)  # trailing axis: independent right sides
    nodal = np.einsum("enc,qn->eqc", rb / ref.norms[:, None], V)
    back = np.einsum("eqc,qn->enc", nodal * (w / eps_q)[:, :, None], V)
    return ((back / ref.norms[:, None]) / system.mesh.detF[:, None, None]).reshape(r.shape)


def variable_inverse_matrix(system, eps_func, p=None) -> np.ndarray:
    """Dense matrix of :func:`apply_inverse_mass_variable` (block diagonal)."""
    ref, _ = _variable_setup(system, eps_func, p)
    n = system.mesh.nelem * ref.size
    return apply_inverse_mass_variable(system, eps_func, np.eye(n), p)


# ---------------------------------------------------------------------------
# dense assembly by physical-space quadrature

def _check_cap(n: int):
    if n > DENSE_CAP:
        raise ValueError(f"dense assembly capped at {DENSE_CAP} dofs, system has {n}")


def variable_mass_dense(system: SemiDiscreteSystem, eps_func: Callable, p: int | None = None,
                        extra_order: int = 20) -> np.ndarray:
    """Exact-as-possible eps-weighted mass matrix by high-order physical quadrature."""
    from .polys import quad_simplex

    p = system.k + 1 if p is None else p
    mesh = system.mesh
    N = num_modes(2, p)
    _check_cap(mesh.nelem * N)
    rule = quad_simplex(2, 2 * p + extra_order)
    phi = shape_table_2d(p, rule.points[:, 0], rule.points[:, 1])
    out = np.zeros((mesh.nelem * N, mesh.nelem * N))
    for e in range(mesh.nelem):
        xq = mesh.to_physical(e, rule.points)
        wq = rule.weights * mesh.detF[e] * eps_func(xq[:, 0], xq[:, 1])
        out[e * N:(e + 1) * N, e * N:(e + 1) * N] = (phi * wq) @ phi.T
    return out


def assemble_dense(system: SemiDiscreteSystem):
    """(M, K) assembled independently of the modal kernels.

    Volume and face integrals use quadrature at physical points, physical
    tangents and face parameters, with basis functions evaluated by mapping
    each physical point back to the element.
    """
    from .polys import quad_simplex

    mesh = system.mesh
    k = system.k
    nEt, nHt, nFt = system.sizes
    n = nEt + nHt + nFt
    _check_cap(n)
    nE, nH, nF = system.nE, system.nH, system.nF
    M = np.zeros((n, n))
    K = np.zeros((n, n))

    def e_idx(e):
        return np.arange(e * nE, (e + 1) * nE)

    def h_idx(e, c):
        return nEt + (2 * e + c) * nH + np.arange(nH)

    def f_idx(f):
        return nEt + nHt + f * nF + np.arange(nF)

    def basis_E(e, xq, grad=False):
        r = mesh.to_reference(e, xq)
        return shape_table_2d(k + 1, r[:, 0], r[:, 1], grad=grad)

    def basis_H(e, xq, grad=False):
        """Physical vector fields F^{-T} e_c phi_m: arrays (2 comps, nH, npts)."""
        r = mesh.to_reference(e, xq)
        FiT = mesh.F_inv[e].T
        if grad:
            phi, dx, dy = shape_table_2d(k, r[:, 0], r[:, 1], grad=True)
            gphys = np.einsum("ij,jmq->imq", FiT, np.stack([dx, dy]))  # physical grad
        else:
            phi = shape_table_2d(k, r[:, 0], r[:, 1])
        vals = [np.einsum("i,mq->imq", FiT[:, c], phi) for c in range(2)]
        if grad:
            # curl (a phi) = a_y dphi/dx - a_x dphi/dy for a constant vector a
            curls = [FiT[1, c] * gphys[0] - FiT[0, c] * gphys[1] for c in range(2)]
            return vals, curls
        return vals

    rule = quad_simplex(2, 2 * k + 4)
    for e in range(mesh.nelem):
        xq = mesh.to_physical(e, rule.points)
        wq = rule.weights * abs(mesh.detF[e])
        phi, dx, dy = basis_E(e, xq, grad=True)
        gx = mesh.F_inv[e][0, 0] * dx + mesh.F_inv[e][1, 0] * dy
        gy = mesh.F_inv[e][0, 1] * dx + mesh.F_inv[e][1, 1] * dy
        curlE = (gy, -gx)  # curl of the scalar E: (dE/dy, -dE/dx)
        M[np.ix_(e_idx(e), e_idx(e))] = system.eps[e] * (phi * wq) @ phi.T
        hv, hcurl = basis_H(e, xq, grad=True)
        for c in range(2):
            for d in range(2):
                blk = sum((hv[c][i] * wq) @ hv[d][i].T for i in range(2))
                M[np.ix_(h_idx(e, c), h_idx(e, d))] = system.mu[e] * blk
            # H rows: -(curl E, h)
            K[np.ix_(h_idx(e, c), e_idx(e))] -= sum(
                (hv[c][i] * wq) @ curlE[i].T for i in range(2))
            # E rows: (curl H, e)
            K[np.ix_(e_idx(e), h_idx(e, c))] += (phi * wq) @ hcurl[c].T

    g = quad_interval(k + 4)
    s, ws = g.points[:, 0], g.weights
    for fid, face in enumerate(mesh.faces):
        a, b = face.vertices
        A, B = mesh.vertices[a], mesh.vertices[b]
        L = np.linalg.norm(B - A)
        tF = (B - A) / L
        xq = 0.5 * (1 - s)[:, None] * A + 0.5 * (1 + s)[:, None] * B
        wq = ws * L / 2

        def ccw_tangent(e):
            # sign of tF relative to the counterclockwise tangent of element e
            cen = mesh.vertices[mesh.triangles[e]].mean(axis=0)
            nrm = np.array([tF[1], -tF[0]])  # tF rotated clockwise
            return tF if np.dot(nrm, xq.mean(0) - cen) > 0 else -tF

        sides = [face.left] + ([] if face.is_boundary else [face.right])
        ev = {e: basis_E(e, xq) for e in sides}
        hv = {e: basis_H(e, xq) for e in sides}
        tt = {e: ccw_tangent(e) for e in sides}
        T = face.left
        if face.is_boundary:
            # -1/2 int (E_T - E_N) h.t with E_N = -E_T; E rows see H_N - H_T = 0
            ht = [sum(hv[T][c][i] * tt[T][i] for i in range(2)) for c in range(2)]
            for c in range(2):
                K[np.ix_(h_idx(T, c), e_idx(T))] -= (ht[c] * wq) @ ev[T].T
        else:
            for me, other in ((face.left, face.right), (face.right, face.left)):
                ht_me = [sum(hv[me][c][i] * tt[me][i] for i in range(2)) for c in range(2)]
                ht_nb = [sum(hv[other][c][i] * tt[me][i] for i in range(2)) for c in range(2)]
                for c in range(2):
                    # H rows of me: -1/2 int (E_me - E_other) h_me.t_me
                    K[np.ix_(h_idx(me, c), e_idx(me))] -= 0.5 * (ht_me[c] * wq) @ ev[me].T
                    K[np.ix_(h_idx(me, c), e_idx(other))] += 0.5 * (ht_me[c] * wq) @ ev[other].T
                    # E rows of me: 1/2 int (H_other - H_me).t_me e_me
                    K[np.ix_(e_idx(me), h_idx(other, c))] += 0.5 * (ev[me] * wq) @ ht_nb[c].T
                    K[np.ix_(e_idx(me), h_idx(me, c))] -= 0.5 * (ev[me] * wq) @ ht_me[c].T
        if nF:
            P = legendre_table(nF - 1, s)
            M[np.ix_(f_idx(fid), f_idx(fid))] = (
                system.face_h[fid] / system.alpha * (P * wq) @ P.T)
            jumps = {face.left: 2.0 if face.is_boundary else 1.0}
            if not face.is_boundary:
                jumps[face.right] = -1.0
            for e, sgn in jumps.items():
                blk = sgn * (P * wq) @ ev[e].T
                K[np.ix_(f_idx(fid), e_idx(e))] += blk      # int [[E]] g
                K[np.ix_(e_idx(e), f_idx(fid))] -= blk.T    # -int H^F [[e]]
    return M, K


def stiffness_frequency_domain(system: SemiDiscreteSystem, K=None, M=None) -> np.ndarray:
    """A = C^T M_H^{-1} C on the E unknowns; the face block supplies S."""
    if M is None or K is None:
        M, K = assemble_dense(system)
    nEt = system.sizes[0]
    C = K[nEt:, :nEt]
    MH = M[nEt:, nEt:]
    A = C.T @ np.linalg.solve(MH, C)
    return 0.5 * (A + A.T)


def stiffness_matrix_free(system: SemiDiscreteSystem) -> np.ndarray:
    """Same A built column by column from the matrix-free applies."""
    nEt = system.sizes[0]
    _check_cap(system.ndof)
    cols = []
    for j in range(nEt):
        e = np.zeros(nEt)
        e[j] = 1.0
        rH, rF = system.rhs_H(e)
        u = apply_inverse_mass_flat(system, "H", rH)
        uF = apply_inverse_mass_flat(system, "HF", rF)
        cols.append(-system.rhs_E(u, uF))
    A = np.array(cols).T
    return 0.5 * (A + A.T)
