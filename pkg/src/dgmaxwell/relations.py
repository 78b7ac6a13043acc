"""Mixed shift/derivative operator relations and their numeric verification.

An :class:`OreRelation` is a finite sum of terms ``c(idx) * D^d S^shift``
acting on an indexed function family ``f_idx(point)``. Coefficients are sympy
polynomials in the index variables and never depend on the point.

Besides the standard relations (Legendre derivative rewriting, the
three-term recurrence and the two interior Dubiner operator relations) this
module holds the boundary relations the 2D sweep kernels need where the
interior ones run out of admissible shifts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp

from .basis import shape_grad_2d, shape_grad_3d
from .polys import eval_jacobi, scaled_jacobi_table

n, i, j, k, x = sp.symbols("n i j k x")

RELATION_TOL = 1e-9


@dataclass(frozen=True)
class Term:
    shift: tuple
    deriv: tuple
    coeff: sp.Expr


@dataclass(frozen=True)
class OreRelation:
    """Sum of ``coeff(base) * D^deriv f_{base + shift}``.

    ``where`` lists index values the relation is restricted to (e.g. j = 0
    for a boundary relation); ``None`` entries are free.
    """

    name: str
    index_vars: tuple
    terms: tuple
    where: tuple = ()

    def __post_init__(self):
        for t in self.terms:
            free = sp.sympify(t.coeff).free_symbols - set(self.index_vars)
            if free:
                raise ValueError(f"{self.name}: coefficient depends on {free}")

    @cached_property
    def _coeff_funcs(self):
        return [sp.lambdify(self.index_vars, t.coeff, "math") for t in self.terms]

    @property
    def nvars(self) -> int:
        return len(self.index_vars)

    def __add__(self, other: "OreRelation") -> "OreRelation":
        merged: dict = {}
        for t in self.terms + other.terms:
            key = (t.shift, t.deriv)
            merged[key] = merged.get(key, 0) + t.coeff
        terms = tuple(Term(s, d, sp.expand(c)) for (s, d), c in merged.items())
        return OreRelation(f"{self.name}+{other.name}", self.index_vars, terms, self.where)

    def scaled(self, factor) -> "OreRelation":
        return OreRelation(self.name, self.index_vars,
                           tuple(Term(t.shift, t.deriv, sp.expand(factor * t.coeff))
                                 for t in self.terms), self.where)

    def with_coeff(self, pos: int, new) -> "OreRelation":
        terms = list(self.terms)
        t = terms[pos]
        terms[pos] = Term(t.shift, t.deriv, sp.sympify(new))
        return OreRelation(self.name + "*", self.index_vars, tuple(terms), self.where)

    def instance(self, base):
        """Concrete ``(indices, deriv, coefficient)`` triples at ``base``.

        Terms whose coefficient vanishes at ``base`` are dropped, so shifted
        indices that would fall outside the family never get evaluated.
        """
        out = []
        for t, f in zip(self.terms, self._coeff_funcs):
            c = float(f(*base))
            if c != 0.0:
                idx = tuple(b + s for b, s in zip(base, t.shift))
                out.append((idx, t.deriv, c))
        return out


def relation(name, index_vars, spec, where=()):
    """Build from ``[(shift, deriv, coeff_expr), ...]``."""
    return OreRelation(name, tuple(index_vars),
                       tuple(Term(tuple(s), tuple(d), sp.sympify(c)) for s, d, c in spec),
                       tuple(where))


# ---------------------------------------------------------------------------
# function families

class Family:
    """Indexed function family evaluated at points of shape ``(npts, dim)``."""

    nindex = 1
    dim = 1

    def __call__(self, idx, deriv, points):
        raise NotImplementedError


class LegendreFamily(Family):
    nindex = 1
    dim = 1

    def __call__(self, idx, deriv, points):
        (m,) = idx
        (d,) = deriv
        if m < 0:
            raise IndexError(f"Legendre degree {m} < 0")
        t = np.asarray(points, dtype=float).reshape(-1)
        if d > m:
            return np.zeros_like(t)
        # d^d/dx^d P_m = (m+1)_d / 2^d * P_{m-d}^{(d,d)}
        scale = float(np.prod([m + 1 + r for r in range(d)])) / 2.0 ** d
        return scale * eval_jacobi(m - d, float(d), float(d), t)


class Dubiner2DFamily(Family):
    nindex = 2
    dim = 2

    def __call__(self, idx, deriv, points):
        a, b = idx
        if a < 0 or b < 0:
            raise IndexError(f"Dubiner index {idx} has a negative entry")
        pts = np.atleast_2d(points)
        dx, dy = deriv
        if dx + dy == 0:
            return shape_grad_2d(a, b, pts[:, 0], pts[:, 1])[0]
        if dx + dy == 1:
            return shape_grad_2d(a, b, pts[:, 0], pts[:, 1])[1 if dx else 2]
        return _richardson(lambda p: self(idx, (0, 0), p), deriv, pts)


class Dubiner3DFamily(Family):
    nindex = 3
    dim = 3

    def __call__(self, idx, deriv, points):
        if min(idx) < 0:
            raise IndexError(f"Dubiner index {idx} has a negative entry")
        pts = np.atleast_2d(points)
        vals = shape_grad_3d(*idx, pts[:, 0], pts[:, 1], pts[:, 2])
        if sum(deriv) == 0:
            return vals[0]
        if sum(deriv) == 1:
            return vals[1 + int(np.argmax(deriv))]
        return _richardson(lambda p: self(idx, (0, 0, 0), p), deriv, pts)


class CallableFamily(Family):
    """Wrap ``func(idx, points)``; derivatives by Richardson central differences."""

    def __init__(self, func, nindex, dim):
        self.func = func
        self.nindex = nindex
        self.dim = dim

    def __call__(self, idx, deriv, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if sum(deriv) == 0:
            return np.asarray(self.func(idx, pts), dtype=float)
        return _richardson(lambda p: self.func(idx, p), deriv, pts)


def _richardson(func, deriv, pts, h=1e-5):
    """Mixed partial derivative by central differences, one Richardson level."""
    deriv = tuple(deriv)
    axis = next(a for a, d in enumerate(deriv) if d > 0)
    rest = list(deriv)
    rest[axis] -= 1
    inner = func if sum(rest) == 0 else (lambda p: _richardson(func, rest, p, h))

    def central(step):
        e = np.zeros(pts.shape[1])
        e[axis] = step
        return (np.asarray(inner(pts + e)) - np.asarray(inner(pts - e))) / (2 * step)

    return (4.0 * central(h / 2) - central(h)) / 3.0


# ---------------------------------------------------------------------------
# evaluation

def _points(family: Family, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if family.dim == 1 else pts[None, :]
    return pts


def _term_values(rel: OreRelation, family: Family, base, pts):
    for idx, deriv, c in rel.instance(tuple(base)):
        try:
            yield c * np.asarray(family(idx, deriv, pts), dtype=float)
        except IndexError as exc:
            raise ValueError(f"{rel.name}: cannot evaluate family at {idx}: {exc}") from exc


def relation_values(rel: OreRelation, family: Family, base, points) -> np.ndarray:
    """Unnormalized sum of all terms at each point."""
    pts = _points(family, points)
    total = np.zeros(len(pts))
    for vals in _term_values(rel, family, base, pts):
        total = total + vals
    return total


def apply_relation(rel: OreRelation, family: Family, base, points) -> float:
    """Max over points of |sum of terms| / max |term|; 0.0 for an empty operator."""
    pts = _points(family, points)
    total = np.zeros(len(pts))
    biggest = np.zeros(len(pts))
    for vals in _term_values(rel, family, base, pts):
        total = total + vals
        biggest = np.maximum(biggest, np.abs(vals))
    scale = np.where(biggest > 0, biggest, 1.0)
    return float(np.max(np.abs(total) / scale))


def relation_residual(rel, family, bases, points) -> float:
    return max(apply_relation(rel, family, b, points) for b in bases)


# ---------------------------------------------------------------------------
# catalogue

def legendre_derivative_relation() -> OreRelation:
    """S_n^2 D_x - (2n+3) S_n - D_x: P'_{n+2} = P'_n + (2n+3) P_{n+1}."""
    return relation("legendre-deriv", (n,), [
        ((2,), (1,), 1),
        ((1,), (0,), -(2 * n + 3)),
        ((0,), (1,), -1),
    ])


def legendre_three_term(xval: float) -> OreRelation:
    """(n+2) S_n^2 - (2n+3) x S_n + (n+1) at a fixed x (coefficients must be x-free)."""
    return relation("legendre-3term", (n,), [
        ((2,), (0,), n + 2),
        ((1,), (0,), -(2 * n + 3) * xval),
        ((0,), (0,), n + 1),
    ])


def dubiner_x_relation() -> OreRelation:
    """Operator relation for d/dx of the 2D Dubiner family."""
    return relation("dubiner-x", (i, j), [
        ((1, 2), (1, 0), (2 * i + j + 5) * (2 * i + 2 * j + 5)),
        ((0, 3), (1, 0), (j + 3) * (2 * i + 2 * j + 5)),
        ((1, 1), (1, 0), 2 * (2 * i + 3) * (i + j + 3)),
        ((0, 2), (1, 0), -2 * (2 * i + 1) * (i + j + 3)),
        ((1, 1), (0, 0), -2 * (i + j + 3) * (2 * i + 2 * j + 5) * (2 * i + 2 * j + 7)),
        ((1, 0), (1, 0), -(j + 1) * (2 * i + 2 * j + 7)),
        ((0, 2), (0, 0), -2 * (i + j + 3) * (2 * i + 2 * j + 5) * (2 * i + 2 * j + 7)),
        ((0, 1), (1, 0), -(2 * i + j + 3) * (2 * i + 2 * j + 7)),
    ])


def dubiner_y_relation() -> OreRelation:
    """Operator relation for d/dy of the 2D Dubiner family."""
    return relation("dubiner-y", (i, j), [
        ((2, 2), (0, 1), (2 * i + j + 6) * (2 * i + j + 7) * (2 * i + 2 * j + 7)),
        ((0, 4), (0, 1), -(j + 3) * (j + 4) * (2 * i + 2 * j + 7)),
        ((2, 1), (0, 1), -4 * (j + 2) * (i + j + 4) * (2 * i + j + 6)),
        ((0, 3), (0, 1), 4 * (j + 3) * (i + j + 4) * (2 * i + j + 5)),
        ((2, 0), (0, 1), (j + 1) * (j + 2) * (2 * i + 2 * j + 9)),
        ((1, 2), (0, 0), -4 * (2 * i + 3) * (i + j + 4) * (2 * i + 2 * j + 7) * (2 * i + 2 * j + 9)),
        ((0, 2), (0, 1), -(2 * i + j + 4) * (2 * i + j + 5) * (2 * i + 2 * j + 9)),
    ])


def x_edge_link_relation() -> OreRelation:
    """d/dx link between (i+1, 0) and (i, 1), valid on the j = 0 row.

    From d/dx phi_{i+1,0} = (2i+1) phi_{i,0} + (1-x) d/dx phi_{i,0} and
    (1-x) phi_{i,0} = ((2i+2) phi_{i,0} - phi_{i,1}) / (2i+3).
    """
    return relation("x-row-link", (i, j), [
        ((1, 0), (1, 0), 2 * i + 3),
        ((0, 1), (1, 0), 1),
        ((0, 0), (1, 0), -(2 * i + 2)),
        ((0, 0), (0, 0), -(2 * i + 2) * (2 * i + 3)),
    ], where=(None, 0))


def _pivot_free(expr_terms, pivot_key):
    """Clear denominators of ``{key: rational expr}`` and return polynomial coefficients."""
    total = sp.together(sum(expr_terms.values()))
    _, den = sp.fraction(total)
    out = {key: sp.factor(sp.cancel(c * den)) for key, c in expr_terms.items()}
    assert out[pivot_key] != 0
    return out


def x_column_relation() -> OreRelation:
    """d/dx rule for the x-only column phi_{0,m} = P_m^{(1,0)}(2x-1).

    Uses P^{(1,0)} -> P^{(2,0)} -> P^{(2,1)} parameter raising and
    d/dx phi_{0,m+1} = (m+3) P_m^{(2,1)}(2x-1). Shifts are written relative
    to base (0, m-1) so every shift is nonnegative.
    """
    m = j + 1
    # P_m^{(1,0)} = sum_r g_r P_{m-r}^{(2,1)}, r = 0, 1, 2
    g0 = sp.Rational(1) * (m + 2) * (m + 3) / ((2 * m + 2) * (2 * m + 3))
    g1 = ((m + 2) ** 2 / (2 * m + 3) - m * (m + 2) / (2 * m + 1)) / (2 * m + 2)
    g2 = -m * (m + 1) / ((2 * m + 1) * (2 * m + 2))
    # P_{m-r}^{(2,1)} = dx phi_{0, m-r+1} / (m-r+3)
    terms = {
        ((0, 2), (1, 0)): g0 / (m + 3),
        ((0, 1), (1, 0)): g1 / (m + 2),
        ((0, 0), (1, 0)): g2 / (m + 1),
        ((0, 1), (0, 0)): -1,
    }
    cleared = _pivot_free(terms, ((0, 2), (1, 0)))
    return relation("x-column", (i, j), [(s, d, c) for (s, d), c in cleared.items()],
                    where=(0, None))


def y_column_relation() -> OreRelation:
    """d/dy rule for the i = 1 column, d/dy phi_{1,m} = 2 P_m^{(3,0)}(2x-1).

    Base (1, m-2); relates three d/dy terms of column 1 to phi_{0,m}.
    """
    m = j + 2
    terms = {
        ((0, 2), (0, 1)): (m + 2) * (m + 3) / (2 * m + 3),
        ((0, 1), (0, 1)): -(m + 2) * m / (2 * m + 3) - m * (m + 2) / (2 * m + 1),
        ((0, 0), (0, 1)): m * (m - 1) / (2 * m + 1),
        ((-1, 2), (0, 0)): -2 * (2 * m + 2),
    }
    cleared = _pivot_free(terms, ((0, 2), (0, 1)))
    return relation("y-column", (i, j), [(s, d, c) for (s, d), c in cleared.items()],
                    where=(1, None))


def y_column_zero_relation() -> OreRelation:
    """phi_{0,j} does not depend on y."""
    return relation("y-zero", (i, j), [((0, 0), (0, 1), 1)], where=(0, None))


DUBINER_3D_X_SUPPORT = [
    ((1, 1, 2), (1, 0, 0)), ((1, 0, 3), (1, 0, 0)), ((0, 2, 2), (1, 0, 0)), ((0, 1, 3), (1, 0, 0)),
    ((1, 1, 1), (1, 0, 0)), ((1, 0, 2), (1, 0, 0)), ((0, 2, 1), (1, 0, 0)), ((0, 1, 2), (1, 0, 0)),
    ((1, 1, 1), (0, 0, 0)), ((1, 1, 0), (1, 0, 0)), ((1, 0, 2), (0, 0, 0)), ((1, 0, 1), (1, 0, 0)),
    ((0, 2, 1), (0, 0, 0)), ((0, 2, 0), (1, 0, 0)), ((0, 1, 2), (0, 0, 0)), ((0, 1, 1), (1, 0, 0)),
]


# ---------------------------------------------------------------------------
# reports

@dataclass
class RelationCheck:
    relation_id: str
    max_residual: float
    passed: bool
    instances: int


def random_triangle_points(count: int, rng) -> np.ndarray:
    pts = []
    while len(pts) < count:
        p = rng.random(2)
        if p.sum() < 1.0 - 1e-3 and p.min() > 1e-3:
            pts.append(p)
    return np.array(pts)


def verify_relation_catalogue(seed: int = 0, max_index: int = 8, npoints: int = 25,
                             tol: float = RELATION_TOL, include_derived: bool = True):
    """Check the standard relations (and optionally the derived boundary ones).

    Returns a list of :class:`RelationCheck`; failures are reported, not raised.
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1, 1, npoints)
    tri = random_triangle_points(npoints, rng)
    leg = LegendreFamily()
    dub = Dubiner2DFamily()
    ij = [(a, b) for a in range(max_index + 1) for b in range(max_index + 1)]
    rows = []

    def add(rel, family, bases, pts):
        res = relation_residual(rel, family, bases, pts)
        rows.append(RelationCheck(rel.name, res, bool(res <= tol), len(bases)))

    add(legendre_derivative_relation(), leg, [(m,) for m in range(21)], xs)
    three = max(apply_relation(legendre_three_term(float(xv)), leg, (m,), [xv])
                for xv in xs for m in range(21))
    rows.append(RelationCheck("legendre-3term", three, bool(three <= tol), 21))
    add(dubiner_x_relation(), dub, ij, tri)
    add(dubiner_y_relation(), dub, ij, tri)
    if include_derived:
        rng_b = range(max_index + 1)
        add(dubiner_x_relation(), dub, [(a, -1) for a in rng_b], tri)
        rows[-1].relation_id = "dubiner-x@j=-1"
        add(dubiner_y_relation(), dub, [(a, b) for a in rng_b for b in (-1, -2)], tri)
        rows[-1].relation_id = "dubiner-y@j=-1,-2"
        add(x_edge_link_relation(), dub, [(a, 0) for a in rng_b], tri)
        add(x_column_relation(), dub, [(0, b) for b in range(-1, max_index)], tri)
        add(y_column_relation(), dub, [(1, b) for b in range(-2, max_index)], tri)
        add(y_column_zero_relation(), dub, [(0, b) for b in rng_b], tri)
    return rows


# ---------------------------------------------------------------------------
# ansatz solving

@dataclass
class AnsatzSample:
    base: tuple
    singular_values: np.ndarray
    nullity: int
    gap: float
    vector: np.ndarray | None


@dataclass
class AnsatzResult:
    support: list
    samples: list = field(default_factory=list)
    polynomials: list | None = None

    @property
    def found(self) -> bool:
        return all(s.vector is not None for s in self.samples)

    def coefficients_at(self, base_value: float) -> np.ndarray:
        if self.polynomials is None:
            raise ValueError("no interpolated coefficients (multi-index samples)")
        return np.array([np.polyval(c, base_value) for c in self.polynomials])

    def to_relation(self, var=n, name: str = "ansatz", digits: int = 9) -> OreRelation:
        """Relation with the interpolated coefficient polynomials (single index)."""
        if self.polynomials is None:
            raise ValueError("no interpolated coefficients (multi-index samples)")
        terms = []
        for (shift, deriv), c in zip(self.support, self.polynomials):
            expr = sum(sp.Float(round(float(a), digits)) * var ** (len(c) - 1 - r)
                       for r, a in enumerate(c))
            terms.append((shift, deriv, sp.nsimplify(expr, rational=True)))
        return relation(name, (var,), terms)


def solve_ansatz_numeric(support, family: Family, index_samples, point_samples,
                         normalize: int = 0, rank_tol: float = 1e-8,
                         max_poly_degree: int = 6):
    """Find x-free coefficients annihilating ``family`` on a given term support.

    ``support`` is a list of ``(shift, deriv)`` monomials. For each index
    sample the evaluation matrix over ``point_samples`` is formed (columns
    scaled to unit norm) and its nullspace read off the SVD; the null vector
    is normalized so that entry ``normalize`` is one. Returns ``None`` when
    any sample has no relation. For single-index families the per-sample
    vectors with a one-dimensional nullspace are interpolated as polynomials
    in the index.
    """
    pts = np.asarray(point_samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(np.unique(np.round(pts, 14), axis=0)) < len(pts):
        raise ValueError("duplicated sample points make the evaluation matrix rank deficient")
    if len(pts) < len(support) + 1:
        raise ValueError(f"need more than {len(support)} sample points, got {len(pts)}")

    result = AnsatzResult(list(support))
    for base in index_samples:
        base = tuple(np.atleast_1d(base).tolist())
        cols = []
        for shift, deriv in support:
            idx = tuple(b + s for b, s in zip(base, shift))
            cols.append(family(idx, deriv, pts))
        A = np.array(cols, dtype=float).T
        scale = np.linalg.norm(A, axis=0)
        scale[scale == 0] = 1.0
        _, s, vt = np.linalg.svd(A / scale, full_matrices=False)
        if len(s) < len(support):
            s = np.concatenate([s, np.zeros(len(support) - len(s))])
        nullity = int(np.sum(s <= rank_tol * s[0]))
        if nullity == 0:
            result.samples.append(AnsatzSample(base, s, 0, 0.0, None))
            continue
        gap = s[-nullity - 1] / max(s[-nullity], np.finfo(float).tiny) if nullity < len(s) else np.inf
        vec = vt[-1] / scale
        if abs(vec[normalize]) > 1e-12 * np.abs(vec).max():
            vec = vec / vec[normalize]
        result.samples.append(AnsatzSample(base, s, nullity, gap, vec))

    if not result.found:
        return None
    # samples with a multi-dimensional nullspace have no canonical vector
    unique = [s for s in result.samples if s.nullity == 1]
    if family.nindex == 1 and len(unique) >= 2:
        nvals = np.array([s.base[0] for s in unique], dtype=float)
        vecs = np.array([s.vector for s in unique])
        polys = []
        for col in vecs.T:
            for deg in range(min(max_poly_degree, len(nvals) - 1) + 1):
                c = np.polyfit(nvals, col, deg)
                if np.max(np.abs(np.polyval(c, nvals) - col)) <= 1e-8 * max(1.0, np.abs(col).max()):
                    break
            polys.append(c)
        result.polynomials = polys
    return result
