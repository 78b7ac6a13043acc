"""Affine triangle meshes with face connectivity and covariant pullbacks.

Element ``(v0, v1, v2)`` is the image of the reference triangle under
x = F xhat + b with F = [v1 - v0, v2 - v0], b = v0. Local edge e joins the
local vertices in ``EDGE_VERTICES[e]``, parametrized from the lower to the
higher local vertex. A face is parametrized from its lower to its higher
global vertex id; ``flip`` marks the element sides where the two disagree.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

BOUNDARY = -1

EDGE_VERTICES = ((0, 1), (1, 2), (0, 2))
# +1 when the local edge direction runs counterclockwise around the element
EDGE_CCW = np.array([1.0, 1.0, -1.0])


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Face:
    left: int
    left_edge: int
    right: int
    right_edge: int
    vertices: tuple  # (lower global id, higher global id)
    left_flip: bool
    right_flip: bool

    @property
    def is_boundary(self) -> bool:
        return self.right == BOUNDARY


@dataclass(frozen=True, eq=False)
class Mesh2D:
    vertices: np.ndarray
    triangles: np.ndarray
    faces: tuple
    F: np.ndarray
    b: np.ndarray
    detF: np.ndarray
    F_inv: np.ndarray
    element_faces: np.ndarray  # (nelem, 3) face id per local edge

    @property
    def nelem(self) -> int:
        return len(self.triangles)

    @property
    def nfaces(self) -> int:
        return len(self.faces)

    def area(self) -> float:
        return float(np.sum(np.abs(self.detF)) * 0.5)

    def face_length(self, f: int) -> float:
        a, c = self.faces[f].vertices
        return float(np.linalg.norm(self.vertices[c] - self.vertices[a]))

    def element_diameter(self, e: int) -> float:
        p = self.vertices[self.triangles[e]]
        return float(max(np.linalg.norm(p[a] - p[c]) for a, c in EDGE_VERTICES))

    def face_sizes(self, h_mode: str = "face") -> np.ndarray:
        """Mesh size h per face for the stabilization weight.

        ``face``: the edge length. ``element``: the smallest diameter of the
        adjacent elements.
        """
        if h_mode == "face":
            return np.array([self.face_length(f) for f in range(self.nfaces)])
        if h_mode == "element":
            out = []
            for fc in self.faces:
                sizes = [self.element_diameter(fc.left)]
                if not fc.is_boundary:
                    sizes.append(self.element_diameter(fc.right))
                out.append(min(sizes))
            return np.array(out)
        raise MeshError(f"h_mode must be 'face' or 'element', got {h_mode!r}")

    def to_physical(self, e: int, ref_points) -> np.ndarray:
        return np.asarray(ref_points) @ self.F[e].T + self.b[e]

    def to_reference(self, e: int, points) -> np.ndarray:
        return (np.asarray(points) - self.b[e]) @ self.F_inv[e].T


def covariant_factors(mesh: Mesh2D, element: int):
    """(F^{-T}, det F) so that h = F^{-T} hhat(xhat) for in-plane vector fields."""
    det = mesh.detF[element]
    if abs(det) <= 1e-14 * max(1.0, np.abs(mesh.F[element]).max() ** 2):
        raise MeshError(f"element {element} is degenerate (det F = {det})")
    return mesh.F_inv[element].T.copy(), float(det)


def build_mesh(vertices, triangles) -> Mesh2D:
    """Validate connectivity and orientation, derive faces and affine maps."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    nv = len(vertices)
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        bad = int(np.argmax((triangles < 0).any(1) | (triangles >= nv).any(1)))
        raise MeshError(f"triangle {bad} references a vertex outside 0..{nv - 1}")
    p0 = vertices[triangles[:, 0]]
    F = np.stack([vertices[triangles[:, 1]] - p0, vertices[triangles[:, 2]] - p0], axis=2)
    det = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    for e, d in enumerate(det):
        if d <= 0:
            raise MeshError(f"triangle {e} is not counterclockwise (det F = {d:.3g})")
    F_inv = np.linalg.inv(F)

    owners: dict = {}
    for e, tri in enumerate(triangles):
        for le, (a, c) in enumerate(EDGE_VERTICES):
            key = tuple(sorted((int(tri[a]), int(tri[c]))))
            owners.setdefault(key, []).append((e, le))
    faces = []
    element_faces = np.full((len(triangles), 3), -1, dtype=np.int64)
    for key, sides in owners.items():
        if len(sides) > 2:
            raise MeshError(f"edge {key} is shared by {len(sides)} triangles")

        def flipped(e, le):
            a, c = EDGE_VERTICES[le]
            return bool(triangles[e, a] > triangles[e, c])

        (le_e, le_l), *rest = sides
        if rest:
            re_e, re_l = rest[0]
            face = Face(le_e, le_l, re_e, re_l, key, flipped(le_e, le_l), flipped(re_e, re_l))
        else:
            face = Face(le_e, le_l, BOUNDARY, -1, key, flipped(le_e, le_l), False)
        element_faces[face.left, face.left_edge] = len(faces)
        if not face.is_boundary:
            element_faces[face.right, face.right_edge] = len(faces)
        faces.append(face)
    return Mesh2D(vertices, triangles, tuple(faces), F, p0.copy(), det, F_inv, element_faces)


def build_structured_square(n: int, size: float = 1.0) -> Mesh2D:
    """n x n squares on [0, size]^2, each cut along its rising diagonal."""
    if n < 1:
        raise MeshError("need at least one subdivision")
    t = np.linspace(0.0, size, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    tris = []
    for r in range(n):
        for c in range(n):
            v00 = r * (n + 1) + c
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return build_mesh(vertices, tris)


def load_mesh(path) -> Mesh2D:
    """Read the line-oriented ``mesh2d`` text format (0-based indices)."""
    lines = Path(path).read_text().splitlines()
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            rows.append((lineno, text.split()))
    it = iter(rows)

    def take(expect_words):
        try:
            lineno, words = next(it)
        except StopIteration:
            raise MeshError(f"{path}: unexpected end of file, expected {expect_words!r}") from None
        return lineno, words

    lineno, words = take("mesh2d")
    if words != ["mesh2d"]:
        raise MeshError(f"{path}:{lineno}: expected header 'mesh2d'")

    def section(name, width, conv):
        lineno, words = take(name)
        if len(words) != 2 or words[0] != name:
            raise MeshError(f"{path}:{lineno}: expected '{name} <count>'")
        try:
            count = int(words[1])
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad count {words[1]!r}") from None
        out = []
        for _ in range(count):
            lineno, words = take(f"{name} entry")
            if len(words) != width:
                raise MeshError(f"{path}:{lineno}: expected {width} values, got {len(words)}")
            try:
                out.append([conv(w) for w in words])
            except ValueError:
                raise MeshError(f"{path}:{lineno}: cannot parse {' '.join(words)!r}") from None
        return out

    verts = section("vertices", 2, float)
    tris = section("triangles", 3, int)
    extra = next(it, None)
    if extra is not None:
        raise MeshError(f"{path}:{extra[0]}: trailing content")
    for t_id, tri in enumerate(tris):
        for v in tri:
            if not 0 <= v < len(verts):
                raise MeshError(f"{path}: triangle {t_id} references vertex {v}, "
                                f"only {len(verts)} vertices defined")
    return build_mesh(np.array(verts).reshape(-1, 2), np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_mesh(mesh: Mesh2D, path) -> None:
    out = ["mesh2d", f"vertices {len(mesh.vertices)}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out.append(f"triangles {mesh.nelem}")
    out += [" ".join(map(str, t)) for t in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(out) + "\n")
