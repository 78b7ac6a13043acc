import numpy as np
import pytest

from dgmaxwell.basis import shape_table_2d
from dgmaxwell.mesh import (EDGE_VERTICES, MeshError, build_mesh, build_structured_square,
                            covariant_factors, load_mesh, write_mesh)
from dgmaxwell.polys import quad_interval, quad_simplex

from conftest import perturbed_mesh


def check_invariants(m, area=1.0):
    assert np.all(m.detF > 0)
    assert m.area() == pytest.approx(area, abs=1e-12)
    counts = np.zeros(m.nfaces, dtype=int)
    for e in range(m.nelem):
        for le in range(3):
            f = m.element_faces[e, le]
            counts[f] += 1
            a, c = EDGE_VERTICES[le]
            assert tuple(sorted(m.triangles[e, [a, c]])) == m.faces[f].vertices
    for f, face in enumerate(m.faces):
        assert counts[f] == (1 if face.is_boundary else 2)


def test_structured_examples():
    m = build_structured_square(1)
    assert (m.nelem, len(m.vertices), m.nfaces) == (2, 4, 5)
    assert sum(not f.is_boundary for f in m.faces) == 1
    m2 = build_structured_square(2)
    assert m2.nelem == 8 and m2.area() == pytest.approx(1.0, abs=1e-14)
    for n in (1, 2, 4):
        check_invariants(build_structured_square(n))


def test_interior_faces_match_from_both_sides(rng):
    for m in (build_structured_square(4), perturbed_mesh(rng)):
        t = np.linspace(-1, 1, 5)
        for face in m.faces:
            if face.is_boundary:
                continue
            sides = []
            for e, le, flip in ((face.left, face.left_edge, face.left_flip),
                                (face.right, face.right_edge, face.right_flip)):
                a, c = EDGE_VERTICES[le]
                pa, pc = m.vertices[m.triangles[e, [a, c]]]
                s = -t if flip else t
                sides.append(0.5 * (1 - s)[:, None] * pa + 0.5 * (1 + s)[:, None] * pc)
            assert np.max(np.abs(sides[0] - sides[1])) <= 1e-12


def test_covariant_examples():
    m = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    FiT, det = covariant_factors(m, 0)
    assert np.allclose(FiT, np.eye(2)) and det == 1.0
    s = 2.5
    m = build_mesh(s * np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]])
    FiT, det = covariant_factors(m, 0)
    assert np.allclose(FiT, np.eye(2) / s) and det == pytest.approx(s * s)


def _element_integrals(m, e, ch, ce, k=3):
    """Physical-side and reference-side values of int H.curl e and int_dT (H x nu) e."""
    rule = quad_simplex(2, 2 * k + 2)
    ref_pts = rule.points
    phi, dx, dy = shape_table_2d(k, ref_pts[:, 0], ref_pts[:, 1], grad=True)
    hh = ch @ phi                      # (2, q) reference H
    ee, ex, ey = ce @ phi, ce @ dx, ce @ dy
    FiT, det = covariant_factors(m, e)
    H_phys = FiT @ hh
    grad_phys = FiT @ np.stack([ex, ey])
    curl_e_phys = np.stack([grad_phys[1], -grad_phys[0]])
    vol_phys = np.sum(rule.weights * det * np.sum(H_phys * curl_e_phys, axis=0))
    vol_ref = np.sum(rule.weights * np.sum(hh * np.stack([ey, -ex]), axis=0))
    g = quad_interval(k + 2)
    t, w = g.points[:, 0], g.weights
    P = m.vertices[m.triangles[e]]
    bnd_phys = bnd_ref = 0.0
    ref_v = np.array([[0.0, 0], [1, 0], [0, 1]])
    for a, c in ((0, 1), (1, 2), (2, 0)):  # counterclockwise loop
        rp = 0.5 * (1 - t)[:, None] * ref_v[a] + 0.5 * (1 + t)[:, None] * ref_v[c]
        ph = shape_table_2d(k, rp[:, 0], rp[:, 1])
        h_r, e_r = ch @ ph, ce @ ph
        tvec = P[c] - P[a]
        L = np.linalg.norm(tvec)
        nu = np.array([tvec[1], -tvec[0]]) / L
        H_p = FiT @ h_r
        # (H x nu) e with out-of-plane e: (H x nu)_z = Hx nu_y - Hy nu_x
        bnd_phys += np.sum(w * L / 2 * (H_p[0] * nu[1] - H_p[1] * nu[0]) * e_r)
        tr = ref_v[c] - ref_v[a]
        Lr = np.linalg.norm(tr)
        nr = np.array([tr[1], -tr[0]]) / Lr
        bnd_ref += np.sum(w * Lr / 2 * (h_r[0] * nr[1] - h_r[1] * nr[0]) * e_r)
    return vol_phys, vol_ref, bnd_phys, bnd_ref


def test_integral_preservation(rng):
    for _ in range(5):
        pts = rng.uniform(-2, 2, (3, 2))
        d1, d2 = pts[1] - pts[0], pts[2] - pts[0]
        if d1[0] * d2[1] - d1[1] * d2[0] < 0:
            pts = pts[[0, 2, 1]]
        m = build_mesh(pts, [[0, 1, 2]])
        ch = rng.standard_normal((2, 10))
        ce = rng.standard_normal(10)
        vp, vr, bp, br = _element_integrals(m, 0, ch, ce)
        assert vp == pytest.approx(vr, rel=1e-10, abs=1e-12)
        assert bp == pytest.approx(br, rel=1e-10, abs=1e-12)


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError):
        build_mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_roundtrip_file(tmp_path):
    m = build_structured_square(1)
    path = tmp_path / "sq.mesh"
    write_mesh(m, path)
    m2 = load_mesh(path)
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.allclose(m2.vertices, m.vertices)
    assert [f.vertices for f in m2.faces] == [f.vertices for f in m.faces]


def test_file_comments_and_errors(tmp_path):
    good = "# square\nmesh2d\nvertices 3  # three\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n"
    p = tmp_path / "a.mesh"
    p.write_text(good)
    assert load_mesh(p).nelem == 1
    p.write_text(good.replace("0 1 2", "0 2 1"))
    with pytest.raises(MeshError, match="triangle 0"):
        load_mesh(p)
    p.write_text(good.replace("0 1 2", "0 1 7"))
    with pytest.raises(MeshError, match="vertex 7"):
        load_mesh(p)
    p.write_text(good.replace("1 0\n", "1 zero\n"))
    with pytest.raises(MeshError, match=":5:"):
        load_mesh(p)
    p.write_text(good.replace("mesh2d", "mesh3d"))
    with pytest.raises(MeshError):
        load_mesh(p)


def test_face_sizes(rng):
    m = build_structured_square(2)
    hf = m.face_sizes("face")
    he = m.face_sizes("element")
    assert np.all(he >= hf - 1e-15)
    assert set(np.round(hf, 12)) == {0.5, round(np.sqrt(0.5), 12)}
    with pytest.raises(MeshError):
        m.face_sizes("volume")


def test_perturbed_mesh_invariants(rng):
    check_invariants(perturbed_mesh(rng))
