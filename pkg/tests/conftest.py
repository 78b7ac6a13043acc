import numpy as np
import pytest

from dgmaxwell.mesh import build_mesh, build_structured_square


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_triangle_points(rng, count):
    pts = rng.random((4 * count, 2))
    pts = pts[pts.sum(axis=1) < 0.98]
    return pts[:count]


def perturbed_mesh(rng, n=3, amount=0.08, scramble=True):
    m = build_structured_square(n)
    v = m.vertices.copy()
    inner = (v > 1e-12).all(1) & (v < 1 - 1e-12).all(1)
    v[inner] += rng.uniform(-amount, amount, (inner.sum(), 2))
    tris = m.triangles
    if scramble:
        perm = rng.permutation(len(v))
        v = v[perm]
        tris = np.argsort(perm)[tris]
        tris = np.array([np.roll(t, rng.integers(3)) for t in tris])
    return build_mesh(v, tris)
