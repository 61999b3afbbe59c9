import numpy as np
import pytest

from paramball import shapes
from paramball.mesh import face_normals, midpoint_subdivide


def signed_volume(m):
    a, b, c = (m.V[m.F[:, k]] for k in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6)


def is_closed(m):
    # every directed edge appears once and its reverse once
    e = np.concatenate([m.F[:, [0, 1]], m.F[:, [1, 2]], m.F[:, [2, 0]]])
    fwd = {tuple(x) for x in e.tolist()}
    return len(fwd) == len(e) and all((b, a) in fwd for a, b in fwd)


@pytest.mark.parametrize("name", sorted(shapes.SHAPES))
@pytest.mark.parametrize("detail", [0, 1])
def test_shapes_are_closed_outward_and_bounded(name, detail):
    m = shapes.make_shape(name, detail)
    assert is_closed(m)
    assert signed_volume(m) > 0
    assert np.abs(m.V).max() <= 1.0 + 1e-12
    n = face_normals(m)
    centers = m.V[m.F].mean(axis=1)
    if name == "torus":
        # outward from the nearest point of the tube's center circle
        ring = centers.copy()
        ring[:, 2] = 0
        ring *= 0.7 / np.linalg.norm(ring, axis=1, keepdims=True)
        assert np.all(np.einsum("ij,ij->i", n, centers - ring) > 0)
    else:
        # star-shaped about the centroid
        assert np.mean(np.einsum("ij,ij->i", n, centers - m.V.mean(axis=0)) > 0) > 0.95


def test_icosphere_counts_and_radius():
    m = shapes.icosphere(2, radius=0.5)
    assert (m.n_vertices, m.n_faces) == (162, 320)
    np.testing.assert_allclose(np.linalg.norm(m.V, axis=1), 0.5)


def test_uv_sphere_counts():
    m = shapes.uv_sphere(10, 20)
    assert m.n_faces == 2 * 20 * (10 - 1)
    assert is_closed(m)


def test_volume_estimates():
    # fine tessellations approach the analytic volumes
    assert signed_volume(shapes.icosphere(5)) == pytest.approx(4 / 3 * np.pi, rel=2e-3)
    assert signed_volume(shapes.box(4, size=1.4)) == pytest.approx(1.4**3, rel=1e-12)
    assert signed_volume(shapes.cylinder(256, 4, 0.8, 1.6)) == pytest.approx(np.pi * 0.64 * 1.6, rel=1e-3)


def test_weld_merges_duplicates():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0.0]])
    F = np.array([[0, 1, 2], [3, 4, 5]])
    W, G = shapes.weld(V, F)
    assert len(W) == 4
    np.testing.assert_allclose(W[G], V[F])


def test_unknown_shape_and_albedo():
    with pytest.raises(ValueError):
        shapes.make_shape("dodecahedron")
    m = shapes.make_shape("cube", 0, albedo=(0.2, 0.4, 0.6))
    np.testing.assert_allclose(m.albedo, np.broadcast_to([0.2, 0.4, 0.6], (m.n_faces, 3)))


def test_subdivided_icosphere_is_still_closed():
    assert is_closed(midpoint_subdivide(shapes.icosphere(1), 2))
