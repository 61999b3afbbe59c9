"""Procedural closed meshes used by fixtures, tests and the toy scene bank.

Every shape is centered at the origin, fits inside [-1, 1]^3 and has outward
counter-clockwise winding.  Seams and collapsed rings are welded so the
result is a single connected surface without zero-area faces.
"""

from math import pi

import numpy as np

from .mesh import TriMesh, midpoint_subdivide

_GOLDEN = (1 + 5**0.5) / 2


def weld(V, F, decimals=9):
    """Merge coincident vertices and drop faces that collapse to an edge or point."""
    V = np.asarray(V, dtype=float)
    key = np.round(V, decimals) + 0.0  # folds -0.0 into 0.0
    uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    F = inv[np.asarray(F)]
    keep = (F[:, 0] != F[:, 1]) & (F[:, 1] != F[:, 2]) & (F[:, 0] != F[:, 2])
    return V[first], F[keep]


def _grid_faces(rows, cols, wrap_cols=False):
    """Two triangles per cell of a (rows x cols) vertex grid, counter-clockwise in (col, row)."""
    r, c = np.meshgrid(np.arange(rows - 1), np.arange(cols if wrap_cols else cols - 1), indexing="ij")
    r, c = r.ravel(), c.ravel()
    c1 = (c + 1) % cols
    a = r * cols + c
    b = r * cols + c1
    d = (r + 1) * cols + c
    e = (r + 1) * cols + c1
    return np.concatenate([np.stack([a, b, e], 1), np.stack([a, e, d], 1)])


def _orient_outward(V, F):
    """Flip faces whose normal points toward the centroid (all shapes here are star-shaped)."""
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    n = np.cross(b - a, c - a)
    centroid = (a + b + c) / 3 - V.mean(axis=0)
    flip = np.einsum("ij,ij->i", n, centroid) < 0
    F = F.copy()
    F[flip] = F[flip][:, [0, 2, 1]]
    return F


def _finish(V, F, albedo):
    V, F = weld(V, F)
    F = _orient_outward(V, F)
    return TriMesh(V, F, albedo)


def icosahedron():
    t = _GOLDEN
    V = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=float,
    )
    F = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )  # fmt: skip
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return TriMesh(V, F)


def icosphere(level=3, radius=1.0, albedo=None):
    """Geodesic sphere with 20 * 4**level faces."""
    m = midpoint_subdivide(icosahedron(), level)
    V = m.V / np.linalg.norm(m.V, axis=1, keepdims=True) * radius
    return TriMesh(V, m.F, albedo)


def uv_sphere(n_lat, n_lon, radius=1.0, albedo=None):
    """Latitude/longitude sphere with ``(n_lat - 1) * n_lon + 2`` vertices."""
    theta = np.linspace(0, pi, n_lat + 1)
    phi = np.linspace(0, 2 * pi, n_lon, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    V = radius * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1).reshape(-1, 3)
    return _finish(V, _grid_faces(n_lat + 1, n_lon, wrap_cols=True), albedo)


def box(n=8, size=1.4, albedo=None):
    """Axis-aligned cube with edge ``size``, each side an n x n grid of quads."""
    s = np.linspace(-1.0, 1.0, n + 1)
    u, v = np.meshgrid(s, s, indexing="ij")
    u, v = u.ravel(), v.ravel()
    one = np.ones_like(u)
    Vs, Fs, off = [], [], 0
    for axis in range(3):
        for sign in (-1.0, 1.0):
            P = np.empty((len(u), 3))
            P[:, axis] = sign * one
            P[:, (axis + 1) % 3] = u
            P[:, (axis + 2) % 3] = v
            Vs.append(P)
            Fs.append(_grid_faces(n + 1, n + 1) + off)
            off += len(P)
    V = np.concatenate(Vs) * (size / 2)
    return _finish(V, np.concatenate(Fs), albedo)


def _revolve(profile_r, profile_z, n_seg):
    """Surface of revolution about z through the (r, z) profile polyline."""
    phi = np.linspace(0, 2 * pi, n_seg, endpoint=False)
    r = np.asarray(profile_r)[:, None]
    z = np.asarray(profile_z)[:, None] * np.ones_like(phi)
    V = np.stack([r * np.cos(phi), r * np.sin(phi), z], -1).reshape(-1, 3)
    return V, _grid_faces(len(profile_r), n_seg, wrap_cols=True)


def cylinder(n_seg=48, n_rings=12, radius=0.8, height=1.6, albedo=None):
    cap = np.linspace(0.0, radius, n_rings // 2 + 1)
    side = np.full(n_rings + 1, radius)
    h = height / 2
    r = np.concatenate([cap, side[1:-1], cap[::-1]])
    z = np.concatenate([np.full(len(cap), -h), np.linspace(-h, h, n_rings + 1)[1:-1], np.full(len(cap), h)])
    return _finish(*_revolve(r, z, n_seg), albedo)


def cone(n_seg=48, n_rings=16, radius=0.9, height=1.8, albedo=None):
    cap = np.linspace(0.0, radius, n_rings // 2 + 1)
    t = np.linspace(0.0, 1.0, n_rings + 1)[1:]
    h = height / 2
    r = np.concatenate([cap, radius * (1 - t)])
    z = np.concatenate([np.full(len(cap), -h), -h + height * t])
    return _finish(*_revolve(r, z, n_seg), albedo)


def torus(n_major=48, n_minor=24, major=0.7, minor=0.3, albedo=None):
    u = np.linspace(0, 2 * pi, n_major, endpoint=False)
    v = np.linspace(0, 2 * pi, n_minor, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    rr = major + minor * np.cos(vv)
    V = np.stack([rr * np.cos(uu), rr * np.sin(uu), minor * np.sin(vv)], -1).reshape(-1, 3)
    # a torus is not star-shaped, so orient against the tube center instead
    F = _grid_faces(n_major, n_minor, wrap_cols=True)
    F = np.concatenate([F, _wrap_rows(n_major, n_minor)])
    center = np.stack([major * np.cos(uu), major * np.sin(uu), 0 * uu], -1).reshape(-1, 3)
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    n = np.cross(b - a, c - a)
    out = (a + b + c) / 3 - center[F[:, 0]]
    flip = np.einsum("ij,ij->i", n, out) < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    return TriMesh(V, F, albedo)


def _wrap_rows(rows, cols):
    # faces closing the last row back onto the first
    c = np.arange(cols)
    c1 = (c + 1) % cols
    a = (rows - 1) * cols + c
    b = (rows - 1) * cols + c1
    return np.concatenate([np.stack([a, b, c1], 1), np.stack([a, c1, c], 1)])


SHAPES = {
    "sphere": lambda detail=1: icosphere(2 + detail),
    "cube": lambda detail=1: box(4 * 2**detail),
    "cylinder": lambda detail=1: cylinder(24 * 2**detail, 6 * 2**detail),
    "cone": lambda detail=1: cone(24 * 2**detail, 8 * 2**detail),
    "torus": lambda detail=1: torus(24 * 2**detail, 12 * 2**detail),
}


def make_shape(name, detail=1, albedo=None):
    try:
        mesh = SHAPES[name](detail)
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None
    return mesh if albedo is None else mesh.with_albedo(np.broadcast_to(albedo, (mesh.n_faces, 3)))
