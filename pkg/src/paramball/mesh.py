"""Triangle meshes with flat per-face normals and their vertex Jacobians."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFaceError, ObjParseError

DEGENERATE_AREA = 1e-12
DEFAULT_ALBEDO = 0.75


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangle mesh with a constant RGB albedo per face.

    ``V`` is (|V|, 3) float, ``F`` is (|F|, 3) int with counter-clockwise
    winding defining the outward side, ``albedo`` is (|F|, 3) in [0, 1].
    """

    V: np.ndarray
    F: np.ndarray
    albedo: np.ndarray

    def __init__(self, V, F, albedo=None, check=True):
        V = np.asarray(V, dtype=float).reshape(-1, 3)
        F = np.asarray(F, dtype=np.int64).reshape(-1, 3)
        if albedo is None:
            albedo = np.full((len(F), 3), DEFAULT_ALBEDO)
        albedo = np.asarray(albedo, dtype=float)
        if albedo.ndim == 1:
            albedo = np.broadcast_to(albedo, (len(F), 3))
        object.__setattr__(self, "V", _frozen(V, float))
        object.__setattr__(self, "F", _frozen(F, np.int64))
        object.__setattr__(self, "albedo", _frozen(albedo, float))
        if check:
            self.validate()

    @property
    def n_vertices(self):
        return len(self.V)

    @property
    def n_faces(self):
        return len(self.F)

    def validate(self):
        if self.albedo.shape != (len(self.F), 3):
            raise ValueError(f"albedo must be ({len(self.F)}, 3), got {self.albedo.shape}")
        if len(self.F) and (self.F.min() < 0 or self.F.max() >= len(self.V)):
            raise ValueError("face index out of range")
        if np.any((self.albedo < 0) | (self.albedo > 1)) or not np.all(np.isfinite(self.albedo)):
            raise ValueError("albedo must lie in [0, 1]")
        if not np.all(np.isfinite(self.V)):
            raise ValueError("non-finite vertex coordinates")
        bad = degenerate_faces(self.V, self.F)
        if len(bad):
            raise DegenerateFaceError(bad)

    def with_vertices(self, V, check=True):
        return TriMesh(V, self.F, self.albedo, check=check)

    def with_albedo(self, albedo):
        return TriMesh(self.V, self.F, albedo, check=False)

    def bbox(self):
        if len(self.V) == 0:
            return np.zeros(3), np.zeros(3)
        return self.V.min(axis=0), self.V.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def surface_area(self):
        return float(face_areas(self.V, self.F).sum())


def _cross(V, F):
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    return np.cross(b - a, c - a)


def face_areas(V, F):
    V = np.asarray(V, dtype=float)
    F = np.asarray(F)
    if len(F) == 0:
        return np.zeros(0)
    return 0.5 * np.linalg.norm(_cross(V, F), axis=1)


def degenerate_faces(V, F, threshold=DEGENERATE_AREA):
    return np.flatnonzero(face_areas(V, F) <= threshold)


def face_normals(mesh_or_V, F=None):
    """Unit normals ``normalize((v_b - v_a) x (v_c - v_a))`` per face, shape (|F|, 3)."""
    if F is None:
        V, F = mesh_or_V.V, mesh_or_V.F
    else:
        V = np.asarray(mesh_or_V, dtype=float)
    if len(F) == 0:
        return np.zeros((0, 3))
    c = _cross(V, F)
    norm = np.linalg.norm(c, axis=1)
    bad = np.flatnonzero(0.5 * norm <= DEGENERATE_AREA)
    if len(bad):
        raise DegenerateFaceError(bad)
    return c / norm[:, None]


def corner_heights(V, F):
    """Height vectors h[f, j]: perpendicular from the edge opposite corner j to that corner.

    Shape (|F|, 3, 3).
    """
    V = np.asarray(V, dtype=float)
    P = V[F]  # (F, 3 corners, 3)
    h = np.empty_like(P)
    for j in range(3):
        p = P[:, (j + 1) % 3]
        q = P[:, (j + 2) % 3]
        c = P[:, j] - p
        e = q - p
        t = np.einsum("ij,ij->i", c, e) / np.einsum("ij,ij->i", e, e)
        h[:, j] = c - t[:, None] * e
    return h


def normal_jacobian(mesh, face, corner):
    """3x3 Jacobian of face ``face``'s unit normal w.r.t. its corner vertex ``corner``.

    ``J[a, b] = d n_a / d v_b = -h_a n_b / |h|^2`` with h the height vector of the
    corner; moving the corner along the normal tilts the normal away from it.
    """
    F = mesh.F[face : face + 1]
    n = face_normals(mesh.V, F)[0]
    h = corner_heights(mesh.V, F)[0, corner]
    return -np.outer(h, n) / h.dot(h)


def normal_jacobian_rows(V, F, normals=None):
    """Compact form of every corner Jacobian: ``(scaled_h, n)`` with J = -outer(scaled_h, n).

    ``scaled_h`` is h/|h|^2 with shape (|F|, 3, 3); storing the rank-one factors
    avoids materializing (|F|, 3, 3, 3) arrays.
    """
    if normals is None:
        normals = face_normals(V, F)
    h = corner_heights(V, F)
    scaled = h / np.einsum("fjk,fjk->fj", h, h)[..., None]
    return scaled, normals


def midpoint_subdivide(mesh, rounds=1):
    """Split each face into four through its edge midpoints, ``rounds`` times."""
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    V, F, albedo = np.asarray(mesh.V), np.asarray(mesh.F), np.asarray(mesh.albedo)
    for _ in range(rounds):
        if len(F) == 0:
            break
        edges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
        key = np.sort(edges, axis=1)
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        mids = 0.5 * (V[uniq[:, 0]] + V[uniq[:, 1]])
        base = len(V)
        nf = len(F)
        m01 = base + inverse[:nf]
        m12 = base + inverse[nf : 2 * nf]
        m20 = base + inverse[2 * nf :]
        a, b, c = F[:, 0], F[:, 1], F[:, 2]
        F = np.concatenate(
            [
                np.stack([a, m01, m20], axis=1),
                np.stack([m01, b, m12], axis=1),
                np.stack([m20, m12, c], axis=1),
                np.stack([m01, m12, m20], axis=1),
            ]
        )
        albedo = np.concatenate([albedo] * 4)
        V = np.concatenate([V, mids])
    return TriMesh(V, F, albedo, check=False)


def sidecar_path(path):
    return Path(path).with_suffix(".albedo")


def load_obj(path, albedo_path=None):
    """Read a Wavefront OBJ; polygons are fan-triangulated, vt/vn ignored.

    Per-face albedo comes from ``albedo_path`` (default: the ``.albedo`` file next
    to the OBJ).  It may list one "r g b" line per OBJ face record or per
    resulting triangle; without a sidecar every face gets 0.75 gray.
    """
    path = Path(path)
    verts, faces, source = [], [], []
    n_records = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(lineno, "vertex needs 3 coordinates")
                try:
                    verts.append([float(t) for t in parts[1:4]])
                except ValueError as exc:
                    raise ObjParseError(lineno, str(exc)) from None
            elif tag == "f":
                if len(parts) < 4:
                    raise ObjParseError(lineno, "face needs at least 3 vertices")
                idx = []
                for tok in parts[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError:
                        raise ObjParseError(lineno, f"bad face index {tok!r}") from None
                    if i == 0:
                        raise ObjParseError(lineno, "OBJ indices are 1-based")
                    i = i - 1 if i > 0 else len(verts) + i
                    if not 0 <= i < len(verts):
                        raise ObjParseError(lineno, f"face index {tok} out of range")
                    idx.append(i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
                    source.append(n_records)
                n_records += 1
            elif tag in ("vt", "vn", "o", "g", "s", "usemtl", "mtllib", "l", "p"):
                continue
            else:
                raise ObjParseError(lineno, f"unknown record {tag!r}")
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    source = np.asarray(source, dtype=np.int64)
    albedo_path = sidecar_path(path) if albedo_path is None else Path(albedo_path)
    albedo = None
    if albedo_path.exists():
        albedo = load_albedo(albedo_path)
        if len(albedo) == len(faces):
            pass
        elif len(albedo) == n_records:
            albedo = albedo[source]
        else:
            raise ValueError(
                f"{albedo_path}: {len(albedo)} albedo rows for {n_records} faces ({len(faces)} triangles)"
            )
    return TriMesh(np.asarray(verts, dtype=float).reshape(-1, 3), faces, albedo)


def load_albedo(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ObjParseError(lineno, "albedo rows need 3 values")
            rows.append([float(t) for t in parts])
    return np.asarray(rows, dtype=float).reshape(-1, 3)


def save_obj(mesh, path, albedo_path=None):
    """Write vertices and faces to OBJ and the albedo to the sidecar file."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# {mesh.n_vertices} vertices, {mesh.n_faces} faces\n")
        for v in mesh.V:
            fh.write("v %.9g %.9g %.9g\n" % tuple(v))
        for f in mesh.F:
            fh.write("f %d %d %d\n" % tuple(f + 1))
    albedo_path = sidecar_path(path) if albedo_path is None else Path(albedo_path)
    with open(albedo_path, "w") as fh:
        for a in mesh.albedo:
            fh.write("%.9g %.9g %.9g\n" % tuple(a))
    return path
