"""Software z-buffer rasterizer producing per-pixel face visibility.

Pixels are sampled at their centers, row 0 at the top of the image.  Both
orientations of a triangle are drawn; shading decides what a back face looks
like from its normal.  Depth ties go to the lower face id, so output is fully
deterministic.
"""

from dataclasses import dataclass, field
from math import cos, pi, sin

import numpy as np

ORTHOGRAPHIC = "orthographic"
PERSPECTIVE = "perspective"
NEAR = 1e-6
# candidate (face, pixel) pairs evaluated per chunk
CHUNK = 1 << 21


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Camera:
    """Pinhole or orthographic camera.

    ``fov`` is the width of the view in scene units: the frustum width at the
    look-at distance for perspective cameras, the full view width for
    orthographic ones.  Pixels are square, so the view height is
    ``fov * height / width``.
    """

    kind: str
    position: tuple
    look_at: tuple
    up: tuple
    fov: float
    width: int
    height: int

    def __post_init__(self):
        if self.kind not in (ORTHOGRAPHIC, PERSPECTIVE):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        if self.fov <= 0:
            raise ValueError("fov must be positive")
        for name in ("position", "look_at", "up"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        fwd = np.subtract(self.look_at, self.position)
        if np.linalg.norm(fwd) == 0:
            raise ValueError("camera position equals look-at point")
        if np.linalg.norm(np.cross(_unit(fwd), _unit(self.up))) < 1e-9:
            raise ValueError("up vector is parallel to the view direction")

    @property
    def resolution(self):
        return self.width, self.height

    def basis(self):
        """Orthonormal (right, true_up, forward) vectors."""
        f = _unit(np.subtract(self.look_at, self.position))
        r = _unit(np.cross(f, self.up))
        u = np.cross(r, f)
        return r, u, f

    def with_resolution(self, width, height):
        return Camera(self.kind, self.position, self.look_at, self.up, self.fov, width, height)

    def to_dict(self):
        return {
            "kind": self.kind,
            "position": list(self.position),
            "look_at": list(self.look_at),
            "up": list(self.up),
            "fov": self.fov,
            "resolution": [self.width, self.height],
        }

    @classmethod
    def from_dict(cls, d):
        w, h = d.get("resolution", (64, 64))
        return cls(
            d.get("kind", ORTHOGRAPHIC),
            tuple(d["position"]),
            tuple(d.get("look_at", (0.0, 0.0, 0.0))),
            tuple(d.get("up", (0.0, 0.0, 1.0))),
            float(d.get("fov", 3.0)),
            int(w),
            int(h),
        )

    def project(self, points):
        """Map world points (N, 3) to pixel coordinates (x, y) and view depth."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        r, u, f = self.basis()
        rel = points - np.asarray(self.position)
        xs, ys, depth = rel @ r, rel @ u, rel @ f
        if self.kind == PERSPECTIVE:
            dist = float(np.linalg.norm(np.subtract(self.look_at, self.position)))
            safe = np.where(depth > NEAR, depth, 1.0)
            xs = xs * dist / safe
            ys = ys * dist / safe
        view_h = self.fov * self.height / self.width
        px = (xs / self.fov + 0.5) * self.width
        py = (0.5 - ys / view_h) * self.height
        return px, py, depth


def camera_ring(
    count, zenith, radius, kind=ORTHOGRAPHIC, fov=3.0, resolution=(64, 64), target=(0.0, 0.0, 0.0), phase=0.0
):
    """``count`` cameras at a fixed zenith angle, azimuths ``phase + 2 pi k / count``, aimed at ``target``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    target = np.asarray(target, dtype=float)
    up = (0.0, 0.0, 1.0) if sin(zenith) > 1e-9 else (0.0, 1.0, 0.0)
    cams = []
    for k in range(count):
        phi = phase + 2 * pi * k / count
        offset = radius * np.array([sin(zenith) * cos(phi), sin(zenith) * sin(phi), cos(zenith)])
        cams.append(Camera(kind, tuple(target + offset), tuple(target), up, fov, resolution[0], resolution[1]))
    return cams


@dataclass(frozen=True, eq=False)
class FragmentBuffer:
    """Visible face per pixel (-1 for background), its depth, albedo and the background."""

    face_id: np.ndarray
    depth: np.ndarray
    albedo: np.ndarray
    background: np.ndarray
    camera: Camera = field(default=None)

    @property
    def shape(self):
        return self.face_id.shape

    @property
    def covered(self):
        return self.face_id >= 0

    def covered_pixels(self):
        """Flat indices of covered pixels and their faces, in row-major order."""
        flat = self.face_id.reshape(-1)
        idx = np.flatnonzero(flat >= 0)
        return idx, flat[idx]

    def n_covered(self):
        return int(np.count_nonzero(self.face_id >= 0))


def _background_image(background, height, width):
    bg = np.asarray(background if background is not None else 0.0, dtype=float)
    if bg.ndim == 0:
        bg = np.full(3, float(bg))
    if bg.ndim == 1:
        if bg.shape != (3,):
            raise ValueError("background color must have 3 channels")
        return np.broadcast_to(bg, (height, width, 3)).copy()
    if bg.shape != (height, width, 3):
        raise ValueError(f"background image must be {(height, width, 3)}, got {bg.shape}")
    return bg.copy()


def rasterize(mesh, cam, background=None):
    """Nearest face per pixel center by z-buffer."""
    W, H = cam.width, cam.height
    bg = _background_image(background, H, W)
    face_id = np.full(H * W, -1, dtype=np.int64)
    zbuf = np.full(H * W, np.inf)

    F = np.asarray(mesh.F)
    if len(F):
        px, py, pz = cam.project(mesh.V)
        _fill(F, px, py, pz, cam, face_id, zbuf)

    face_id = face_id.reshape(H, W)
    zbuf = zbuf.reshape(H, W)
    albedo = np.zeros((H, W, 3))
    hit = face_id >= 0
    albedo[hit] = np.asarray(mesh.albedo)[face_id[hit]]
    for a in (face_id, zbuf, albedo, bg):
        a.setflags(write=False)
    return FragmentBuffer(face_id, zbuf, albedo, bg, cam)


def _fill(F, px, py, pz, cam, face_id, zbuf):
    W, H = cam.width, cam.height
    fx, fy, fz = px[F], py[F], pz[F]
    perspective = cam.kind == PERSPECTIVE

    x0 = np.ceil(fx.min(axis=1) - 0.5)
    x1 = np.floor(fx.max(axis=1) - 0.5)
    y0 = np.ceil(fy.min(axis=1) - 0.5)
    y1 = np.floor(fy.max(axis=1) - 0.5)
    x0 = np.maximum(x0, 0)
    y0 = np.maximum(y0, 0)
    x1 = np.minimum(x1, W - 1)
    y1 = np.minimum(y1, H - 1)
    area = (fx[:, 1] - fx[:, 0]) * (fy[:, 2] - fy[:, 0]) - (fx[:, 2] - fx[:, 0]) * (fy[:, 1] - fy[:, 0])
    ok = (x1 >= x0) & (y1 >= y0) & (area != 0) & np.all(np.isfinite(fx), axis=1)
    if perspective:
        ok &= np.all(fz > NEAR, axis=1)
    faces = np.flatnonzero(ok)
    if not len(faces):
        return
    bw = (x1[faces] - x0[faces] + 1).astype(np.int64)
    bh = (y1[faces] - y0[faces] + 1).astype(np.int64)
    counts = bw * bh
    ends = np.cumsum(counts)
    start = 0
    while start < len(faces):
        base = ends[start - 1] if start else 0
        stop = int(np.searchsorted(ends, base + CHUNK, side="right"))
        stop = max(stop, start + 1)
        _fill_chunk(faces[start:stop], bw[start:stop], counts[start:stop], x0, y0, fx, fy, fz, area, perspective, W, face_id, zbuf)
        start = stop


def _fill_chunk(faces, bw, counts, x0, y0, fx, fy, fz, area, perspective, W, face_id, zbuf):
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(faces)), counts)
    offset = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    f = faces[owner]
    col = x0[f].astype(np.int64) + offset % bw[owner]
    row = y0[f].astype(np.int64) + offset // bw[owner]
    cx = col + 0.5
    cy = row + 0.5
    ax, ay = fx[f, 0], fy[f, 0]
    bx, by = fx[f, 1], fy[f, 1]
    qx, qy = fx[f, 2], fy[f, 2]
    inv = 1.0 / area[f]
    l0 = ((bx - cx) * (qy - cy) - (qx - cx) * (by - cy)) * inv
    l1 = ((qx - cx) * (ay - cy) - (ax - cx) * (qy - cy)) * inv
    l2 = 1.0 - l0 - l1
    inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    if not inside.any():
        return
    f, row, col = f[inside], row[inside], col[inside]
    l0, l1, l2 = l0[inside], l1[inside], l2[inside]
    z = fz[f]
    if perspective:
        depth = 1.0 / (l0 / z[:, 0] + l1 / z[:, 1] + l2 / z[:, 2])
    else:
        depth = l0 * z[:, 0] + l1 * z[:, 1] + l2 * z[:, 2]
    pix = row * W + col
    order = np.lexsort((f, depth, pix))
    pix, depth, f = pix[order], depth[order], f[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, depth, f = pix[first], depth[first], f[first]
    cur_z, cur_f = zbuf[pix], face_id[pix]
    better = (depth < cur_z) | ((depth == cur_z) & ((cur_f < 0) | (f < cur_f)))
    zbuf[pix[better]] = depth[better]
    face_id[pix[better]] = f[better]
