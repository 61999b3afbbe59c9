"""Scenes: a mesh, its lighting, cameras and backgrounds.

Scene files are JSON with ``"scene_version": 1``::

    {
      "scene_version": 1,
      "mesh": "bunny.obj",                 # or {"shape": "sphere", "detail": 1}
      "albedo": "bunny.obj.albedo",        # optional: sidecar path or [r, g, b]
      "lighting": {"sh": "light.shc"},     # exactly one of sh | env | skylight | default
      "camera": {"position": [0, -3, 2], "look_at": [0, 0, 0], "up": [0, 0, 1],
                 "kind": "orthographic", "fov": 3.0},
      "background": [0.5, 0.5, 0.5],       # gray level, RGB triple or image path
      "resolution": [64, 64],
      "label": 0                           # optional, used by attacks
    }

``"cameras"`` (a list of camera objects) or ``"camera_ring"`` ({count,
zenith, radius, kind, fov}) may replace ``"camera"``.  Lighting variants:
``{"env": "map.pfm", "bands": 6}``, ``{"skylight": {"theta_s": .., "phi_s":
.., "turbidity": ..}, "fit": "optional.psky"}`` and ``{"default": true}``.
Relative paths are resolved against the scene file's directory.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio, lighting, shading, shapes
from .mesh import face_normals, load_obj
from .raster import Camera, camera_ring, rasterize

SCENE_VERSION = 1
LIGHTING_KINDS = ("sh", "env", "skylight", "default")


class SceneError(ValueError):
    pass


@dataclass(eq=False)
class Scene:
    mesh: object
    cameras: list
    backgrounds: list
    lighting: np.ndarray
    skylight: object = None
    fit: object = None
    label: int = None
    _frags: dict = field(default_factory=dict, repr=False)
    _normals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.backgrounds) != len(self.cameras):
            raise SceneError("one background per camera required")
        if self.skylight is not None and self.fit is not None:
            self.lighting = lighting.skylight_sh(self.skylight, self.fit)
        self.lighting = np.asarray(self.lighting, dtype=float)

    @classmethod
    def single(cls, mesh, camera, U, background=0.5, **kw):
        return cls(mesh, [camera], [background], U, **kw)

    def fragments(self, view=0):
        if view not in self._frags:
            self._frags[view] = rasterize(self.mesh, self.cameras[view], self.backgrounds[view])
        return self._frags[view]

    def normals(self):
        if self._normals is None:
            self._normals = face_normals(self.mesh)
        return self._normals

    def render(self, view=0, U=None, raw=False):
        U = self.lighting if U is None else U
        frags = self.fragments(view)
        fn = shading.shade_raw if raw else shading.shade
        return fn(frags, self.normals(), U, self.mesh.albedo)

    def render_all(self, U=None):
        return [self.render(v, U) for v in range(len(self.cameras))]

    def with_mesh(self, mesh):
        return Scene(mesh, self.cameras, self.backgrounds, self.lighting, self.skylight, self.fit, self.label)

    def with_lighting(self, U):
        return Scene(self.mesh, self.cameras, self.backgrounds, U, None, None, self.label)


def _resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() else base / p


def _must_exist(path):
    if not path.exists():
        raise SceneError(f"referenced file does not exist: {path}")
    return path


def load_scene(path, resolution=None):
    """Parse and validate a scene file; ``resolution`` (w, h) overrides the file's."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON: {exc}") from None
    return scene_from_dict(spec, path.parent, resolution)


def scene_from_dict(spec, base=Path("."), resolution=None):
    base = Path(base)
    if spec.get("scene_version") != SCENE_VERSION:
        raise SceneError(f"unsupported scene_version {spec.get('scene_version')!r}")
    res = tuple(resolution or spec.get("resolution", (64, 64)))
    if len(res) != 2 or min(res) < 1:
        raise SceneError(f"bad resolution {res}")

    mesh = _load_mesh(spec, base)
    cameras = _load_cameras(spec, res)
    bg = _load_background(spec.get("background", 0.0), base, res)
    U, sky, fit = _load_lighting(spec.get("lighting"), base)
    label = spec.get("label")
    return Scene(mesh, cameras, [bg] * len(cameras), U, sky, fit, None if label is None else int(label))


def _load_mesh(spec, base):
    src = spec.get("mesh")
    if src is None:
        raise SceneError("scene has no mesh")
    albedo = spec.get("albedo")
    if isinstance(src, dict):
        mesh = shapes.make_shape(src.get("shape", "sphere"), int(src.get("detail", 1)))
    else:
        obj = _must_exist(_resolve(base, src))
        sidecar = _must_exist(_resolve(base, albedo)) if isinstance(albedo, str) else None
        mesh = load_obj(obj, sidecar)
    if isinstance(albedo, (list, tuple, int, float)):
        rgb = np.broadcast_to(np.asarray(albedo, dtype=float), (3,))
        mesh = mesh.with_albedo(np.broadcast_to(rgb, (mesh.n_faces, 3)))
    mesh.validate()
    return mesh


def _load_cameras(spec, res):
    keys = [k for k in ("camera", "cameras", "camera_ring") if k in spec]
    if len(keys) != 1:
        raise SceneError("exactly one of camera, cameras, camera_ring is required")
    key = keys[0]
    try:
        if key == "camera":
            return [Camera.from_dict({**spec["camera"], "resolution": res})]
        if key == "cameras":
            return [Camera.from_dict({**c, "resolution": res}) for c in spec["cameras"]]
        r = spec["camera_ring"]
        return camera_ring(
            int(r.get("count", 10)),
            float(r.get("zenith", np.pi / 3)),
            float(r.get("radius", 3.0)),
            r.get("kind", "orthographic"),
            float(r.get("fov", 3.0)),
            res,
            tuple(r.get("target", (0.0, 0.0, 0.0))),
        )
    except (KeyError, TypeError) as exc:
        raise SceneError(f"bad camera spec: {exc}") from None


def _load_background(bg, base, res):
    if isinstance(bg, str):
        img = imageio.load_environment(_must_exist(_resolve(base, bg)))
        w, h = res
        if img.shape[:2] != (h, w):
            raise SceneError(f"background image is {img.shape[1]}x{img.shape[0]}, scene renders {w}x{h}")
        return img
    arr = np.asarray(bg, dtype=float)
    if arr.ndim == 0:
        arr = np.full(3, float(arr))
    if arr.shape != (3,):
        raise SceneError("background must be a gray level, an RGB triple or an image path")
    return arr


def _load_lighting(src, base):
    if not isinstance(src, dict):
        raise SceneError("lighting must be an object")
    kinds = [k for k in LIGHTING_KINDS if k in src]
    if len(kinds) != 1:
        raise SceneError(f"exactly one lighting source required, got {kinds or 'none'}")
    kind = kinds[0]
    if kind == "default":
        return lighting.default_lighting(int(src.get("bands", lighting.DEFAULT_BANDS))), None, None
    if kind == "sh":
        return lighting.load_shc(_must_exist(_resolve(base, src["sh"]))), None, None
    if kind == "env":
        env = imageio.load_environment(_must_exist(_resolve(base, src["env"])))
        return lighting.project_environment(env, int(src.get("bands", lighting.DEFAULT_BANDS))), None, None
    s = src["skylight"]
    sky = lighting.SkylightParams(float(s["theta_s"]), float(s.get("phi_s", 0.0)), float(s.get("turbidity", 3.0)))
    fit = lighting.load_fit(_must_exist(_resolve(base, src["fit"]))) if "fit" in src else lighting.load_fit()
    return lighting.skylight_sh(sky, fit), sky, fit
