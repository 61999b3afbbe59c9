"""Finite-difference and linearity checks of the analytic image Jacobians.

Each check samples parameter coordinates, forms the Jacobian column with
``JacobianBlock.apply`` and compares it with a direct re-render.  Geometry
columns use frozen visibility: the fragment buffer of the unperturbed mesh is
reused while the face normals move.
"""

from dataclasses import dataclass

import numpy as np

from . import lighting, shading
from .mesh import face_normals

TOLERANCES = {"lighting": 1e-9, "albedo": 1e-9, "geometry": 1e-4, "skylight": 1e-4}
SPACES = tuple(TOLERANCES)
FD_STEP = {"albedo": 1e-3, "geometry": 1e-6, "skylight": 1e-6}


@dataclass
class GradcheckReport:
    space: str
    max_rel_error: float
    worst: tuple  # (view, parameter coordinate)
    checked: int
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance

    def __str__(self):
        verdict = "ok" if self.passed else "FAIL"
        return (
            f"{self.space}: max rel. error {self.max_rel_error:.3e} over {self.checked} columns "
            f"(tolerance {self.tolerance:g}, worst view {self.worst[0]} coord {self.worst[1]}) {verdict}"
        )


def rel_error(analytic, reference, floor=1e-12):
    """max |a - r| scaled by the larger of the two columns' max magnitudes."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(reference).max(initial=0.0))
    if scale < floor:
        return 0.0
    return float(np.abs(analytic - reference).max() / scale)


def _sample(n, samples, rng):
    return rng.choice(n, size=min(samples, n), replace=False)


def _covered(frags, img):
    return img.reshape(-1, 3)[frags.covered.reshape(-1)]


def _check_lighting(scene, view, samples, rng):
    frags = scene.fragments(view)
    U = scene.lighting
    bands = lighting.sh.bands_from_count(len(U))
    J = shading.d_image_d_lighting(frags, scene.normals(), scene.mesh.albedo, bands)
    base = shading.shade_raw(frags, scene.normals(), U)
    errs = [((view, "U"), rel_error(_covered(frags, J.apply(U)), _covered(frags, base)))]
    for _ in range(samples):
        d = rng.normal(size=U.shape)
        moved = shading.shade_raw(frags, scene.normals(), U + d)
        errs.append(((view, "random direction"), rel_error(_covered(frags, J.apply(d)), _covered(frags, moved - base))))
    return errs


def _check_albedo(scene, view, samples, rng):
    frags = scene.fragments(view)
    normals = scene.normals()
    rho = np.array(scene.mesh.albedo, dtype=float)
    J = shading.d_image_d_albedo(frags, normals, scene.lighting)
    h = FD_STEP["albedo"]
    faces = np.unique(frags.covered_pixels()[1])
    if not len(faces):
        return []
    errs = []
    for f in faces[_sample(len(faces), samples, rng)]:
        c = int(rng.integers(3))
        e = np.zeros_like(rho)
        e[f, c] = 1.0
        plus = shading.shade_raw(frags, normals, scene.lighting, rho + h * e)
        minus = shading.shade_raw(frags, normals, scene.lighting, rho - h * e)
        errs.append(((view, (int(f), c)), rel_error(J.apply(e), (plus - minus) / (2 * h))))
    return errs


def _check_geometry(scene, view, samples, rng):
    frags = scene.fragments(view)
    mesh = scene.mesh
    J = shading.d_image_d_vertices(frags, mesh, scene.lighting)
    h = FD_STEP["geometry"]
    verts = np.unique(np.asarray(mesh.F)[np.unique(frags.covered_pixels()[1])])
    if not len(verts):
        return []
    errs = []
    V = mesh.V
    for v in verts[_sample(len(verts), samples, rng)]:
        axis = int(rng.integers(3))
        e = np.zeros_like(V)
        e[v, axis] = 1.0
        plus = shading.shade_raw(frags, face_normals(V + h * e, mesh.F), scene.lighting, mesh.albedo)
        minus = shading.shade_raw(frags, face_normals(V - h * e, mesh.F), scene.lighting, mesh.albedo)
        errs.append(((view, (int(v), axis)), rel_error(J.apply(e), (plus - minus) / (2 * h))))
    return errs


def _check_skylight(scene, view, samples, rng):
    if scene.skylight is None or scene.fit is None:
        raise ValueError("skylight gradcheck needs a scene lit by skylight parameters")
    frags = scene.fragments(view)
    normals = scene.normals()
    fit = scene.fit
    x = scene.skylight.as_array()
    J = shading.d_image_d_lighting(frags, normals, scene.mesh.albedo, fit.bands)
    parts = lighting.skylight_sh_grad(x, fit)
    h = FD_STEP["skylight"]
    names = ("theta_s", "phi_s", "turbidity")
    errs = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        plus = shading.shade_raw(frags, normals, lighting.skylight_sh(x + e, fit), scene.mesh.albedo)
        minus = shading.shade_raw(frags, normals, lighting.skylight_sh(x - e, fit), scene.mesh.albedo)
        errs.append(((view, names[i]), rel_error(J.apply(parts[i]), (plus - minus) / (2 * h))))
    return errs


_CHECKS = {
    "lighting": _check_lighting,
    "albedo": _check_albedo,
    "geometry": _check_geometry,
    "skylight": _check_skylight,
}


def gradcheck(scene, space, samples=20, rng=None, views=None):
    """Compare analytic and numerical Jacobian columns over the scene's views."""
    if space not in _CHECKS:
        raise ValueError(f"space must be one of {SPACES}")
    rng = rng if rng is not None else np.random.default_rng(0)
    views = range(len(scene.cameras)) if views is None else views
    errs = []
    for v in views:
        errs.extend(_CHECKS[space](scene, v, samples, rng))
    worst = max(errs, key=lambda t: t[1], default=((None, None), 0.0))
    return GradcheckReport(space, worst[1], worst[0], len(errs), TOLERANCES[space])
