"""Lambertian SH shading of rasterized fragments and its analytic Jacobians.

A covered pixel showing face f has raw radiance::

    I_c = albedo[f, c] * sum_k U[k, c] * w_k * Y_k(n_f)

with ``w_k = sqrt(4 pi / (2l+1)) * G_l`` the rotated clamped-cosine weight.
Visibility (the pixel-to-face map) is held fixed when differentiating.
"""

from dataclasses import dataclass

import numpy as np

from . import lighting, sh
from .errors import BandMismatchError
from .mesh import face_normals, normal_jacobian_rows


def _bands_of(U):
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] != 3:
        raise BandMismatchError(f"lighting must be (K, 3), got {U.shape}")
    try:
        bands = sh.bands_from_count(len(U))
    except ValueError as exc:
        raise BandMismatchError(str(exc)) from None
    if bands > sh.MAX_BANDS:
        raise BandMismatchError(f"{bands} bands exceeds the maximum {sh.MAX_BANDS}")
    return U, bands


def shading_factors(normals, U):
    """Irradiance factor per face and channel, (F, 3)."""
    U, bands = _bands_of(U)
    return (sh.sh_eval(bands, normals) * lighting.shading_weights(bands)) @ U


def _pixel_albedo(frags, albedo, faces):
    if albedo is None:
        return frags.albedo.reshape(-1, 3)[frags.covered_pixels()[0]]
    return np.asarray(albedo, dtype=float)[faces]


def shade_raw(frags, normals, U, albedo=None):
    """Unclamped image; background pixels carry the background radiance."""
    pix, faces = frags.covered_pixels()
    uf, inv = np.unique(faces, return_inverse=True)
    img = np.array(frags.background, dtype=float).reshape(-1, 3)
    if len(pix):
        factor = shading_factors(np.asarray(normals)[uf], U)
        img[pix] = _pixel_albedo(frags, albedo, faces) * factor[inv]
    return img.reshape(frags.shape + (3,))


def shade(frags, normals, U, albedo=None):
    """Rendered image with negative radiance clamped to zero."""
    return np.maximum(shade_raw(frags, normals, U, albedo), 0.0)


@dataclass
class JacobianBlock:
    """Sparse image Jacobian keyed by covered pixel.

    ``values[p, j, c]`` is the derivative of channel c of pixel ``pixels[p]``
    with respect to parameter ``params[p, j]`` (or parameter j for every pixel
    when ``params`` is None).  With ``per_channel`` the parameter tensor has a
    trailing RGB axis and pixel channel c couples only to parameter channel c;
    otherwise ``param_shape`` is flattened and all channels share a parameter.
    """

    image_shape: tuple
    pixels: np.ndarray
    params: np.ndarray
    values: np.ndarray
    param_shape: tuple
    per_channel: bool

    @property
    def nnz(self):
        return self.values.size

    @property
    def nbytes(self):
        n = self.pixels.nbytes + self.values.nbytes
        return n + (self.params.nbytes if self.params is not None else 0)

    def is_empty(self):
        return len(self.pixels) == 0

    def apply(self, delta):
        """Image change for a parameter change ``delta`` (shape ``param_shape``)."""
        delta = np.asarray(delta, dtype=float).reshape(self.param_shape)
        out = np.zeros((int(np.prod(self.image_shape)), 3))
        if self.is_empty():
            return out.reshape(self.image_shape + (3,))
        if self.per_channel:
            if self.params is None:
                out[self.pixels] = np.einsum("pjc,jc->pc", self.values, delta)
            else:
                out[self.pixels] = np.einsum("pjc,pjc->pc", self.values, delta[self.params])
        else:
            flat = delta.reshape(-1)
            if self.params is None:
                out[self.pixels] = np.einsum("pjc,j->pc", self.values, flat)
            else:
                out[self.pixels] = np.einsum("pjc,pj->pc", self.values, flat[self.params])
        return out.reshape(self.image_shape + (3,))

    def vjp(self, image_grad):
        """Pull an image-shaped gradient back to parameter space (J^T g)."""
        g = np.asarray(image_grad, dtype=float).reshape(-1, 3)
        grad = np.zeros(self.param_shape)
        if self.is_empty():
            return grad
        gp = g[self.pixels]
        if self.per_channel:
            contrib = self.values * gp[:, None, :]
            if self.params is None:
                grad += contrib.sum(axis=0)
            else:
                np.add.at(grad, self.params, contrib)
        else:
            contrib = np.einsum("pjc,pc->pj", self.values, gp)
            flat = grad.reshape(-1)
            if self.params is None:
                flat += contrib.sum(axis=0)
            else:
                flat += np.bincount(self.params.reshape(-1), weights=contrib.reshape(-1), minlength=flat.size)
            grad = flat.reshape(self.param_shape)
        return grad

    def dense(self):
        """Dense (H*W*3, n_params) matrix, for small problems and tests only."""
        n = int(np.prod(self.param_shape))
        M = np.zeros((int(np.prod(self.image_shape)) * 3, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            M[:, j] = self.apply(e.reshape(self.param_shape)).reshape(-1)
        return M


def d_image_d_lighting(frags, normals, albedo=None, bands=lighting.DEFAULT_BANDS):
    """Jacobian of the raw image w.r.t. lighting coefficients (K, 3)."""
    pix, faces = frags.covered_pixels()
    K = sh.num_coeffs(bands)
    if not len(pix):
        return JacobianBlock(frags.shape, pix, None, np.zeros((0, K, 3)), (K, 3), True)
    uf, inv = np.unique(faces, return_inverse=True)
    basis = sh.sh_eval(bands, np.asarray(normals)[uf]) * lighting.shading_weights(bands)
    rho = _pixel_albedo(frags, albedo, faces)
    values = basis[inv][:, :, None] * rho[:, None, :]
    return JacobianBlock(frags.shape, pix, None, values, (K, 3), True)


def d_image_d_albedo(frags, normals, U):
    """Jacobian of the raw image w.r.t. per-face albedo (|F|, 3)."""
    normals = np.asarray(normals)
    pix, faces = frags.covered_pixels()
    shape = (len(normals), 3)
    if not len(pix):
        return JacobianBlock(frags.shape, pix, np.zeros((0, 1), np.int64), np.zeros((0, 1, 3)), shape, True)
    uf, inv = np.unique(faces, return_inverse=True)
    factor = shading_factors(normals[uf], U)
    return JacobianBlock(frags.shape, pix, faces[:, None], factor[inv][:, None, :], shape, True)


def normal_gradients(normals, U):
    """d(shading factor)/d(normal) per face: (F, 3 channels, 3 coords)."""
    U, bands = _bands_of(U)
    _, grads = sh.sh_eval_grad(bands, normals)
    w = lighting.shading_weights(bands)
    return np.einsum("fkx,k,kc->fcx", grads, w, U)


def d_image_d_vertices(frags, mesh, U):
    """Jacobian of the raw image w.r.t. vertex positions (|V|, 3), visibility frozen.

    Each covered pixel couples to the 9 coordinates of its face's corners:
    ``dI_c/dv_j = albedo_c * dF_c/dn . dn/dv_j`` with the rank-one corner
    Jacobian ``dn/dv_j = -h_j n^T / |h_j|^2``.
    """
    pix, faces = frags.covered_pixels()
    shape = (mesh.n_vertices, 3)
    if not len(pix):
        return JacobianBlock(frags.shape, pix, np.zeros((0, 9), np.int64), np.zeros((0, 9, 3)), shape, False)
    uf, inv = np.unique(faces, return_inverse=True)
    Fv = np.asarray(mesh.F)[uf]
    normals = face_normals(mesh.V, Fv)
    scaled_h, _ = normal_jacobian_rows(mesh.V, Fv, normals)
    g = normal_gradients(normals, U)  # (Fv, 3c, 3x)
    s = -np.einsum("fcx,fjx->fjc", g, scaled_h)  # (Fv, 3 corners, 3c)
    per_face = s[:, :, None, :] * normals[:, None, :, None]  # (Fv, corner, axis, c)
    per_face = per_face.reshape(len(uf), 9, 3)
    rho = np.asarray(mesh.albedo)[faces]
    values = per_face[inv] * rho[:, None, :]
    params = (3 * Fv[:, :, None] + np.arange(3)[None, None, :]).reshape(len(uf), 9)[inv]
    return JacobianBlock(frags.shape, pix, params, values, shape, False)
