"""Preetham daylight sky radiance and the polynomial SH fit built from it.

This module regenerates ``data/preetham_fit.psky``::

    python -m paramball.skymodel --out src/paramball/data/preetham_fit.psky

The sky is evaluated with the Perez luminance/chromaticity distributions,
converted to linear sRGB, projected onto SH (bands <= 6) over a grid of sun
zenith angles and turbidities, and each coefficient is least-squares fitted by
a polynomial with theta_s powers 0..13 and turbidity powers 0..7.
"""

import argparse
import logging
from math import pi

import numpy as np

from . import lighting

log = logging.getLogger(__name__)

# Perez coefficients as (slope, intercept) in turbidity for luminance Y and chromaticities x, y
_PEREZ = {
    "Y": [(0.1787, -1.4630), (-0.3554, 0.4275), (-0.0227, 5.3251), (0.1206, -2.5771), (-0.0670, 0.3703)],
    "x": [(-0.0193, -0.2592), (-0.0665, 0.0008), (-0.0004, 0.2125), (-0.0641, -0.8989), (-0.0033, 0.0452)],
    "y": [(-0.0167, -0.2608), (-0.0950, 0.0092), (-0.0079, 0.2102), (-0.0441, -1.6537), (-0.0109, 0.0529)],
}

_ZENITH_X = np.array(
    [
        [0.00166, -0.00375, 0.00209, 0.0],
        [-0.02903, 0.06377, -0.03202, 0.00394],
        [0.11693, -0.21196, 0.06052, 0.25886],
    ]
)
_ZENITH_Y = np.array(
    [
        [0.00275, -0.00610, 0.00317, 0.0],
        [-0.04214, 0.08970, -0.04153, 0.00516],
        [0.15346, -0.26756, 0.06670, 0.26688],
    ]
)

_XYZ_TO_RGB = np.array(
    [
        [3.2406, -1.5372, -0.4986],
        [-0.9689, 1.8758, 0.0415],
        [0.0557, -0.2040, 1.0570],
    ]
)

# kcd/m^2 to the renderer's radiance scale
RADIANCE_SCALE = 0.06
MIN_COS = 0.02


def _perez(cos_t, gamma, coeffs):
    A, B, C, D, E = coeffs
    return (1 + A * np.exp(B / cos_t)) * (1 + C * np.exp(D * gamma) + E * np.cos(gamma) ** 2)


def _zenith_chroma(table, theta_s, turbidity):
    t = np.array([theta_s**3, theta_s**2, theta_s, 1.0])
    T = np.array([turbidity**2, turbidity, 1.0])
    return float(T @ table @ t)


def sky_radiance(dirs, theta_s, turbidity, phi_sun=0.0):
    """Linear-RGB sky radiance for unit directions ``dirs`` (..., 3); zero below the horizon."""
    dirs = np.asarray(dirs, dtype=float)
    T = turbidity
    coeff = {k: [a * T + b for a, b in v] for k, v in _PEREZ.items()}
    chi = (4.0 / 9.0 - T / 120.0) * (pi - 2 * theta_s)
    Yz = (4.0453 * T - 4.9710) * np.tan(chi) - 0.2155 * T + 2.4192
    xz = _zenith_chroma(_ZENITH_X, theta_s, T)
    yz = _zenith_chroma(_ZENITH_Y, theta_s, T)

    sun = np.array([np.sin(theta_s) * np.cos(phi_sun), np.sin(theta_s) * np.sin(phi_sun), np.cos(theta_s)])
    cos_t = np.maximum(dirs[..., 2], MIN_COS)
    gamma = np.arccos(np.clip(dirs @ sun, -1.0, 1.0))

    def channel(key, zenith):
        # normalized by the distribution value at the zenith, where cos = 1 and gamma = theta_s
        return zenith * _perez(cos_t, gamma, coeff[key]) / _perez(1.0, theta_s, coeff[key])

    Y = channel("Y", Yz)
    x = channel("x", xz)
    y = channel("y", yz)
    X = x / y * Y
    Z = (1 - x - y) / y * Y
    rgb = np.stack([X, Y, Z], axis=-1) @ _XYZ_TO_RGB.T
    rgb = np.maximum(rgb, 0.0) * RADIANCE_SCALE
    rgb[dirs[..., 2] < 0] = 0.0
    return rgb


def sky_coefficients(theta_s, turbidity, bands=6, height=96, width=192):
    dirs = lighting.equirect_directions(height, width)
    return lighting.project_environment(sky_radiance(dirs, theta_s, turbidity), bands)


def fit_skylight(
    n_theta=29, n_tau=19, tau_range=(2.0, 10.0), deg_theta=13, deg_tau=7, ridge=1e-9, height=96, width=192
):
    """Least-squares polynomial fit of the sky SH coefficients over (theta_s, turbidity)."""
    thetas = np.linspace(0.0, pi / 2, n_theta)
    taus = np.linspace(tau_range[0], tau_range[1], n_tau)
    samples = np.empty((n_theta, n_tau, 49, 3))
    for a, th in enumerate(thetas):
        for b, tau in enumerate(taus):
            samples[a, b] = sky_coefficients(th, tau, 6, height, width)
    # fit in scaled variables, then undo the scaling on the monomial coefficients
    s_theta, s_tau = pi / 2, tau_range[1]
    ii = np.arange(deg_theta + 1)
    jj = np.arange(deg_tau + 1)
    xa = (thetas / s_theta)[:, None] ** ii[None, :]
    xb = (taus / s_tau)[:, None] ** jj[None, :]
    design = np.einsum("ai,bj->abij", xa, xb).reshape(n_theta * n_tau, -1)
    target = samples.reshape(n_theta * n_tau, -1)
    lhs = design.T @ design + ridge * np.eye(design.shape[1])
    q = np.linalg.solve(lhs, design.T @ target)
    q = q.reshape(deg_theta + 1, deg_tau + 1, 49, 3)
    scale = (s_theta ** ii)[:, None] * (s_tau ** jj)[None, :]
    p = (q / scale[:, :, None, None]).transpose(2, 0, 1, 3)
    fit = lighting.SkylightFit(p, tau_range)
    resid = design @ q.reshape(design.shape[1], -1) - target
    log.info("fit rms residual %.3g, max %.3g", np.sqrt(np.mean(resid**2)), np.abs(resid).max())
    return fit, samples, thetas, taus


def main(argv=None):
    parser = argparse.ArgumentParser(description="Regenerate the skylight SH polynomial fit")
    parser.add_argument("--out", default=str(lighting.SKY_FIT_FILE))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    fit, *_ = fit_skylight()
    fit.save(args.out)
    print(f"wrote {args.out} sha256={lighting.file_sha256(args.out)}")


if __name__ == "__main__":
    main()
