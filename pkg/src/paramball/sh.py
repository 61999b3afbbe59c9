"""Real spherical harmonics on the unit sphere and their normal derivatives.

Conventions
-----------
* Directions are given as Cartesian 3-vectors with z as the polar axis:
  ``theta = arccos(n_z / |n|)`` and ``phi = atan2(n_y, n_x)`` in (-pi, pi].
* ``P_l^m`` carries the Condon-Shortley phase.  The real basis multiplies in
  a further ``(-1)^m sqrt(2)`` for ``m != 0`` so that, e.g., ``Y_1^1`` is
  proportional to ``+x`` and ``Y_1^{-1}`` to ``+y``.
* Coefficient vectors are flattened with ``index = l*(l+1) + m``.
"""

from functools import lru_cache
from math import factorial, pi, sqrt

import numpy as np

from .errors import DomainError, PoleSingularityError

MAX_BANDS = 16
# rho = sqrt(n_x^2 + n_y^2) below this is treated as lying on the pole
POLE_TOL = 1e-8
_X_TOL = 1e-12


def sh_index(l, m):
    return l * (l + 1) + m


def sh_lm(index):
    l = int(sqrt(index))
    return l, index - l * (l + 1)


def num_coeffs(bands):
    return (bands + 1) ** 2


def bands_from_count(count):
    bands = int(round(sqrt(count))) - 1
    if num_coeffs(bands) != count:
        raise ValueError(f"{count} is not a square coefficient count")
    return bands


def band_of_index(bands):
    """Band number l for each flattened index up to ``bands``."""
    return np.repeat(np.arange(bands + 1), 2 * np.arange(bands + 1) + 1)


def order_of_index(bands):
    return np.concatenate([np.arange(-l, l + 1) for l in range(bands + 1)])


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _X_TOL):
        raise DomainError("Legendre argument outside [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def legendre(l, x):
    """Legendre polynomial P_l(x) by the three-term upward recurrence."""
    if l < 0:
        raise DomainError("l must be non-negative")
    x = _check_x(x)
    p_prev = np.ones_like(x)
    if l == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = x.copy()
    for k in range(1, l):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p if p.ndim else float(p)


def legendre_table(lmax, x, sin_theta=None):
    """All P_l^m(x) for 0 <= m <= l <= lmax.

    Returns an array of shape ``(lmax + 1, lmax + 1) + x.shape`` indexed
    ``[l, m]``; entries with m > l are zero.  Each column m starts from the
    closed-form diagonal ``P_m^m`` and climbs in l with
    ``(l - m + 1) P_{l+1}^m = (2l + 1) x P_l^m - (l + m) P_{l-1}^m``.
    ``sin_theta`` may be passed when known more accurately than sqrt(1 - x^2).
    """
    x = _check_x(x)
    if sin_theta is None:
        s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    else:
        s = np.asarray(sin_theta, dtype=float)
    table = np.zeros((lmax + 1, lmax + 1) + x.shape)
    diag = np.ones_like(x)
    for m in range(lmax + 1):
        if m > 0:
            diag = -(2 * m - 1) * s * diag
        table[m, m] = diag
        if m + 1 <= lmax:
            table[m + 1, m] = (2 * m + 1) * x * diag
        for l in range(m + 1, lmax):
            table[l + 1, m] = ((2 * l + 1) * x * table[l, m] - (l + m) * table[l - 1, m]) / (l - m + 1)
    return table


def assoc_legendre(l, m, x):
    """Associated Legendre function P_l^m(x), Condon-Shortley phase included."""
    if not 0 <= m <= l:
        raise DomainError(f"need 0 <= m <= l, got l={l}, m={m}")
    if m == 0:
        return legendre(l, x)
    out = legendre_table(l, x)[l, m]
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def sh_norm(l, m):
    am = abs(m)
    return sqrt((2 * l + 1) * factorial(l - am) / (4 * pi * factorial(l + am)))


def _norm_vector(bands):
    return np.array([sh_norm(l, m) for l in range(bands + 1) for m in range(-l, l + 1)])


def _as_dirs(dirs):
    d = np.asarray(dirs, dtype=float)
    if d.shape[-1] != 3:
        raise ValueError("directions must have a trailing axis of length 3")
    return d


def _angles(d):
    r = np.linalg.norm(d, axis=-1)
    cos_t = np.clip(d[..., 2] / r, -1.0, 1.0)
    sin_t = np.hypot(d[..., 0], d[..., 1]) / r
    phi = np.arctan2(d[..., 1], d[..., 0])
    return r, cos_t, sin_t, phi


def sh_eval(bands, dirs):
    """Evaluate every basis function up to ``bands`` at each direction.

    ``dirs`` has shape (..., 3) and need not be normalized.  Returns an array of
    shape (..., (bands+1)**2).
    """
    d = _as_dirs(dirs)
    _, cos_t, sin_t, phi = _angles(d)
    table = legendre_table(bands, cos_t, sin_t)
    out = np.empty(d.shape[:-1] + (num_coeffs(bands),))
    cos_m = [np.cos(m * phi) for m in range(bands + 1)]
    sin_m = [np.sin(m * phi) for m in range(bands + 1)]
    for l in range(bands + 1):
        out[..., sh_index(l, 0)] = sh_norm(l, 0) * table[l, 0]
        for m in range(1, l + 1):
            c = (-1) ** m * sqrt(2.0) * sh_norm(l, m) * table[l, m]
            out[..., sh_index(l, m)] = c * cos_m[m]
            out[..., sh_index(l, -m)] = c * sin_m[m]
    return out


def polar_angle_grads(n):
    """Gradients of theta and phi with respect to the Cartesian vector n.

    Returns ``(dtheta_dn, dphi_dn)`` each shaped like ``n``.  Undefined on the
    polar axis; there the returned rows are zero.
    """
    n = _as_dirs(n)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    rho2 = nx * nx + ny * ny
    rho = np.sqrt(rho2)
    r2 = rho2 + nz * nz
    on_pole = rho < POLE_TOL
    safe_rho = np.where(on_pole, 1.0, rho)
    safe_rho2 = np.where(on_pole, 1.0, rho2)
    dtheta = np.stack([nx * nz, ny * nz, -rho2], axis=-1) / (r2 * safe_rho)[..., None]
    dphi = np.stack([-ny, nx, np.zeros_like(nx)], axis=-1) / safe_rho2[..., None]
    dtheta[on_pole] = 0.0
    dphi[on_pole] = 0.0
    return dtheta, dphi


def _legendre_deriv_at_pole(l, sign):
    # d/dx P_l at x = +1 or -1
    v = l * (l + 1) / 2.0
    return v if sign > 0 or l % 2 == 1 else -v


def sh_eval_grad(bands, dirs):
    """Basis values and their gradients with respect to the direction vector.

    Returns ``(values, grads)`` with shapes (..., K) and (..., K, 3), where
    K = (bands+1)**2.  The gradient is that of ``Y(n / |n|)``, so it is
    tangent to the sphere.  On the polar axis (rho < POLE_TOL) the angle
    chain is replaced by the limit of the gradient there, which is nonzero
    only for |m| = 1.
    """
    d = _as_dirs(dirs)
    r, cos_t, sin_t, phi = _angles(d)
    table = legendre_table(bands + 1, cos_t, sin_t)
    rho = np.hypot(d[..., 0], d[..., 1])
    on_pole = rho < POLE_TOL
    safe_sin = np.where(on_pole, 1.0, sin_t)
    dtheta, dphi = polar_angle_grads(d)

    K = num_coeffs(bands)
    values = np.empty(d.shape[:-1] + (K,))
    grads = np.empty(d.shape[:-1] + (K, 3))
    for l in range(bands + 1):
        for m in range(0, l + 1):
            p = table[l, m]
            dp = (-cos_t * (l + 1) * p + (l - m + 1) * table[l + 1, m]) / safe_sin
            dp = np.where(on_pole, 0.0, dp)
            if m == 0:
                k = sh_norm(l, 0)
                values[..., sh_index(l, 0)] = k * p
                grads[..., sh_index(l, 0), :] = k * dp[..., None] * dtheta
                continue
            c = (-1) ** m * sqrt(2.0) * sh_norm(l, m)
            cos_m, sin_m = np.cos(m * phi), np.sin(m * phi)
            values[..., sh_index(l, m)] = c * p * cos_m
            values[..., sh_index(l, -m)] = c * p * sin_m
            grads[..., sh_index(l, m), :] = c * (
                (dp * cos_m)[..., None] * dtheta - (m * p * sin_m)[..., None] * dphi
            )
            grads[..., sh_index(l, -m), :] = c * (
                (dp * sin_m)[..., None] * dtheta + (m * p * cos_m)[..., None] * dphi
            )

    if np.any(on_pole):
        inv_r = 1.0 / r[on_pole]
        north = d[on_pole][:, 2] > 0
        for l in range(1, bands + 1):
            lim = sqrt(2.0) * sh_norm(l, 1) * np.where(
                north, _legendre_deriv_at_pole(l, 1), _legendre_deriv_at_pole(l, -1)
            ) * inv_r
            g_pos = np.zeros((lim.size, 3))
            g_pos[:, 0] = lim
            g_neg = np.zeros((lim.size, 3))
            g_neg[:, 1] = lim
            grads[on_pole, sh_index(l, 1), :] = g_pos
            grads[on_pole, sh_index(l, -1), :] = g_neg
    return values, grads


def sh_basis(l, m, direction):
    """Single real SH basis value Y_l^m at a direction."""
    if abs(m) > l or l < 0:
        raise DomainError(f"invalid band index l={l}, m={m}")
    d = np.asarray(direction, dtype=float)
    return float(sh_eval(l, d)[..., sh_index(l, m)])


def sh_basis_grad(l, m, n):
    """Gradient of Y_l^m with respect to the normal n.

    Raises PoleSingularityError when n lies on the polar axis and m != 0,
    i.e. when the azimuthal chain is needed but undefined.
    """
    if abs(m) > l or l < 0:
        raise DomainError(f"invalid band index l={l}, m={m}")
    n = np.asarray(n, dtype=float)
    if m != 0 and np.hypot(n[0], n[1]) < POLE_TOL:
        raise PoleSingularityError(f"d Y_{l}^{m} / dn needs the azimuth chain at the pole")
    _, g = sh_eval_grad(l, n)
    return g[sh_index(l, m)]
