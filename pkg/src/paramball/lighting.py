"""Environment lighting expressed in spherical harmonics.

Lighting coefficients are stored as ``(K, 3)`` float arrays (K = (bands+1)^2,
one column per RGB channel, rows flattened by ``l*(l+1)+m``).  ``ShCoeffs``
wraps such an array for file I/O.
"""

import hashlib
import struct
from dataclasses import dataclass
from math import factorial, pi, sqrt
from pathlib import Path

import numpy as np

from . import sh
from .errors import BandMismatchError, MissingFitError

DEFAULT_BANDS = 6
DATA_DIR = Path(__file__).parent / "data"
SKY_FIT_FILE = DATA_DIR / "preetham_fit.psky"
SKY_FIT_MAGIC = b"PSKY1"
SKY_FIT_SHAPE = (49, 14, 8, 3)
DEFAULT_LIGHTING_FILE = DATA_DIR / "default_lighting.shc"
# overall radiance scale of the representative environment
DEFAULT_EXPOSURE = 0.15


@dataclass
class ShCoeffs:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, 3)
        self.bands = sh.bands_from_count(len(self.data))
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite SH coefficients")

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def save(self, path):
        save_shc(self.data, path)

    @classmethod
    def load(cls, path):
        return cls(load_shc(path))


def save_shc(coeffs, path):
    coeffs = np.asarray(coeffs, dtype=float)
    bands = sh.bands_from_count(len(coeffs))
    with open(path, "w") as fh:
        fh.write(f"shc {bands}\n")
        for k, (r, g, b) in enumerate(coeffs):
            l, m = sh.sh_lm(k)
            fh.write(f"{l} {m} {float(r)!r} {float(g)!r} {float(b)!r}\n")


def load_shc(path):
    """Read an ``shc`` text file: header ``shc <bands>`` then ``l m r g b`` rows."""
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].split() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0][0] != "shc" or len(lines[0]) != 2:
        raise ValueError(f"{path}: missing 'shc <bands>' header")
    bands = int(lines[0][1])
    out = np.full((sh.num_coeffs(bands), 3), np.nan)
    for row in lines[1:]:
        if len(row) != 5:
            raise ValueError(f"{path}: expected 'l m r g b', got {' '.join(row)!r}")
        l, m = int(row[0]), int(row[1])
        if not (0 <= l <= bands and abs(m) <= l):
            raise ValueError(f"{path}: band index ({l}, {m}) out of range")
        out[sh.sh_index(l, m)] = [float(v) for v in row[2:]]
    if np.isnan(out).any():
        raise ValueError(f"{path}: missing coefficient rows")
    return out


def default_lighting(bands=DEFAULT_BANDS):
    """The bundled representative environment, truncated or zero-padded to ``bands``."""
    return resize_bands(load_shc(DEFAULT_LIGHTING_FILE), bands)


def representative_environment(height=128, width=256):
    """Smooth outdoor-like radiance map used to build the bundled default lighting.

    Bluish sky brightening toward the zenith, a warm key lobe, and a dim brown
    ground, blended across the horizon so the map is band-limited enough for
    6-band SH.
    """
    d = equirect_directions(height, width)
    z = d[..., 2]
    up = 0.5 * (1 + np.tanh(4 * z))[..., None]
    sky = np.array([0.55, 0.65, 0.85]) + np.array([0.15, 0.2, 0.3]) * np.clip(z, 0, 1)[..., None]
    ground = np.array([0.30, 0.24, 0.18]) * np.ones_like(d)
    key = np.array([0.45, -0.35, 0.82])
    key /= np.linalg.norm(key)
    lobe = np.exp(6.0 * (d @ key - 1.0))[..., None] * np.array([1.6, 1.45, 1.2])
    return DEFAULT_EXPOSURE * (up * sky + (1 - up) * ground + lobe)


def build_default_lighting(path=DEFAULT_LIGHTING_FILE, bands=DEFAULT_BANDS):
    """Regenerate the bundled default lighting file from the representative environment."""
    coeffs = project_environment(representative_environment(), bands)
    save_shc(coeffs, path)
    return coeffs


def resize_bands(coeffs, bands):
    coeffs = np.asarray(coeffs, dtype=float)
    K = sh.num_coeffs(bands)
    out = np.zeros((K, 3))
    n = min(K, len(coeffs))
    out[:n] = coeffs[:n]
    return out


# ----------------------------------------------------------------------------
# Clamped cosine


def clamped_cosine_zonal(l):
    """Zonal SH coefficient of max(cos theta, 0) about +z."""
    if l < 0:
        raise ValueError("l must be non-negative")
    if l == 0:
        return sqrt(pi) / 2
    if l == 1:
        return sqrt(pi / 3)
    if l % 2:
        return 0.0
    h = l // 2
    sign = -1.0 if h % 2 == 0 else 1.0  # (-1)^(l/2 + 1)
    return sign * factorial(l - 2) * sqrt((2 * l + 1) * pi) / (2**l * factorial(h - 1) * factorial(h + 1))


def shading_weights(bands):
    """Per-coefficient factor sqrt(4 pi / (2l+1)) * G_l, shape (K,)."""
    ls = sh.band_of_index(bands)
    g = np.array([clamped_cosine_zonal(l) for l in range(bands + 1)])
    return np.sqrt(4 * pi / (2 * ls + 1)) * g[ls]


def rotate_zonal_to_normal(n, bands=DEFAULT_BANDS):
    """SH coefficients of max(w . n, 0) for normals n of shape (..., 3)."""
    return shading_weights(bands) * sh.sh_eval(bands, n)


# ----------------------------------------------------------------------------
# Environment maps


def equirect_directions(height, width):
    """Unit directions at equirectangular cell centers, shape (H, W, 3)."""
    theta = (np.arange(height) + 0.5) * pi / height
    phi = (np.arange(width) + 0.5) * 2 * pi / width
    st = np.sin(theta)[:, None]
    return np.stack(
        [st * np.cos(phi)[None, :], st * np.sin(phi)[None, :], np.broadcast_to(np.cos(theta)[:, None], (height, width))],
        axis=-1,
    )


def _row_basis_integrals(height, bands, nodes=8):
    """Integral over each row's theta band of the theta part of every basis function.

    Returns (H, K): int sin(theta) * c_lm * P_l^|m|(cos theta) d theta.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.arange(height + 1) * pi / height
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    theta = mid[:, None] + half[:, None] * x[None, :]  # (H, q)
    table = sh.legendre_table(bands, np.cos(theta), np.sin(theta))
    K = sh.num_coeffs(bands)
    out = np.empty((height, K))
    weight = half[:, None] * w[None, :] * np.sin(theta)
    for l in range(bands + 1):
        for m in range(-l, l + 1):
            c = sh.sh_norm(l, m) * (1.0 if m == 0 else (-1) ** m * sqrt(2.0))
            out[:, sh.sh_index(l, m)] = c * np.sum(weight * table[l, abs(m)], axis=1)
    return out


def _column_basis_integrals(width, bands):
    """Integral over each column's phi range of cos(m phi), sin(|m| phi) or 1."""
    edges = np.arange(width + 1) * 2 * pi / width
    orders = sh.order_of_index(bands)
    out = np.empty((width, len(orders)))
    for k, m in enumerate(orders):
        if m == 0:
            out[:, k] = np.diff(edges)
        elif m > 0:
            out[:, k] = np.diff(np.sin(m * edges)) / m
        else:
            out[:, k] = -np.diff(np.cos(-m * edges)) / -m
    return out


def project_environment(env, bands=DEFAULT_BANDS):
    """Project an equirectangular radiance map onto SH coefficients.

    Row r covers theta in [r, r+1] * pi / H (row 0 at +z), column c covers phi
    in [c, c+1] * 2 pi / W.  Radiance is taken as constant over each cell and
    the basis functions are integrated over the cell exactly in phi and by
    8-point Gauss-Legendre in theta, so a constant map projects without
    discretization error.
    """
    env = np.asarray(env, dtype=float)
    if env.ndim == 2:
        env = env[..., None]
    H, W = env.shape[:2]
    if H < 2 or W < 2:
        raise ValueError("environment map must be at least 2x2")
    if bands > sh.MAX_BANDS:
        raise ValueError(f"bands must be <= {sh.MAX_BANDS}")
    rows = _row_basis_integrals(H, bands)
    cols = _column_basis_integrals(W, bands)
    per_row = np.einsum("ck,rch->rkh", cols, env)
    return np.einsum("rk,rkh->kh", rows, per_row)


def reconstruct_environment(coeffs, height, width):
    """Evaluate an SH expansion at equirectangular cell centers, (H, W, C)."""
    coeffs = np.asarray(coeffs, dtype=float)
    bands = sh.bands_from_count(len(coeffs))
    Y = sh.sh_eval(bands, equirect_directions(height, width))
    return Y @ coeffs


# ----------------------------------------------------------------------------
# Skylight


@dataclass(frozen=True)
class SkylightParams:
    """Sun zenith ``theta_s`` in [0, pi/2], azimuth ``phi_s`` in [0, 2 pi), turbidity >= 1."""

    theta_s: float
    phi_s: float
    turbidity: float

    def __post_init__(self):
        if not 0.0 <= self.theta_s <= pi / 2:
            raise ValueError(f"theta_s={self.theta_s} outside [0, pi/2]")
        if not 0.0 <= self.phi_s < 2 * pi:
            raise ValueError(f"phi_s={self.phi_s} outside [0, 2 pi)")
        if not self.turbidity >= 1.0:
            raise ValueError(f"turbidity={self.turbidity} below 1")

    def as_array(self):
        return np.array([self.theta_s, self.phi_s, self.turbidity])

    @classmethod
    def clamped(cls, theta_s, phi_s, turbidity, max_turbidity=None):
        """Nearest valid parameters: clamp the angles and turbidity, wrap the azimuth."""
        theta_s = min(max(float(theta_s), 0.0), pi / 2)
        phi_s = float(phi_s) % (2 * pi)
        if phi_s >= 2 * pi:
            phi_s = 0.0
        turbidity = max(float(turbidity), 1.0)
        if max_turbidity is not None:
            turbidity = min(turbidity, max_turbidity)
        return cls(theta_s, phi_s, turbidity)


class SkylightFit:
    """Polynomial fit of the sun-at-zero-azimuth sky coefficients.

    ``p[k, i, j, c]`` multiplies ``theta_s**i * turbidity**j`` for coefficient k
    and channel c.  ``turbidity_range`` records the interval the fit was made on.
    """

    def __init__(self, p, turbidity_range=(1.0, 10.0)):
        p = np.asarray(p, dtype=float)
        if p.shape != SKY_FIT_SHAPE:
            raise ValueError(f"fit tensor must have shape {SKY_FIT_SHAPE}, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite fit coefficients")
        self.p = p
        self.turbidity_range = tuple(float(t) for t in turbidity_range)
        self.bands = sh.bands_from_count(p.shape[0])

    def save(self, path):
        save_fit(self, path)


def save_fit(fit, path):
    """Binary layout: magic, then the float64 tensor little-endian in (k, i, j, c) order.

    The turbidity range is appended as two trailing float64 values.
    """
    with open(path, "wb") as fh:
        fh.write(SKY_FIT_MAGIC)
        fh.write(np.ascontiguousarray(fit.p, dtype="<f8").tobytes())
        fh.write(struct.pack("<2d", *fit.turbidity_range))


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_fit(path=None, expected_sha256=None):
    """Load a skylight fit.  The bundled file is verified against its recorded checksum."""
    if path is None:
        path = SKY_FIT_FILE
        if expected_sha256 is None:
            expected_sha256 = BUNDLED_FIT_SHA256
    path = Path(path)
    if not path.exists():
        raise MissingFitError(f"skylight fit not found: {path}")
    raw = path.read_bytes()
    if expected_sha256 is not None and hashlib.sha256(raw).hexdigest() != expected_sha256:
        raise MissingFitError(f"{path}: checksum mismatch")
    if not raw.startswith(SKY_FIT_MAGIC):
        raise MissingFitError(f"{path}: bad magic")
    n = int(np.prod(SKY_FIT_SHAPE))
    body = raw[len(SKY_FIT_MAGIC) :]
    if len(body) not in (8 * n, 8 * n + 16):
        raise MissingFitError(f"{path}: expected {8 * n} tensor bytes, found {len(body)}")
    p = np.frombuffer(body[: 8 * n], dtype="<f8").reshape(SKY_FIT_SHAPE)
    trange = struct.unpack("<2d", body[8 * n :]) if len(body) > 8 * n else (1.0, 10.0)
    return SkylightFit(p.astype(float), trange)


# sha256 of data/preetham_fit.psky as shipped
BUNDLED_FIT_SHA256 = "a8b27f99bee83a22da2a0f63c0de64e044f41e7eb987139ecbb5c73b1b2006ce"


def _powers(x, n):
    return x ** np.arange(n)


def _dpowers(x, n):
    i = np.arange(n)
    out = np.zeros(n)
    out[1:] = i[1:] * x ** (i[1:] - 1)
    return out


def _partner_and_order(bands):
    orders = sh.order_of_index(bands)
    ls = sh.band_of_index(bands)
    partner = ls * (ls + 1) - orders
    return orders, partner


def _zero_azimuth_coeffs(fit, theta_s, turbidity, d_theta=False, d_tau=False):
    n_i, n_j = fit.p.shape[1:3]
    a = _dpowers(theta_s, n_i) if d_theta else _powers(theta_s, n_i)
    b = _dpowers(turbidity, n_j) if d_tau else _powers(turbidity, n_j)
    return np.einsum("kijc,i,j->kc", fit.p, a, b)


def _check_fit(fit):
    if fit is None:
        raise MissingFitError("no skylight fit loaded")


def skylight_sh(params, fit):
    """Sky lighting coefficients (49, 3) for sun angles and turbidity.

    The fitted sun-at-zero-azimuth coefficients are turned about z with
    ``U_lm = U~_lm cos(m phi_s) + U~_l,-m sin(m phi_s)``.  With the basis
    conventions of :mod:`paramball.sh` this places the sun at azimuth
    ``-phi_s``, i.e. phi_s is measured clockwise seen from +z.
    """
    _check_fit(fit)
    theta_s, phi_s, tau = _unpack(params)
    base = _zero_azimuth_coeffs(fit, theta_s, tau)
    orders, partner = _partner_and_order(fit.bands)
    c = np.cos(orders * phi_s)[:, None]
    s = np.sin(orders * phi_s)[:, None]
    return base * c + base[partner] * s


def skylight_sh_grad(params, fit):
    """Derivatives of :func:`skylight_sh` w.r.t. (theta_s, phi_s, turbidity), each (49, 3)."""
    _check_fit(fit)
    theta_s, phi_s, tau = _unpack(params)
    orders, partner = _partner_and_order(fit.bands)
    c = np.cos(orders * phi_s)[:, None]
    s = np.sin(orders * phi_s)[:, None]
    m = orders[:, None].astype(float)
    base = _zero_azimuth_coeffs(fit, theta_s, tau)
    d_theta = _zero_azimuth_coeffs(fit, theta_s, tau, d_theta=True)
    d_tau = _zero_azimuth_coeffs(fit, theta_s, tau, d_tau=True)
    g_theta = d_theta * c + d_theta[partner] * s
    g_phi = -m * base * s + m * base[partner] * c
    g_tau = d_tau * c + d_tau[partner] * s
    return g_theta, g_phi, g_tau


def _unpack(params):
    if isinstance(params, SkylightParams):
        return params.theta_s, params.phi_s, params.turbidity
    theta_s, phi_s, tau = (float(v) for v in params)
    return theta_s, phi_s, tau


def check_bands(coeffs, bands):
    if len(coeffs) != sh.num_coeffs(bands):
        raise BandMismatchError(f"expected {sh.num_coeffs(bands)} coefficients, got {len(coeffs)}")
