"""Image and environment-map file formats.

Linear radiance images are (H, W, 3) float arrays with row 0 at the top.
8-bit outputs apply display encoding ``v ** (1/2.2)`` after clamping to [0, 1];
8-bit inputs are linearized with ``v ** 2.2``.
"""

import re
from pathlib import Path

import numpy as np

GAMMA = 2.2


def to_display(img):
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    return np.round(255.0 * img ** (1.0 / GAMMA)).astype(np.uint8)


def from_display(img8):
    return (np.asarray(img8, dtype=float) / 255.0) ** GAMMA


def save_raw(img, path):
    """Little-endian float32, row-major, RGB interleaved; no header."""
    np.ascontiguousarray(img, dtype="<f4").tofile(path)


def load_raw(path, height, width):
    data = np.fromfile(path, dtype="<f4")
    if data.size != height * width * 3:
        raise ValueError(f"{path}: {data.size} floats, expected {height * width * 3}")
    return data.reshape(height, width, 3).astype(float)


def save_ppm(img, path):
    img8 = to_display(img)
    h, w = img8.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img8[..., :3]).tobytes())


def _ppm_tokens(data, count):
    tokens, pos = [], 0
    pattern = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")
    for _ in range(count):
        m = pattern.match(data, pos)
        if not m:
            raise ValueError("truncated PPM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos + 1


def load_ppm(path, linearize=True):
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _ppm_tokens(data, 4)
    if magic != b"P6":
        raise ValueError(f"{path}: only binary P6 PPM is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM is supported")
    img8 = np.frombuffer(data[pos : pos + w * h * 3], dtype=np.uint8)
    if img8.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    img8 = img8.reshape(h, w, 3)
    return from_display(img8) if linearize else img8.astype(float) / 255.0


def save_pfm(img, path):
    """Portable FloatMap, little-endian, rows stored bottom-to-top as the format requires."""
    img = np.asarray(img, dtype="<f4")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"PF\n%d %d\n-1.0\n" % (w, h))
        fh.write(np.ascontiguousarray(img[::-1]).tobytes())


def load_pfm(path):
    data = Path(path).read_bytes()
    (magic, w, h, scale), pos = _ppm_tokens(data, 4)
    if magic not in (b"PF", b"Pf"):
        raise ValueError(f"{path}: not a PFM file")
    channels = 3 if magic == b"PF" else 1
    w, h, scale = int(w), int(h), float(scale)
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data[pos : pos + 4 * w * h * channels], dtype=dtype)
    if arr.size != w * h * channels:
        raise ValueError(f"{path}: truncated PFM data")
    arr = arr.reshape(h, w, channels)[::-1].astype(float)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr


def save_png(img, path):
    from PIL import Image

    Image.fromarray(to_display(img)).save(path)


def save_image(img, path):
    """Dispatch on suffix: .png, .ppm, .pfm or .raw/.f32."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        save_png(img, path)
    elif suffix == ".ppm":
        save_ppm(img, path)
    elif suffix == ".pfm":
        save_pfm(img, path)
    elif suffix in (".raw", ".f32"):
        save_raw(img, path)
    else:
        raise ValueError(f"unsupported image format {suffix!r}")
    return path


def load_environment(path):
    """Equirectangular radiance map from PFM (linear) or 8-bit PPM (linearized)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return load_pfm(path)
    if suffix == ".ppm":
        return load_ppm(path)
    raise ValueError(f"unsupported environment format {suffix!r}")
