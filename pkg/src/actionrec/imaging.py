"""Image container, binary PPM/PGM I/O, colour conversions and filtering.

Samples are float64 in [0, 1], stored as an ``(height, width, channels)``
array. Every filter uses clamp-to-edge borders.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import FormatError, ShapeError, TruncatedFileError

COLORSPACES = ("RGB", "LAB", "YCrCb", "GRAY")

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# sRGB (D65) -> XYZ
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


@dataclass(frozen=True)
class ImageBuffer:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ShapeError(f"expected (H, W, 1|3) samples, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError("image must be at least 1x1")
        object.__setattr__(self, "data", data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    def channel(self, c):
        return self.data[:, :, c]


def _read_token(buf, pos):
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of header")
    return buf[start:pos], pos


def read_pnm(path):
    """Read a binary P5/P6 file; returns ``(raw integer array (H, W, C), maxval)``."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PGM/PPM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"{path}: malformed header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: invalid size {width}x{height}")
    if maxval not in (255, 65535):
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after header")
    pos += 1
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype(np.uint8)
    count = width * height * channels
    payload = buf[pos:pos + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise TruncatedFileError(
            f"{path}: payload has {len(payload)} bytes, header promises {count * dtype.itemsize}")
    raw = np.frombuffer(payload, dtype=dtype).astype(np.int64)
    return raw.reshape(height, width, channels), maxval


def write_pnm(path, raw, maxval=255):
    raw = np.asarray(raw)
    if raw.ndim == 2:
        raw = raw[:, :, None]
    height, width, channels = raw.shape
    magic = {1: "P5", 3: "P6"}.get(channels)
    if magic is None:
        raise ShapeError(f"cannot write {channels}-channel image")
    dtype = ">u2" if maxval > 255 else np.uint8
    header = f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(raw, dtype=dtype).tobytes())


def load_ppm(path):
    """Load a P6 (RGB) or P5 (gray) image with maxval 255."""
    raw, maxval = read_pnm(path)
    if maxval != 255:
        raise FormatError(f"{path}: images must use maxval 255, got {maxval}")
    return ImageBuffer(raw / 255.0)


def save_ppm(path, img):
    """Write P6 for 3-channel and P5 for 1-channel images."""
    raw = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    write_pnm(path, raw, 255)


def _srgb_to_lab(rgb):
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T / _D65_WHITE
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    # L in [0, 100] -> [0, 1]; a, b in [-127.5, 127.5] -> [0, 1] so that a = b = 0 maps to 0.5
    out = np.stack([L / 100.0, a / 255.0 + 0.5, b / 255.0 + 0.5], axis=-1)
    return np.clip(out, 0.0, 1.0)


def convert_colorspace(img, target):
    """Convert an RGB image to ``RGB``, ``LAB``, ``YCrCb`` or ``GRAY``.

    All outputs lie in [0, 1]: LAB as documented in ``_srgb_to_lab``; YCrCb
    follows BT.601 with chroma offset 0.5.
    """
    if target not in COLORSPACES:
        raise ValueError(f"unknown colour space {target!r}")
    if img.channels == 1:
        if target != "GRAY":
            raise ShapeError(f"cannot convert a gray image to {target}")
        return img
    rgb = img.data
    if target == "RGB":
        return img
    if target == "GRAY":
        return ImageBuffer(np.clip(rgb @ LUMA_WEIGHTS, 0.0, 1.0))
    if target == "LAB":
        return ImageBuffer(_srgb_to_lab(rgb))
    y = rgb @ LUMA_WEIGHTS
    cr = (rgb[..., 0] - y) * 0.713 + 0.5
    cb = (rgb[..., 2] - y) * 0.564 + 0.5
    return ImageBuffer(np.clip(np.stack([y, cr, cb], axis=-1), 0.0, 1.0))


def filter2d(img, kernel):
    """Convolve a single-channel image with an odd-sized kernel."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ShapeError(f"kernel dimensions must be odd, got {kernel.shape}")
    if img.channels != 1:
        raise ShapeError("filter2d expects a single-channel image")
    out = ndimage.convolve(img.data[:, :, 0], kernel, mode="nearest")
    return ImageBuffer(out)


def gaussian(img, sigma):
    return ImageBuffer(ndimage.gaussian_filter(img.data[:, :, 0], sigma, mode="nearest"))


def _gaussian_kernels(sigma, truncate=4.0):
    """Normalised 1-D Gaussian and its zero-sum second derivative."""
    r = max(1, int(truncate * sigma + 0.5))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    d2 = (x ** 2 - sigma ** 2) / sigma ** 4 * g
    d2 -= d2.mean()  # truncation leaves a small DC term; flat regions must respond with 0
    return g, d2


def laplacian_of_gaussian(img, sigma):
    """Separable LoG, d2/dx2 + d2/dy2 of the Gaussian-smoothed image."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g, d2 = _gaussian_kernels(sigma)
    a = img.data[:, :, 0]
    dyy = ndimage.correlate1d(ndimage.correlate1d(a, d2, axis=0, mode="nearest"), g, axis=1, mode="nearest")
    dxx = ndimage.correlate1d(ndimage.correlate1d(a, g, axis=0, mode="nearest"), d2, axis=1, mode="nearest")
    return ImageBuffer(dxx + dyy)
