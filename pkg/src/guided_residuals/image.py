"""Planar image container, lossless raster I/O, and integral-image box filtering.

Images are stored as (channels, height, width) float64 planes with intensities
nominally in [0, 1]. Loading maps 8-bit codes to [0, 1]; intermediate filter
outputs may leave that range and are clamped only when saved. Channel order for
3-channel images is R, G, B.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass
class Image:
    """Multi-channel raster of real intensities.

    data has shape (channels, height, width); channels is 1 (grayscale) or
    3 (R, G, B planes).
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"image data must be (channels, height, width), got shape {self.data.shape}")
        c, h, w = self.data.shape
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if h == 0 or w == 0:
            raise ValueError("zero-dimension image")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]

    def copy(self) -> "Image":
        return Image(self.data.copy())


def content_hash(img: Image) -> str:
    """SHA-256 of the raw float64 buffer plus shape; identifies exact content."""
    h = hashlib.sha256()
    h.update(str(img.data.shape).encode())
    h.update(np.ascontiguousarray(img.data).tobytes())
    return h.hexdigest()


class IntegralImage:
    """Summed-area table of one channel plane.

    The table has shape (height+1, width+1) with a zero first row/column, so a
    rectangle sum needs four lookups regardless of rectangle size. Accumulation
    is double precision to keep cancellation error below 1e-9 on unit-interval
    planes.
    """

    def __init__(self, plane: np.ndarray):
        plane = np.asarray(plane, dtype=np.float64)
        if plane.ndim != 2:
            raise ValueError(f"plane must be 2-D, got shape {plane.shape}")
        h, w = plane.shape
        self.height = h
        self.width = w
        self.table = np.zeros((h + 1, w + 1), dtype=np.float64)
        np.cumsum(plane, axis=0, out=self.table[1:, 1:])
        np.cumsum(self.table[1:, 1:], axis=1, out=self.table[1:, 1:])

    def rect_sum(self, top: int, left: int, bottom: int, right: int) -> float:
        """Sum over pixels [top..bottom] x [left..right], inclusive coordinates."""
        if not (0 <= top <= bottom < self.height and 0 <= left <= right < self.width):
            raise ValueError("rectangle out of bounds")
        t = self.table
        return float(t[bottom + 1, right + 1] - t[top, right + 1] - t[bottom + 1, left] + t[top, left])

    def window_sums(self, radius: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel sums and in-bounds pixel counts for square windows.

        The window at pixel (y, x) spans [y-radius, y+radius] x [x-radius,
        x+radius] intersected with the plane. Returns (sums, counts), each of
        plane shape.
        """
        h, w = self.height, self.width
        ys = np.arange(h)
        xs = np.arange(w)
        y0 = np.maximum(ys - radius, 0)
        y1 = np.minimum(ys + radius, h - 1)
        x0 = np.maximum(xs - radius, 0)
        x1 = np.minimum(xs + radius, w - 1)
        t = self.table
        sums = (
            t[np.ix_(y1 + 1, x1 + 1)]
            - t[np.ix_(y0, x1 + 1)]
            - t[np.ix_(y1 + 1, x0)]
            + t[np.ix_(y0, x0)]
        )
        counts = np.outer(y1 - y0 + 1, x1 - x0 + 1).astype(np.float64)
        return sums, counts


def box_mean(plane: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2*radius+1)-square window clipped to the plane.

    Borders use shrinking-window normalization: the sum over in-bounds window
    pixels divided by their count, so constant planes are exact fixed points.
    Runtime is independent of radius (integral-image rectangle sums).
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"plane must be 2-D, got shape {plane.shape}")
    h, w = plane.shape
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius >= min(h, w):
        raise ValueError(f"radius {radius} out of range for {h}x{w} plane")
    if radius == 0:
        return plane.copy()
    sums, counts = IntegralImage(plane).window_sums(radius)
    return sums / counts


# ---------------------------------------------------------------------------
# File I/O: binary PNM (P5 grayscale / P6 RGB) natively, PNG through Pillow.
# ---------------------------------------------------------------------------

def _quantize(data: np.ndarray) -> np.ndarray:
    # Clamp to [0, 1], scale by 255, round half to even. Exact codes k/255
    # survive a second round-trip bit-identically.
    return np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: Image, path) -> None:
    """Write a lossless 8-bit raster.

    `.png` uses Pillow; every other path gets binary PNM, P5 for 1 channel or
    P6 for 3 (chosen by channel count, whatever the extension says; the
    loader goes by magic bytes). Intensities are clamped to [0, 1] before
    quantization with round-half-to-even.
    """
    path = str(path)
    codes = _quantize(img.data)
    if path.lower().endswith(".png"):
        _save_png(codes, path)
        return
    try:
        with open(path, "wb") as fh:
            if img.channels == 1:
                fh.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
                fh.write(codes[0].tobytes())
            else:
                fh.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
                fh.write(np.ascontiguousarray(codes.transpose(1, 2, 0)).tobytes())
    except OSError as e:
        raise OSError(f"cannot write image to {path}: {e}") from e


def load_image(path) -> Image:
    """Read a raster file into [0, 1] intensities.

    Supports binary PNM (P5/P6) and, when Pillow is installed, PNG. Grayscale
    becomes 1 channel, color becomes R, G, B planes.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(2)
            fh.seek(0)
            if head in (b"P5", b"P6"):
                return _load_pnm(fh, path)
    except FileNotFoundError:
        raise FileNotFoundError(f"image file not found: {path}")
    except IsADirectoryError:
        raise OSError(f"not a file: {path}")
    if path.lower().endswith(".png"):
        return _load_png(path)
    raise ValueError(f"unsupported image format: {path}")


def _read_pnm_token(fh) -> bytes:
    # Tokens are separated by whitespace; '#' starts a comment to end of line.
    token = b""
    while True:
        ch = fh.read(1)
        if ch == b"":
            raise ValueError("truncated PNM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def _load_pnm(fh, path: str) -> Image:
    magic = _read_pnm_token(fh)
    width = int(_read_pnm_token(fh))
    height = int(_read_pnm_token(fh))
    maxval = int(_read_pnm_token(fh))
    if width <= 0 or height <= 0:
        raise ValueError(f"zero-dimension image: {path}")
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"unsupported PNM maxval {maxval} in {path}")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    raw = fh.read(n)
    if len(raw) != n:
        raise ValueError(f"truncated PNM payload in {path}")
    codes = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        planes = codes.reshape(1, height, width)
    else:
        planes = codes.reshape(height, width, 3).transpose(2, 0, 1)
    return Image(planes / float(maxval))


def _save_png(codes: np.ndarray, path: str) -> None:
    try:
        from PIL import Image as PILImage
    except ImportError as e:
        raise ValueError("PNG support requires Pillow (pip install pillow)") from e
    if codes.shape[0] == 1:
        pil = PILImage.fromarray(codes[0], mode="L")
    else:
        pil = PILImage.fromarray(np.ascontiguousarray(codes.transpose(1, 2, 0)), mode="RGB")
    pil.save(path)


def _load_png(path: str) -> Image:
    try:
        from PIL import Image as PILImage
    except ImportError as e:
        raise ValueError("PNG support requires Pillow (pip install pillow)") from e
    with PILImage.open(path) as pil:
        if pil.mode not in ("L", "RGB"):
            pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"zero-dimension image: {path}")
    if arr.ndim == 2:
        planes = arr[None, :, :]
    else:
        planes = arr.transpose(2, 0, 1)
    return Image(planes / 255.0)
