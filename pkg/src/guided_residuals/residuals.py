"""Manipulation-trace extraction via guided residuals.

A forged image can be viewed as content plus a structured high-frequency
trace. Self-guided filtering keeps the content and flattens the trace, so the
absolute difference between an image and its filtered version isolates the
trace. A fixed Laplacian high-pass residual is included as the conventional
prediction-based baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .guided_filter import GuidedFilterParams, guided_filter
from .image import Image, content_hash

# Fixed high-pass baseline kernel, scaled so responses on [0, 1] inputs stay
# in [-1, 1]. A stand-in for tuned prediction filters; comparisons against it
# are directional.
HIGHPASS_KERNEL = np.array(
    [[0.0, -1.0, 0.0],
     [-1.0, 4.0, -1.0],
     [0.0, -1.0, 0.0]]
) / 4.0


@dataclass
class ResidualImage:
    """Nonnegative residual magnitudes plus extraction provenance."""

    data: np.ndarray                    # (C, H, W), every value >= 0
    method: str                         # "guided" or "highpass"
    source_hash: str
    params: GuidedFilterParams | None = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"residual data must be (C, H, W), got {self.data.shape}")
        if np.any(self.data < 0):
            raise ValueError("residual values must be nonnegative")

    def as_image(self) -> Image:
        return Image(self.data.copy())


def extract_guided_residual(p: Image, params: GuidedFilterParams | None = None) -> ResidualImage:
    """R = |p - q| with q the self-guided filter output."""
    if params is None:
        params = GuidedFilterParams()
    q = guided_filter(p, p, params)
    return ResidualImage(
        data=np.abs(p.data - q.data),
        method="guided",
        source_hash=content_hash(p),
        params=params,
    )


def extract_highpass_residual(p: Image) -> ResidualImage:
    """Absolute response of the fixed 3x3 high-pass kernel, replicate-padded."""
    padded = np.pad(p.data, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.zeros_like(p.data)
    for dy in range(3):
        for dx in range(3):
            k = HIGHPASS_KERNEL[dy, dx]
            if k != 0.0:
                out += k * padded[:, dy:dy + p.height, dx:dx + p.width]
    return ResidualImage(
        data=np.abs(out),
        method="highpass",
        source_hash=content_hash(p),
        params=None,
    )


def visualize_residual(r: ResidualImage, gain: float = 5.0) -> Image:
    """Gain-scaled residual clamped at 1, ready for saving."""
    if not gain > 0:
        raise ValueError(f"gain must be > 0, got {gain}")
    return Image(np.minimum(gain * r.data, 1.0))


def region_contrast(r: ResidualImage, region: tuple[int, int, int, int]) -> float:
    """Mean residual inside region divided by mean outside.

    region is (top, left, bottom, right), inclusive pixel coordinates.
    """
    top, left, bottom, right = region
    c, h, w = r.data.shape
    if not (0 <= top <= bottom < h and 0 <= left <= right < w):
        raise ValueError(f"region {region} out of bounds for {h}x{w}")
    mask = np.zeros((h, w), dtype=bool)
    mask[top:bottom + 1, left:right + 1] = True
    inside = float(r.data[:, mask].mean())
    if mask.all():
        raise ValueError("region covers the whole image; no outside pixels")
    outside = float(r.data[:, ~mask].mean())
    if outside == 0.0:
        return np.inf if inside > 0 else 1.0
    return inside / outside
