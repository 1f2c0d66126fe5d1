"""Edge-preserving guided filtering.

The filter output q is a local linear transform of a guidance image: within
each square window, q = a * I + b, where (a, b) minimize the squared error to
the input p subject to a ridge penalty epsilon on a. Per-pixel coefficients
are window averages (a_bar, b_bar) over all windows containing the pixel. With
a flat guidance window the solution collapses to the window mean (a = 0); near
strong guidance edges a stays close to 1 and the edge survives.

Every window statistic is a `box_mean`, so the cost per pixel is independent
of the window radius. Channels are filtered independently: channel i of p is
guided by channel i of the guidance image (self-guided when guide is p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Image, box_mean


@dataclass(frozen=True)
class GuidedFilterParams:
    """Window half-side (radius) and ridge regularizer (epsilon).

    epsilon is dimensionless on [0, 1]-scaled intensities: window variances
    well above epsilon preserve structure, well below get smoothed away.
    """

    radius: int = 2
    epsilon: float = 1e-2

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class WindowStats:
    """Per-pixel window statistics, one (C, H, W) stack each.

    mu and var are mean/variance of the guidance, p_mean the mean of the
    input, ip_mean the mean of guide*input. var is clamped at 0 to absorb
    floating-point cancellation.
    """

    mu: np.ndarray
    var: np.ndarray
    p_mean: np.ndarray
    ip_mean: np.ndarray


@dataclass
class CoefficientMaps:
    """Per-window linear coefficients and their window averages.

    a and b are the per-window fits; a_bar and b_bar are their box means,
    i.e. the per-pixel coefficients actually applied. For a constant channel,
    a_bar is identically 0 and b_bar the constant.
    """

    a: np.ndarray
    b: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray


def _check_pair(p: Image, guide: Image) -> None:
    if p.data.shape != guide.data.shape:
        raise ValueError(
            f"input/guidance dimension mismatch: {p.data.shape} vs {guide.data.shape}"
        )


def window_stats(p: Image, guide: Image, params: GuidedFilterParams) -> WindowStats:
    """Window means/variances feeding the coefficient fit."""
    _check_pair(p, guide)
    r = params.radius
    mu = np.empty_like(guide.data)
    var = np.empty_like(guide.data)
    p_mean = np.empty_like(p.data)
    ip_mean = np.empty_like(p.data)
    for c in range(p.channels):
        i_pl = guide.plane(c)
        p_pl = p.plane(c)
        mu[c] = box_mean(i_pl, r)
        p_mean[c] = box_mean(p_pl, r)
        ip_mean[c] = box_mean(i_pl * p_pl, r)
        var[c] = np.maximum(box_mean(i_pl * i_pl, r) - mu[c] * mu[c], 0.0)
    return WindowStats(mu=mu, var=var, p_mean=p_mean, ip_mean=ip_mean)


def fit_coefficients(stats: WindowStats, params: GuidedFilterParams) -> CoefficientMaps:
    """Per-window ridge fit, then window-average the coefficient planes."""
    a = (stats.ip_mean - stats.mu * stats.p_mean) / (stats.var + params.epsilon)
    b = stats.p_mean - a * stats.mu
    a_bar = np.empty_like(a)
    b_bar = np.empty_like(b)
    for c in range(a.shape[0]):
        a_bar[c] = box_mean(a[c], params.radius)
        b_bar[c] = box_mean(b[c], params.radius)
    return CoefficientMaps(a=a, b=b, a_bar=a_bar, b_bar=b_bar)


def guided_filter(p: Image, guide: Image | None = None,
                  params: GuidedFilterParams | None = None) -> Image:
    """Filter p using guide; without a guide the filter is self-guided.

    Returns unclamped real values; on in-range inputs the output stays close
    to [0, 1] but is not forced there.
    """
    if guide is None:
        guide = p
    if params is None:
        params = GuidedFilterParams()
    _check_pair(p, guide)
    stats = window_stats(p, guide, params)
    coeffs = fit_coefficients(stats, params)
    return Image(coeffs.a_bar * guide.data + coeffs.b_bar)
