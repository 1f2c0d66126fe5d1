"""Residual extraction: guided and fixed high-pass, plus region contrast."""

import numpy as np
import pytest

from guided_residuals.guided_filter import GuidedFilterParams, guided_filter
from guided_residuals.image import Image, content_hash
from guided_residuals.residuals import (HIGHPASS_KERNEL, ResidualImage,
                                        extract_guided_residual,
                                        extract_highpass_residual,
                                        region_contrast, visualize_residual)


def test_guided_residual_definition():
    rng = np.random.default_rng(20)
    img = Image(rng.random((3, 12, 12)))
    params = GuidedFilterParams(radius=2, epsilon=1e-2)
    res = extract_guided_residual(img, params)
    q = guided_filter(img, img, params)
    assert np.array_equal(res.data, np.abs(img.data - q.data))
    assert res.method == "guided"
    assert res.params == params
    assert res.source_hash == content_hash(img)


def test_guided_residual_nonnegative_and_zero_on_constant():
    img = Image(np.full((3, 10, 10), 0.42))
    res = extract_guided_residual(img)
    assert np.all(res.data >= 0)
    assert res.data.max() <= 1e-12


def test_residual_image_rejects_negative_data():
    with pytest.raises(ValueError):
        ResidualImage(data=np.full((1, 2, 2), -0.1), method="guided", source_hash="x")


def test_highpass_impulse_response():
    plane = np.zeros((1, 9, 9))
    plane[0, 4, 4] = 1.0
    res = extract_highpass_residual(Image(plane))
    # center sees the full kernel weight, the 4-neighborhood a quarter of it
    assert res.data[0, 4, 4] == 1.0
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        assert res.data[0, 4 + dy, 4 + dx] == 0.25
    assert res.data[0, 3, 3] == 0.0
    assert res.method == "highpass"
    assert res.params is None


def test_highpass_kernel_is_zero_sum():
    assert HIGHPASS_KERNEL.sum() == 0.0
    assert HIGHPASS_KERNEL[1, 1] == 1.0


def test_highpass_constant_is_zero_everywhere():
    # replicate padding keeps the border rows constant too
    res = extract_highpass_residual(Image(np.full((3, 8, 8), 0.6)))
    assert res.data.max() == 0.0


def test_highpass_kills_linear_ramp_interior():
    xs = np.linspace(0.0, 1.0, 16)
    ramp = np.tile(xs, (16, 1))[None]
    res = extract_highpass_residual(Image(ramp))
    # second difference of a linear ramp vanishes away from the borders
    assert np.max(res.data[:, 1:-1, 1:-1]) < 1e-15
    assert np.max(res.data[:, :, [0, -1]]) > 0.0


def test_guided_residual_concentrates_on_high_frequency():
    # a smooth field barely registers; adding a checkerboard lights it up
    y, x = np.mgrid[0:32, 0:32]
    smooth = 0.5 + 0.2 * np.sin(2 * np.pi * 0.01 * x) * np.cos(2 * np.pi * 0.008 * y)
    base = extract_guided_residual(Image(smooth[None])).data.mean()
    checker = smooth + 0.1 * ((x + y) % 2 * 2 - 1)
    spiked = extract_guided_residual(Image(checker[None])).data.mean()
    assert spiked > 5 * base


def test_visualize_residual_scales_and_clamps():
    res = ResidualImage(data=np.array([[[0.05, 0.5]]]), method="guided", source_hash="x")
    vis = visualize_residual(res, gain=4.0)
    assert np.allclose(vis.data, [[[0.2, 1.0]]])
    with pytest.raises(ValueError):
        visualize_residual(res, gain=0.0)


def test_region_contrast_basics():
    data = np.full((1, 8, 8), 0.01)
    data[0, 2:5, 2:5] = 0.05
    res = ResidualImage(data=data, method="guided", source_hash="x")
    contrast = region_contrast(res, (2, 2, 4, 4))
    assert abs(contrast - 5.0) < 1e-12
    # off-target region only sees background
    assert abs(region_contrast(res, (6, 6, 7, 7)) - (0.01 / data[0, ~np.zeros((8, 8), bool)].mean())) > 0


def test_region_contrast_edge_cases():
    quiet = ResidualImage(data=np.zeros((1, 4, 4)), method="guided", source_hash="x")
    assert region_contrast(quiet, (0, 0, 1, 1)) == 1.0
    hot = ResidualImage(data=np.eye(4)[None], method="guided", source_hash="x")
    assert region_contrast(hot, (0, 0, 1, 1)) > 0
    lit = ResidualImage(data=np.pad(np.ones((2, 2)), 1)[None], method="guided", source_hash="x")
    assert region_contrast(lit, (1, 1, 2, 2)) == np.inf
    with pytest.raises(ValueError):
        region_contrast(quiet, (0, 0, 3, 3))     # covers everything
    with pytest.raises(ValueError):
        region_contrast(quiet, (0, 0, 4, 2))     # out of bounds
