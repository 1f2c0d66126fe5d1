"""Synthetic dataset: content generator, trace injection, degradations,
manifest round-trips, and the premises the learning task rests on."""

import os

import numpy as np
import pytest

from guided_residuals.data import (SCENARIOS, TRACE_KINDS, DatasetConfig,
                                   apply_scenario, build_dataset,
                                   degrade_jpeg_like, degrade_mean_filter,
                                   filter_scenario, generate_base,
                                   generate_split, inject_trace,
                                   jpeg_quant_table, load_arrays,
                                   load_manifest, make_sample)
from guided_residuals.image import Image, box_mean
from guided_residuals.residuals import extract_guided_residual, region_contrast

REGION = (20, 20, 43, 43)


def band_energy(img: Image, lo: float) -> float:
    """Spectral energy at absolute frequency >= lo cycles/px on either axis."""
    e = 0.0
    for c in range(img.channels):
        p = np.abs(np.fft.fft2(img.plane(c))) ** 2
        fy = np.fft.fftfreq(img.height)[:, None]
        fx = np.fft.fftfreq(img.width)[None, :]
        e += p[np.maximum(np.abs(fy), np.abs(fx)) >= lo].sum()
    return e


# ------------------------------------------------------------- base content

def test_generate_base_deterministic_and_in_range():
    a = generate_base(123)
    b = generate_base(123)
    assert np.array_equal(a.data, b.data)
    assert a.data.shape == (3, 64, 64)
    assert a.data.min() >= 0.0 and a.data.max() <= 1.0


def test_generate_base_seeds_differ():
    a = generate_base(1)
    b = generate_base(2)
    frac = np.mean(np.abs(a.data - b.data) > 1 / 255)
    assert frac >= 0.5


def test_generate_base_spectrally_smooth():
    # at least 90% of non-DC energy below a quarter of Nyquist (0.125 c/px)
    for seed in range(8):
        img = generate_base(seed)
        for c in range(3):
            p = np.abs(np.fft.fft2(img.plane(c))) ** 2
            p[0, 0] = 0.0
            fy = np.fft.fftfreq(64)[:, None]
            fx = np.fft.fftfreq(64)[None, :]
            low = p[np.maximum(np.abs(fy), np.abs(fx)) < 0.125].sum()
            assert low / p.sum() >= 0.9


def test_generate_base_size_and_channels():
    img = generate_base(5, size=32, channels=1)
    assert img.data.shape == (1, 32, 32)


# ------------------------------------------------------------ trace injection

def test_inject_trace_validation():
    img = generate_base(0)
    with pytest.raises(ValueError):
        inject_trace(img, "none", 0.1, REGION)
    with pytest.raises(ValueError):
        inject_trace(img, "sparkles", 0.1, REGION)
    for amp in (0.0, -0.1, 0.21):
        with pytest.raises(ValueError):
            inject_trace(img, "checkerboard", amp, REGION)
    inject_trace(img, "checkerboard", 0.2, REGION)       # boundary amplitude ok
    with pytest.raises(ValueError):
        inject_trace(img, "checkerboard", 0.1, (60, 0, 64, 10))
    with pytest.raises(ValueError):
        inject_trace(img, "checkerboard", 0.1, (10, 10, 5, 20))


def test_inject_trace_confined_to_region():
    img = generate_base(7)
    out = inject_trace(img, "periodic_highfreq", 0.1, REGION)
    top, left, bottom, right = REGION
    mask = np.zeros((64, 64), dtype=bool)
    mask[top:bottom + 1, left:right + 1] = True
    assert np.array_equal(out.data[:, ~mask], img.data[:, ~mask])
    assert np.any(out.data[:, mask] != img.data[:, mask])


def test_checkerboard_on_constant_alternates_exactly():
    img = Image(np.full((3, 16, 16), 0.5))
    out = inject_trace(img, "checkerboard", 0.1, (4, 4, 11, 11))
    block = out.data[:, 4:12, 4:12]
    ys, xs = np.mgrid[4:12, 4:12]
    expected = np.where((ys + xs) % 2 == 0, 0.6, 0.4)
    assert np.array_equal(block, np.broadcast_to(expected, block.shape))


def test_checkerboard_alignment_is_absolute():
    # the same absolute pixel gets the same sign no matter where the region is
    img = Image(np.full((1, 16, 16), 0.5))
    a = inject_trace(img, "checkerboard", 0.1, (0, 0, 11, 11))
    b = inject_trace(img, "checkerboard", 0.1, (4, 4, 15, 15))
    overlap_a = a.data[0, 4:12, 4:12]
    overlap_b = b.data[0, 4:12, 4:12]
    assert np.array_equal(overlap_a, overlap_b)


def test_periodic_trace_deterministic_without_rng():
    img = generate_base(9)
    a = inject_trace(img, "periodic_highfreq", 0.08, REGION)
    b = inject_trace(img, "periodic_highfreq", 0.08, REGION)
    assert np.array_equal(a.data, b.data)
    # the canonical sinusoid lives near Nyquist
    delta = a.data[0] - img.data[0]
    p = np.abs(np.fft.fft2(delta)) ** 2
    fy = np.fft.fftfreq(64)[:, None]
    fx = np.fft.fftfreq(64)[None, :]
    high = p[np.maximum(np.abs(fy), np.abs(fx)) >= 0.3].sum()
    assert high / p.sum() > 0.9


def test_blockdct_trace_sits_on_block_boundaries():
    img = Image(np.full((1, 32, 32), 0.5))
    out = inject_trace(img, "blockdct_artifact", 0.05, (8, 8, 23, 23))
    delta = np.abs(out.data[0] - 0.5)
    ys, xs = np.mgrid[0:32, 0:32]
    boundary = (ys % 8 == 0) | (ys % 8 == 7) | (xs % 8 == 0) | (xs % 8 == 7)
    assert np.all(delta[~boundary] == 0.0)
    inside = delta[8:24, 8:24]
    assert inside.max() == pytest.approx(0.05)


def test_inject_trace_clips_to_unit_range():
    img = Image(np.full((1, 16, 16), 0.95))
    out = inject_trace(img, "checkerboard", 0.2, (0, 0, 15, 15))
    assert out.data.max() <= 1.0
    assert out.data.min() >= 0.0


def test_trace_residual_contrast():
    # on a flat background the residual lights up only inside the region
    flat = Image(np.full((3, 64, 64), 0.5))
    traced = inject_trace(flat, "checkerboard", 0.1, REGION)
    contrast = region_contrast(extract_guided_residual(traced), REGION)
    assert contrast >= 3.0
    # textured content lowers the figure but the region must still dominate
    for seed in range(6):
        img = generate_base(2000 + seed)
        for kind in TRACE_KINDS[1:]:
            traced = inject_trace(img, kind, 0.1, REGION)
            assert region_contrast(extract_guided_residual(traced), REGION) > 1.5


# ---------------------------------------------------------------- degradation

def test_quant_table_scaling():
    # quality 50 reproduces the base table; lower quality scales steps up
    t50 = jpeg_quant_table(50)
    assert t50[0, 0] == 16 and t50[7, 7] == 99
    t10 = jpeg_quant_table(10)
    assert np.all(t10 >= t50)
    assert t10.max() <= 255
    t95 = jpeg_quant_table(95)
    assert t95.min() >= 1
    assert np.all(t95 <= t50)


def test_jpeg_constant_unchanged():
    for q in (10, 60, 95):
        img = Image(np.full((3, 24, 24), 0.37))
        out = degrade_jpeg_like(img, q)
        assert np.max(np.abs(out.data - img.data)) <= 1e-6


def test_jpeg_quality95_nearly_lossless():
    for seed in range(5):
        img = generate_base(seed)
        out = degrade_jpeg_like(img, 95)
        assert np.abs(out.data - img.data).mean() <= 0.02


def test_jpeg_attenuates_faint_near_nyquist_energy():
    # a faint checkerboard projects below half the top quantization step
    # (about 79 at quality 60), so its blocks round to zero and the energy
    # above the top DCT basis frequency (7/16 c/px) collapses; stronger
    # amplitudes snap to the step and survive, which the dataset relies on
    for seed in range(8):
        img = generate_base(4000 + seed)
        traced = inject_trace(img, "checkerboard", 0.02, (12, 12, 51, 51))
        before = band_energy(traced, 0.46)
        after = band_energy(degrade_jpeg_like(traced, 60), 0.46)
        assert after <= 0.5 * before


def test_jpeg_error_grows_as_quality_drops():
    img = generate_base(77)
    traced = inject_trace(img, "periodic_highfreq", 0.1, REGION)
    errors = [np.abs(degrade_jpeg_like(traced, q).data - traced.data).mean()
              for q in (90, 60, 30, 10)]
    assert all(a <= b for a, b in zip(errors, errors[1:]))


def test_jpeg_quality_bounds():
    img = generate_base(0, size=16)
    with pytest.raises(ValueError):
        degrade_jpeg_like(img, 9)
    with pytest.raises(ValueError):
        degrade_jpeg_like(img, 96)
    degrade_jpeg_like(img, 10)
    degrade_jpeg_like(img, 95)


def test_jpeg_handles_non_multiple_of_eight():
    img = Image(np.random.default_rng(3).random((3, 20, 27)))
    out = degrade_jpeg_like(img, 60)
    assert out.data.shape == (3, 20, 27)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_mean_filter_is_box_mean():
    img = generate_base(8, size=32)
    out = degrade_mean_filter(img, 5)
    for c in range(3):
        assert np.array_equal(out.plane(c), box_mean(img.plane(c), 2))
    with pytest.raises(ValueError):
        degrade_mean_filter(img, 4)
    with pytest.raises(ValueError):
        degrade_mean_filter(img, 1)


def test_mean_filter_impulse_plateau():
    plane = np.zeros((1, 15, 15))
    plane[0, 7, 7] = 1.0
    out = degrade_mean_filter(Image(plane), 5)
    assert np.allclose(out.data[0, 5:10, 5:10], 1 / 25)


def test_apply_scenario_dispatch():
    img = generate_base(4, size=32)
    assert np.array_equal(apply_scenario(img, "raw").data, img.data)
    assert np.array_equal(apply_scenario(img, "jp60", jpeg_quality=60).data,
                          degrade_jpeg_like(img, 60).data)
    assert np.array_equal(apply_scenario(img, "me5", mean_kernel=5).data,
                          degrade_mean_filter(img, 5).data)
    with pytest.raises(ValueError):
        apply_scenario(img, "zoom")


# ------------------------------------------------------------------- datasets

def test_dataset_config_validation():
    with pytest.raises(ValueError):
        DatasetConfig(n_classes=3)
    with pytest.raises(ValueError):
        DatasetConfig(n_train_per_class=0)
    with pytest.raises(ValueError):
        DatasetConfig(scenarios=("raw", "zip"))
    with pytest.raises(ValueError):
        DatasetConfig(amplitude_low=0.0)
    with pytest.raises(ValueError):
        DatasetConfig(amplitude_low=0.1, amplitude_high=0.05)
    with pytest.raises(ValueError):
        DatasetConfig(amplitude_high=0.3)


def test_split_seeds_disjoint_and_deterministic():
    cfg = DatasetConfig(n_train_per_class=4, n_test_per_class=3, n_classes=4,
                        scenarios=("raw",), image_size=32, seed=2)
    tr = generate_split(cfg, "train")
    te = generate_split(cfg, "test")
    assert set(tr.seeds).isdisjoint(te.seeds)
    assert len(set(tr.seeds)) == len(tr.seeds)
    tr2 = generate_split(cfg, "train")
    assert np.array_equal(tr.images, tr2.images)
    with pytest.raises(ValueError):
        generate_split(cfg, "validation")


def test_trace_kind_follows_label():
    cfg4 = DatasetConfig(n_train_per_class=3, n_test_per_class=1, n_classes=4,
                         scenarios=("raw",), image_size=32)
    tr = generate_split(cfg4, "train")
    for label, kind in zip(tr.labels, tr.kinds):
        assert kind == TRACE_KINDS[label]
        assert (kind == "none") == (label == 0)
    cfg2 = DatasetConfig(n_train_per_class=6, n_test_per_class=1, n_classes=2,
                         scenarios=("raw",), image_size=32)
    tr2 = generate_split(cfg2, "train")
    fake_kinds = [k for k, l in zip(tr2.kinds, tr2.labels) if l == 1]
    assert sorted(set(fake_kinds)) == sorted(TRACE_KINDS[1:])
    assert all(k == "none" for k, l in zip(tr2.kinds, tr2.labels) if l == 0)


def test_scenarios_share_sample_content():
    cfg = DatasetConfig(image_size=32)
    raw = make_sample(42, "checkerboard", "raw", cfg)
    me5 = make_sample(42, "checkerboard", "me5", cfg)
    assert np.array_equal(me5.data, degrade_mean_filter(raw, cfg.mean_kernel).data)
    jp = make_sample(42, "checkerboard", "jp60", cfg)
    assert np.array_equal(jp.data, degrade_jpeg_like(raw, cfg.jpeg_quality).data)


def test_generate_split_is_balanced_over_scenarios():
    cfg = DatasetConfig(n_train_per_class=2, n_test_per_class=1, n_classes=4,
                        scenarios=("raw", "me5"), image_size=32)
    tr = generate_split(cfg, "train")
    assert len(tr) == 2 * 4 * 2
    assert np.bincount(tr.labels).tolist() == [4, 4, 4, 4]
    assert tr.scenarios.count("raw") == tr.scenarios.count("me5") == 8
    sub = filter_scenario(tr, "me5")
    assert len(sub) == 8 and set(sub.scenarios) == {"me5"}
    with pytest.raises(ValueError):
        filter_scenario(tr, "jp60")


def test_build_dataset_roundtrip(tmp_path):
    cfg = DatasetConfig(n_train_per_class=2, n_test_per_class=1, n_classes=4,
                        scenarios=("raw", "jp60"), image_size=32, seed=5)
    out = str(tmp_path / "ds")
    train_man, test_man = build_dataset(cfg, out)
    assert len(train_man.entries) == 2 * 4 * 2
    assert len(test_man.entries) == 1 * 4 * 2

    # manifest lines carry exactly five tab-separated fields
    lines = [l for l in open(os.path.join(out, "train.tsv"))
             if l.strip() and not l.startswith("#")]
    assert len(lines) == 16
    assert all(len(l.rstrip("\n").split("\t")) == 5 for l in lines)

    loaded = load_manifest(os.path.join(out, "train.tsv"))
    assert loaded.split == "train"
    assert loaded.global_seed == 5
    assert [e.path for e in loaded.entries] == [e.path for e in train_man.entries]
    arrays = load_arrays(loaded)
    reference = generate_split(cfg, "train")
    assert arrays.images.shape == reference.images.shape
    assert np.max(np.abs(arrays.images - reference.images)) <= 0.5 / 255 + 1e-12
    assert np.array_equal(arrays.labels, reference.labels)
    assert arrays.kinds == reference.kinds
    assert arrays.seeds == reference.seeds

    # regeneration is byte-identical
    out2 = str(tmp_path / "ds2")
    build_dataset(cfg, out2)
    assert open(os.path.join(out, "train.tsv")).read() == open(os.path.join(out2, "train.tsv")).read()
    sample = train_man.entries[0].path
    assert open(os.path.join(out, sample), "rb").read() == open(os.path.join(out2, sample), "rb").read()


def test_load_manifest_rejects_malformed_lines(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("# split=train seed=0\nimages/x.ppm\t1\tcheckerboard\traw\n")
    with pytest.raises(ValueError, match="malformed"):
        load_manifest(str(path))


# ------------------------------------------------------- learning-task premises

def test_linear_probe_separates_clean_binary_task():
    # a ridge classifier on raw residual pixels must already crack the clean
    # binary problem; if this fails the model experiments are ill-posed
    cfg = DatasetConfig(n_train_per_class=150, n_test_per_class=50, n_classes=2,
                        scenarios=("raw",), seed=11)
    tr = generate_split(cfg, "train")
    te = generate_split(cfg, "test")

    def residual_features(arrays):
        return np.stack([extract_guided_residual(Image(arrays.images[i])).data.ravel()
                         for i in range(len(arrays))])

    xtr = np.hstack([residual_features(tr), np.ones((len(tr), 1))])
    xte = np.hstack([residual_features(te), np.ones((len(te), 1))])
    y = tr.labels * 2.0 - 1.0
    lam = 10.0
    alpha = np.linalg.solve(xtr @ xtr.T + lam * np.eye(len(xtr)), y)
    predictions = ((xte @ (xtr.T @ alpha)) > 0).astype(int)
    assert np.mean(predictions == te.labels) >= 0.9


def test_degradation_lowers_residual_contrast():
    # laundering premise: both degradations wash traces out of the residual
    # on at least 90% of trace-injected samples
    rng = np.random.default_rng(14)
    drop_jp, drop_me, n = 0, 0, 0
    for i in range(45):
        kind = TRACE_KINDS[1 + i % 3]
        img = generate_base(6000 + i)
        amp = rng.uniform(0.05, 0.12)
        traced = inject_trace(img, kind, amp, REGION)
        c_raw = region_contrast(extract_guided_residual(traced), REGION)
        c_jp = region_contrast(extract_guided_residual(degrade_jpeg_like(traced, 60)), REGION)
        c_me = region_contrast(extract_guided_residual(degrade_mean_filter(traced, 5)), REGION)
        drop_jp += c_jp < c_raw
        drop_me += c_me < c_raw
        n += 1
    assert drop_jp / n >= 0.9
    assert drop_me / n >= 0.9
