"""Procedural dataset generation: smooth synthetic content, injected
manipulation-trace analogs, and the degradation operators used to emulate the
raw / jp60 / me5 evaluation scenarios.

Content images are sums of low-frequency sinusoids and soft-edged ellipses, so
nearly all spectral energy sits well below the trace frequencies. Traces are
additive structured high-frequency patterns confined to a region: a parity
checkerboard, a near-Nyquist sinusoid, or an 8x8 block-boundary step pattern.
Degradations are a blockwise-DCT quantization (JPEG-like, no entropy coding)
and plain mean filtering. Everything is a pure function of its seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .image import Image, box_mean, save_image, load_image

TRACE_KINDS = ("none", "checkerboard", "periodic_highfreq", "blockdct_artifact")
SCENARIOS = ("raw", "jp60", "me5")

_TEST_SEED_OFFSET = 5_000_000          # keeps train/test sample seeds disjoint
_SEED_STRIDE = 10_000_000              # per global seed


# ---------------------------------------------------------------------------
# base content
# ---------------------------------------------------------------------------

def generate_base(seed: int, size: int = 64, channels: int = 3) -> Image:
    """Smooth random content image: low-frequency sinusoids + soft ellipses.

    Deterministic per seed. Values lie in [0, 1] with >= 90% of the non-DC
    spectral energy below one quarter of the Nyquist frequency.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)

    def wave_field(n_waves, max_freq):
        f = np.zeros((size, size))
        for _ in range(n_waves):
            fy, fx = rng.uniform(-max_freq, max_freq, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            f += amp * np.sin(2 * np.pi * (fy * ys + fx * xs) + phase)
        return f

    shared = wave_field(5, 0.05)
    ellipses = np.zeros((size, size))
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0.15 * size, 0.85 * size, size=2)
        ry, rx = rng.uniform(0.12 * size, 0.35 * size, size=2)
        theta = rng.uniform(0, np.pi)
        dy, dx = ys - cy, xs - cx
        u = dy * np.cos(theta) + dx * np.sin(theta)
        v = -dy * np.sin(theta) + dx * np.cos(theta)
        dist = np.sqrt((u / ry) ** 2 + (v / rx) ** 2)
        # logistic falloff ~3 px wide: soft edges keep energy low-frequency
        edge_width = 3.0 / min(ry, rx)
        ellipses += rng.uniform(-1.0, 1.0) / (1.0 + np.exp((dist - 1.0) / edge_width))

    planes = np.empty((channels, size, size))
    for c in range(channels):
        chan = shared + 0.6 * ellipses + 0.35 * wave_field(2, 0.04)
        lo, hi = chan.min(), chan.max()
        span = hi - lo if hi > lo else 1.0
        planes[c] = 0.1 + 0.8 * (chan - lo) / span
    return Image(np.clip(planes, 0.0, 1.0))


# ---------------------------------------------------------------------------
# trace injection
# ---------------------------------------------------------------------------

def inject_trace(img: Image, kind: str, amplitude: float,
                 region: tuple[int, int, int, int],
                 rng: np.random.Generator | None = None) -> Image:
    """Add a structured high-frequency pattern inside region, clamped to [0, 1].

    region is (top, left, bottom, right) inclusive. Patterns are evaluated on
    absolute image coordinates, so block grids and parities stay aligned
    regardless of region placement. rng only varies the sinusoid frequency and
    phase; without it a fixed canonical pattern is used.
    """
    if kind not in TRACE_KINDS or kind == "none":
        raise ValueError(f"trace kind must be one of {TRACE_KINDS[1:]}, got {kind!r}")
    if not 0.0 < amplitude <= 0.2:
        raise ValueError(f"amplitude must be in (0, 0.2], got {amplitude}")
    top, left, bottom, right = region
    h, w = img.height, img.width
    if not (0 <= top <= bottom < h and 0 <= left <= right < w):
        raise ValueError(f"region {region} out of bounds for {h}x{w}")

    ys, xs = np.mgrid[0:h, 0:w]
    if kind == "checkerboard":
        pattern = np.where((ys + xs) % 2 == 0, amplitude, -amplitude)
    elif kind == "periodic_highfreq":
        if rng is None:
            fy, fx, phase = 0.40, 0.44, 0.0
        else:
            fy, fx = rng.uniform(0.35, 0.47, size=2)
            phase = rng.uniform(0, 2 * np.pi)
        pattern = amplitude * np.sin(2 * np.pi * (fy * ys + fx * xs) + phase)
    else:  # blockdct_artifact
        def boundary_step(v):
            return np.where(v % 8 == 7, 1.0, np.where(v % 8 == 0, -1.0, 0.0))
        pattern = amplitude * np.clip(boundary_step(ys) + boundary_step(xs), -1.0, 1.0)

    mask = np.zeros((h, w))
    mask[top:bottom + 1, left:right + 1] = 1.0
    out = img.data + (pattern * mask)[None, :, :]
    return Image(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# degradations
# ---------------------------------------------------------------------------

def _dct_matrix_8() -> np.ndarray:
    n = 8
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * x + 1) * k / (2 * n))
    d[0, :] /= np.sqrt(2.0)
    return d


_DCT8 = _dct_matrix_8()

_LUMA_QUANT = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def jpeg_quant_table(quality: int) -> np.ndarray:
    """Standard luminance table scaled for a quality factor."""
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((_LUMA_QUANT * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def degrade_jpeg_like(img: Image, quality: int) -> Image:
    """Blockwise DCT quantization per channel (simulated compression).

    Each 8x8 block is transformed, AC coefficients are snapped to multiples
    of the quality-scaled quantization step, and the block is transformed
    back. The DC coefficient passes through, so flat blocks (and therefore
    constant images) survive unchanged. No entropy coding or subsampling.
    """
    if not 10 <= quality <= 95:
        raise ValueError(f"quality must be in [10, 95], got {quality}")
    table = jpeg_quant_table(quality)
    h, w = img.height, img.width
    pad_y = (-h) % 8
    pad_x = (-w) % 8
    out = np.empty_like(img.data)
    for c in range(img.channels):
        plane = img.plane(c) * 255.0 - 128.0
        if pad_y or pad_x:
            plane = np.pad(plane, ((0, pad_y), (0, pad_x)), mode="edge")
        hp, wp = plane.shape
        blocks = plane.reshape(hp // 8, 8, wp // 8, 8).transpose(0, 2, 1, 3)
        coeff = _DCT8 @ blocks @ _DCT8.T
        dc = coeff[..., 0, 0].copy()
        coeff = np.round(coeff / table) * table
        coeff[..., 0, 0] = dc
        rec = _DCT8.T @ coeff @ _DCT8
        rec = rec.transpose(0, 2, 1, 3).reshape(hp, wp)[:h, :w]
        out[c] = np.clip((rec + 128.0) / 255.0, 0.0, 1.0)
    return Image(out)


def degrade_mean_filter(img: Image, kernel: int) -> Image:
    """kernel x kernel mean filtering (odd kernel >= 3), shared border rule
    with box_mean."""
    if kernel < 3 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and >= 3, got {kernel}")
    radius = (kernel - 1) // 2
    out = np.stack([box_mean(img.plane(c), radius) for c in range(img.channels)])
    return Image(out)


def apply_scenario(img: Image, scenario: str, jpeg_quality: int = 60, mean_kernel: int = 5) -> Image:
    if scenario == "raw":
        return img
    if scenario == "jp60":
        return degrade_jpeg_like(img, jpeg_quality)
    if scenario == "me5":
        return degrade_mean_filter(img, mean_kernel)
    raise ValueError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    """Counts, trace statistics, and degradation scenarios for one dataset."""

    n_train_per_class: int = 500
    n_test_per_class: int = 100
    n_classes: int = 4                       # 2 (real/fake) or 4 (real + 3 kinds)
    scenarios: tuple[str, ...] = ("raw",)
    amplitude_low: float = 0.05
    amplitude_high: float = 0.12
    jpeg_quality: int = 60
    mean_kernel: int = 5
    image_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_classes not in (2, 4):
            raise ValueError(f"n_classes must be 2 or 4, got {self.n_classes}")
        if self.n_train_per_class < 1 or self.n_test_per_class < 1:
            raise ValueError("class sizes must be >= 1")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValueError(f"unknown scenario {s!r}")
        if not 0.0 < self.amplitude_low <= self.amplitude_high <= 0.2:
            raise ValueError("amplitude range must satisfy 0 < low <= high <= 0.2")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    trace_kind: str
    scenario: str
    seed: int


@dataclass
class DatasetManifest:
    split: str
    global_seed: int
    entries: list[ManifestEntry] = field(default_factory=list)
    root: str = "."


@dataclass
class SplitArrays:
    """In-memory dataset: images (N, C, H, W) float64 in [0, 1] plus labels."""

    images: np.ndarray
    labels: np.ndarray
    kinds: list[str]
    scenarios: list[str]
    seeds: list[int]

    def __len__(self):
        return self.labels.size


def _sample_seed(global_seed: int, split: str, class_idx: int, index: int) -> int:
    base = global_seed * _SEED_STRIDE + (0 if split == "train" else _TEST_SEED_OFFSET)
    return base + class_idx * 100_000 + index


def _kind_for(label: int, index: int, n_classes: int) -> str:
    if n_classes == 4:
        return TRACE_KINDS[label]
    return "none" if label == 0 else TRACE_KINDS[1 + index % 3]


def make_sample(sample_seed: int, kind: str, scenario: str, config: DatasetConfig) -> Image:
    """One deterministic sample: base content, optional trace, degradation.

    The sample seed fixes content and trace placement; the scenario only
    selects the degradation, so the same seed across scenarios shares the
    underlying clean image.
    """
    img = generate_base(sample_seed, size=config.image_size)
    if kind != "none":
        rng = np.random.default_rng(np.random.SeedSequence([int(sample_seed), 0x7ACE]))
        amplitude = rng.uniform(config.amplitude_low, config.amplitude_high)
        size = config.image_size
        side = int(rng.integers(max(8, size * 3 // 8), max(9, size * 5 // 8)))
        top = int(rng.integers(0, size - side + 1))
        left = int(rng.integers(0, size - side + 1))
        img = inject_trace(img, kind, amplitude, (top, left, top + side - 1, left + side - 1), rng=rng)
    return apply_scenario(img, scenario, config.jpeg_quality, config.mean_kernel)


def generate_split(config: DatasetConfig, split: str) -> SplitArrays:
    """Generate a whole split in memory, balanced over classes and scenarios."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    n_per = config.n_train_per_class if split == "train" else config.n_test_per_class
    images, labels, kinds, scens, seeds = [], [], [], [], []
    for scenario in config.scenarios:
        for label in range(config.n_classes):
            for i in range(n_per):
                seed = _sample_seed(config.seed, split, label, i)
                kind = _kind_for(label, i, config.n_classes)
                img = make_sample(seed, kind, scenario, config)
                images.append(img.data)
                labels.append(label)
                kinds.append(kind)
                scens.append(scenario)
                seeds.append(seed)
    return SplitArrays(
        images=np.stack(images),
        labels=np.asarray(labels, dtype=np.int64),
        kinds=kinds,
        scenarios=scens,
        seeds=seeds,
    )


def build_dataset(config: DatasetConfig, out_dir: str) -> tuple[DatasetManifest, DatasetManifest]:
    """Write both splits to disk and return their manifests (train, test)."""
    images_dir = os.path.join(out_dir, "images")
    try:
        os.makedirs(images_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create dataset directory {out_dir}: {e}") from e
    manifests = []
    for split in ("train", "test"):
        arrays = generate_split(config, split)
        manifest = DatasetManifest(split=split, global_seed=config.seed, root=out_dir)
        for i in range(len(arrays)):
            name = f"{split}_{arrays.scenarios[i]}_c{arrays.labels[i]}_{i:05d}.ppm"
            rel = os.path.join("images", name)
            save_image(Image(arrays.images[i]), os.path.join(out_dir, rel))
            manifest.entries.append(ManifestEntry(
                path=rel,
                label=int(arrays.labels[i]),
                trace_kind=arrays.kinds[i],
                scenario=arrays.scenarios[i],
                seed=arrays.seeds[i],
            ))
        save_manifest(manifest, os.path.join(out_dir, f"{split}.tsv"))
        manifests.append(manifest)
    return manifests[0], manifests[1]


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    """One record per line: path, label, trace kind, scenario, seed
    (tab-separated); metadata rides in '#' comment lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# split={manifest.split} seed={manifest.global_seed}\n")
        for e in manifest.entries:
            fh.write(f"{e.path}\t{e.label}\t{e.trace_kind}\t{e.scenario}\t{e.seed}\n")


def load_manifest(path: str) -> DatasetManifest:
    root = os.path.dirname(os.path.abspath(path))
    split = "train"
    seed = 0
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if token.startswith("split="):
                        split = token[6:]
                    elif token.startswith("seed="):
                        seed = int(token[5:])
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"malformed manifest line: {line!r}")
            entries.append(ManifestEntry(
                path=parts[0], label=int(parts[1]), trace_kind=parts[2],
                scenario=parts[3], seed=int(parts[4]),
            ))
    return DatasetManifest(split=split, global_seed=seed, entries=entries, root=root)


def load_arrays(manifest: DatasetManifest) -> SplitArrays:
    """Load every manifest entry from disk into one array stack."""
    if not manifest.entries:
        raise ValueError("empty manifest")
    images = []
    for e in manifest.entries:
        images.append(load_image(os.path.join(manifest.root, e.path)).data)
    return SplitArrays(
        images=np.stack(images),
        labels=np.asarray([e.label for e in manifest.entries], dtype=np.int64),
        kinds=[e.trace_kind for e in manifest.entries],
        scenarios=[e.scenario for e in manifest.entries],
        seeds=[e.seed for e in manifest.entries],
    )


def filter_scenario(arrays: SplitArrays, scenario: str) -> SplitArrays:
    idx = [i for i, s in enumerate(arrays.scenarios) if s == scenario]
    if not idx:
        raise ValueError(f"no samples with scenario {scenario!r}")
    sel = np.asarray(idx)
    return SplitArrays(
        images=arrays.images[sel],
        labels=arrays.labels[sel],
        kinds=[arrays.kinds[i] for i in idx],
        scenarios=[arrays.scenarios[i] for i in idx],
        seeds=[arrays.seeds[i] for i in idx],
    )
