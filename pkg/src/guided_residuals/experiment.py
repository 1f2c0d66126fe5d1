"""Experiment orchestration: dataset preparation, single training runs, and
the ablation / fusion-comparison grids.

A run is described by four switches: the evaluation scenario, whether the
residual stream uses guided residuals or the fixed high-pass baseline,
whether fusion uses channel attention with adaptive stream weights or a
parameter-free baseline, and the experiment seed. Dataset content is shared
across runs through a cache so repeated seeds pay only for training.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict, field

import numpy as np

from .data import DatasetConfig, generate_split
from .guided_filter import GuidedFilterParams
from .image import Image
from .model import (DualStreamModel, ModelConfig, TrainSettings, train, evaluate)
from .residuals import extract_guided_residual

BASELINE_FUSIONS = ("max", "min", "sum", "concat")


def resolve_fusion(use_afm: bool, fusion_method: str | None) -> str:
    """Map the (use_afm, fusion_method) switches onto one model fusion mode."""
    if use_afm:
        if fusion_method not in (None, "afm"):
            raise ValueError(
                f"use_afm is set, fusion_method must be 'afm' or omitted, got {fusion_method!r}")
        return "afm"
    if fusion_method is None:
        return "sum"
    if fusion_method not in BASELINE_FUSIONS:
        raise ValueError(
            f"without attention fusion_method must be one of {BASELINE_FUSIONS}, "
            f"got {fusion_method!r}")
    return fusion_method


@dataclass(frozen=True)
class RunSpec:
    scenario: str = "raw"
    use_mte: bool = True
    use_afm: bool = True
    fusion_method: str | None = None      # None resolves to afm or sum
    seed: int = 0
    skip_connection: bool = False
    freeze_epoch_weights: bool = False

    def resolved_fusion(self) -> str:
        return resolve_fusion(self.use_afm, self.fusion_method)


@dataclass
class StreamSet:
    x_rgb: np.ndarray       # (N, C, H, W)
    x_res: np.ndarray
    labels: np.ndarray


@dataclass
class PreparedData:
    train: StreamSet
    test: StreamSet
    n_classes: int


@dataclass
class RunResult:
    scenario: str
    use_mte: bool
    use_afm: bool
    fusion_method: str
    seed: int
    accuracy: float
    accuracy_rgb: float
    accuracy_res: float
    auc: float | None
    per_class: list[float]
    final_alpha: tuple[float, float]
    final_loss: float
    train_seconds: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["final_alpha"] = list(self.final_alpha)
        return d


def extract_stream(images: np.ndarray, use_mte: bool,
                   guided: GuidedFilterParams | None = None) -> np.ndarray:
    """Second-stream input for a stack: guided residuals when use_mte is set,
    otherwise the raw images themselves (the trace extractor ablated away)."""
    if not use_mte:
        return images
    out = np.empty(images.shape, dtype=np.float32)
    for i in range(images.shape[0]):
        img = Image(np.asarray(images[i], dtype=np.float64))
        out[i] = extract_guided_residual(img, guided).data
    return out


class DataCache:
    """Scenario-keyed cache of generated splits plus a one-slot residual memo.

    Images are stored float32 to keep several scenarios resident; training
    promotes each batch to float64.
    """

    def __init__(self, dataset: DatasetConfig, guided: GuidedFilterParams | None = None):
        self.dataset = dataset
        self.guided = guided or GuidedFilterParams()
        self._splits: dict[str, tuple] = {}
        self._stream_key = None
        self._stream_value: PreparedData | None = None

    def _split_arrays(self, scenario: str):
        if scenario not in self._splits:
            cfg_kwargs = asdict(self.dataset)
            cfg_kwargs["scenarios"] = (scenario,)
            cfg = DatasetConfig(**cfg_kwargs)
            tr = generate_split(cfg, "train")
            te = generate_split(cfg, "test")
            self._splits[scenario] = (
                tr.images.astype(np.float32), tr.labels,
                te.images.astype(np.float32), te.labels,
            )
        return self._splits[scenario]

    def get(self, scenario: str, use_mte: bool) -> PreparedData:
        key = (scenario, use_mte)
        if self._stream_key == key:
            return self._stream_value
        tr_x, tr_y, te_x, te_y = self._split_arrays(scenario)
        prepared = PreparedData(
            train=StreamSet(tr_x, extract_stream(tr_x, use_mte, self.guided), tr_y),
            test=StreamSet(te_x, extract_stream(te_x, use_mte, self.guided), te_y),
            n_classes=self.dataset.n_classes,
        )
        self._stream_key = key
        self._stream_value = prepared
        return prepared


def run_experiment(spec: RunSpec, data: PreparedData,
                   settings: TrainSettings | None = None,
                   model_config: ModelConfig | None = None) -> RunResult:
    """Train one model with the run's switches and evaluate on the test split."""
    fusion = spec.resolved_fusion()
    if model_config is None:
        model_config = ModelConfig(
            n_classes=data.n_classes,
            in_channels=data.train.x_rgb.shape[1],
            image_size=data.train.x_rgb.shape[2],
            fusion_method=fusion,
            skip_connection=spec.skip_connection,
            freeze_epoch_weights=spec.freeze_epoch_weights,
        )
    if settings is None:
        settings = TrainSettings(seed=spec.seed)
    elif settings.seed != spec.seed:
        settings = TrainSettings(**{**asdict(settings), "seed": spec.seed})
    model = DualStreamModel(model_config, seed=spec.seed)
    t0 = time.perf_counter()
    log = train(model, data.train.x_rgb, data.train.x_res, data.train.labels, settings)
    seconds = time.perf_counter() - t0
    report = evaluate(model, data.test.x_rgb, data.test.x_res, data.test.labels)
    return RunResult(
        scenario=spec.scenario,
        use_mte=spec.use_mte,
        use_afm=spec.use_afm,
        fusion_method=fusion,
        seed=spec.seed,
        accuracy=report.accuracy,
        accuracy_rgb=report.accuracy_rgb,
        accuracy_res=report.accuracy_res,
        auc=report.auc,
        per_class=[float(v) for v in report.per_class],
        final_alpha=log.final_alpha,
        final_loss=log.epochs[-1].loss_total if log.epochs else float("nan"),
        train_seconds=seconds,
    )


@dataclass
class GridResult:
    runs: list[RunResult] = field(default_factory=list)

    def mean_accuracy(self, **match) -> float:
        accs = [r.accuracy for r in self.runs
                if all(getattr(r, k) == v for k, v in match.items())]
        if not accs:
            raise ValueError(f"no runs match {match}")
        return float(np.mean(accs))

    def rows(self) -> list[dict]:
        return [r.as_dict() for r in self.runs]


def ablation_grid(cache: DataCache, scenarios: tuple[str, ...], seeds: tuple[int, ...],
                  settings: TrainSettings | None = None,
                  combos: tuple[tuple[bool, bool], ...] = ((True, True), (True, False),
                                                           (False, True), (False, False)),
                  verbose: bool = False) -> GridResult:
    """Train every (use_mte, use_afm) combination per scenario and seed.

    The no-attention rows fall back to sum fusion. Iteration is grouped by
    (scenario, use_mte) so the residual memo in the cache is hit per group.
    """
    grid = GridResult()
    for scenario in scenarios:
        for use_mte in (True, False):
            active = [c for c in combos if c[0] == use_mte]
            if not active:
                continue
            data = cache.get(scenario, use_mte)
            for _, use_afm in active:
                for seed in seeds:
                    spec = RunSpec(scenario=scenario, use_mte=use_mte,
                                   use_afm=use_afm, seed=seed)
                    result = run_experiment(spec, data, settings)
                    grid.runs.append(result)
                    if verbose:
                        print(f"mte={use_mte} afm={use_afm} {scenario} seed={seed}: "
                              f"acc={result.accuracy:.4f} ({result.train_seconds:.1f}s)")
    return grid


def fusion_grid(cache: DataCache, scenario: str, seeds: tuple[int, ...],
                methods: tuple[str, ...] = ("afm",) + BASELINE_FUSIONS,
                settings: TrainSettings | None = None,
                verbose: bool = False) -> GridResult:
    """Compare fusion methods with guided residuals fixed on."""
    grid = GridResult()
    data = cache.get(scenario, use_mte=True)
    for method in methods:
        use_afm = method == "afm"
        for seed in seeds:
            spec = RunSpec(scenario=scenario, use_mte=True, use_afm=use_afm,
                           fusion_method=None if use_afm else method, seed=seed)
            result = run_experiment(spec, data, settings)
            grid.runs.append(result)
            if verbose:
                print(f"fusion={method} {scenario} seed={seed}: "
                      f"acc={result.accuracy:.4f} ({result.train_seconds:.1f}s)")
    return grid
