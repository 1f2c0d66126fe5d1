"""Two-stream convolutional classifier with attention-based fusion.

One stream sees the color image, the other a residual image that carries the
high-frequency manipulation traces. Each stream is a small stack of strided
convolutions ending in a feature map; an auxiliary head per stream yields a
stream loss, and the fused head classifies the combined features. Fusion is
either channel attention with loss-adaptive stream weights or one of the
parameter-free baselines (max, min, sum, concat).

Everything runs on the local reverse-mode tape in float64, so training is
deterministic for a given seed and small enough to gradient-check end to end.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .fusion import StreamWeights, stream_weights, channel_attention, fuse
from .metrics import accuracy, confusion_matrix, per_class_accuracy, auc_rank

FUSION_METHODS = ("afm", "max", "min", "sum", "concat")


class TrainingDiverged(RuntimeError):
    """Raised when a loss becomes non-finite during training."""


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int = 4
    in_channels: int = 3
    image_size: int = 64
    conv_channels: tuple[int, int, int] = (8, 16, 16)
    kernel_size: int = 3
    fusion_method: str = "afm"
    skip_connection: bool = False          # add identity past channel attention
    freeze_epoch_weights: bool = False     # keep stream weights at 0.5/0.5

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.fusion_method not in FUSION_METHODS:
            raise ValueError(
                f"fusion_method must be one of {FUSION_METHODS}, got {self.fusion_method!r}")
        if len(self.conv_channels) != 3 or any(c < 1 for c in self.conv_channels):
            raise ValueError(f"conv_channels must be 3 positive ints, got {self.conv_channels}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError("kernel_size must be odd and >= 1")
        if self.image_size % 8 != 0 or self.image_size < 8:
            raise ValueError("image_size must be a positive multiple of 8")

    @property
    def uses_attention(self) -> bool:
        return self.fusion_method == "afm"


@dataclass
class ForwardOut:
    logits_fused: Tensor
    logits_rgb: Tensor
    logits_res: Tensor


@dataclass
class LossOut:
    total: Tensor
    fused: Tensor
    rgb: Tensor
    res: Tensor


class DualStreamModel:
    """Parameter container plus forward pass. Heads start at zero so the
    initial logits are uniform and the starting loss is ln(n_classes)."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.stream_alpha = (0.5, 0.5)
        # per-channel standardization, fitted on the training set; identity
        # until then so an untrained model is still well defined
        self.norm = {
            "rgb": (np.zeros(config.in_channels), np.ones(config.in_channels)),
            "res": (np.zeros(config.in_channels), np.ones(config.in_channels)),
        }
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xC0DE]))
        k = config.kernel_size
        for stream in ("rgb", "res"):
            cin = config.in_channels
            for i, cout in enumerate(config.conv_channels, start=1):
                fan_in = cin * k * k
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
                self._add(f"{stream}.conv{i}.w", w)
                self._add(f"{stream}.conv{i}.b", np.zeros(cout))
                cin = cout
        feat = config.conv_channels[-1]
        head_in = 2 * feat if config.fusion_method == "concat" else feat
        self._add("head.fused.w", np.zeros((head_in, config.n_classes)))
        self._add("head.fused.b", np.zeros(config.n_classes))
        for stream in ("rgb", "res"):
            self._add(f"head.{stream}.w", np.zeros((feat, config.n_classes)))
            self._add(f"head.{stream}.b", np.zeros(config.n_classes))

    def _add(self, name: str, value: np.ndarray):
        self.params[name] = Tensor(value, requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def fit_normalization(self, x_rgb: np.ndarray, x_res: np.ndarray) -> None:
        """Per-channel mean/std over a training stack, applied identically to
        both streams so their differences come from content, not scaling."""
        for key, x in (("rgb", x_rgb), ("res", x_res)):
            x = np.asarray(x, dtype=np.float64)
            mu = x.mean(axis=(0, 2, 3))
            sd = np.maximum(x.std(axis=(0, 2, 3)), 1e-8)
            self.norm[key] = (mu, sd)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.params.items()}
        state["meta.stream_alpha"] = np.asarray(self.stream_alpha, dtype=np.float64)
        for key, (mu, sd) in self.norm.items():
            state[f"meta.norm.{key}"] = np.stack([mu, sd])
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        meta_keys = {"meta.stream_alpha", "meta.norm.rgb", "meta.norm.res"}
        alpha = state.get("meta.stream_alpha")
        if alpha is not None:
            self.stream_alpha = (float(alpha[0]), float(alpha[1]))
        for key in ("rgb", "res"):
            packed = state.get(f"meta.norm.{key}")
            if packed is not None:
                self.norm[key] = (np.asarray(packed[0], dtype=np.float64),
                                  np.asarray(packed[1], dtype=np.float64))
        for name, p in self.params.items():
            if name not in state:
                raise ValueError(f"checkpoint is missing parameter {name!r}")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise ValueError(
                    f"checkpoint parameter {name!r} has shape {value.shape}, "
                    f"expected {p.data.shape}")
            p.data = value.copy()
        extra = set(state) - set(self.params) - meta_keys
        if extra:
            raise ValueError(f"checkpoint has unknown parameters: {sorted(extra)}")

    # -- forward ------------------------------------------------------------

    def _inputs(self, x_rgb: np.ndarray, x_res: np.ndarray) -> tuple[Tensor, Tensor]:
        x_rgb = np.asarray(x_rgb, dtype=np.float64)
        x_res = np.asarray(x_res, dtype=np.float64)
        if x_rgb.ndim == 3:
            x_rgb, x_res = x_rgb[None], x_res[None]
        if x_rgb.shape != x_res.shape or x_rgb.ndim != 4:
            raise ValueError(
                f"stream shapes must match as (B, C, H, W), got {x_rgb.shape} and {x_res.shape}")
        out = []
        for key, x in (("rgb", x_rgb), ("res", x_res)):
            mu, sd = self.norm[key]
            out.append(Tensor((x - mu[:, None, None]) / sd[:, None, None],
                              requires_grad=False))
        return out[0], out[1]

    def _stream(self, x: Tensor, stream: str) -> Tensor:
        h = x
        for i in range(1, 4):
            h = ad.conv2d(h, self.params[f"{stream}.conv{i}.w"],
                          self.params[f"{stream}.conv{i}.b"], stride=2, padding=1)
            h = ad.relu(h)
        return h

    def _fuse(self, f_rgb: Tensor, f_res: Tensor, alpha: tuple[float, float]) -> Tensor:
        method = self.config.fusion_method
        if method == "afm":
            f_rgb_p, _ = channel_attention(f_rgb, skip_connection=self.config.skip_connection)
            f_res_p, _ = channel_attention(f_res, skip_connection=self.config.skip_connection)
            w = StreamWeights(alpha=alpha, losses=(0.0, 0.0), epoch=0)
            return fuse(f_rgb_p, f_res_p, w)
        if method == "max":
            return ad.maximum(f_rgb, f_res)
        if method == "min":
            return ad.minimum(f_rgb, f_res)
        if method == "sum":
            return ad.add(f_rgb, f_res)
        return ad.concat([f_rgb, f_res], axis=1)

    def forward(self, x_rgb: np.ndarray, x_res: np.ndarray,
                alpha: tuple[float, float] | None = None) -> ForwardOut:
        if alpha is None:
            alpha = self.stream_alpha
        t_rgb, t_res = self._inputs(x_rgb, x_res)
        f_rgb = self._stream(t_rgb, "rgb")
        f_res = self._stream(t_res, "res")
        fused = self._fuse(f_rgb, f_res, alpha)
        logits_fused = ad.linear(ad.global_avg_pool(fused),
                                 self.params["head.fused.w"], self.params["head.fused.b"])
        logits_rgb = ad.linear(ad.global_avg_pool(f_rgb),
                               self.params["head.rgb.w"], self.params["head.rgb.b"])
        logits_res = ad.linear(ad.global_avg_pool(f_res),
                               self.params["head.res.w"], self.params["head.res.b"])
        return ForwardOut(logits_fused, logits_rgb, logits_res)

    def forward_loss(self, x_rgb: np.ndarray, x_res: np.ndarray, labels: np.ndarray,
                     alpha: tuple[float, float] | None = None) -> LossOut:
        out = self.forward(x_rgb, x_res, alpha)
        l_fused = ad.cross_entropy(out.logits_fused, labels)
        l_rgb = ad.cross_entropy(out.logits_rgb, labels)
        l_res = ad.cross_entropy(out.logits_res, labels)
        total = ad.add(l_fused, ad.add(l_rgb, l_res))
        return LossOut(total=total, fused=l_fused, rgb=l_rgb, res=l_res)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 4
    batch_size: int = 64
    learning_rate: float = 5e-4
    lr_decay: float = 0.5                  # multiplied onto lr after each epoch
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning_rate must be > 0 and lr_decay in (0, 1]")


@dataclass
class EpochStats:
    epoch: int
    alpha: tuple[float, float]
    learning_rate: float
    loss_total: float
    loss_fused: float
    loss_rgb: float
    loss_res: float
    n_batches: int
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    final_alpha: tuple[float, float] = (0.5, 0.5)


def train(model: DualStreamModel, x_rgb: np.ndarray, x_res: np.ndarray,
          labels: np.ndarray, settings: TrainSettings | None = None) -> TrainLog:
    """Adam training loop with per-epoch loss-adaptive stream weights.

    Stream weights start at (0.5, 0.5) and are recomputed after each epoch
    from that epoch's mean stream losses, unless the model config freezes
    them. Raises TrainingDiverged the moment any loss goes non-finite.
    """
    if settings is None:
        settings = TrainSettings()
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if x_rgb.shape[0] != n or x_res.shape[0] != n:
        raise ValueError(f"got {x_rgb.shape[0]} images for {n} labels")
    model.fit_normalization(x_rgb, x_res)
    opt = ad.Adam(model.parameters(), lr=settings.learning_rate)
    log = TrainLog()
    alpha = (0.5, 0.5)
    prev_means = None
    for epoch in range(settings.epochs):
        if epoch > 0 and prev_means is not None and not model.config.freeze_epoch_weights:
            alpha = stream_weights(prev_means[2], prev_means[3], epoch=epoch).alpha
        t0 = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence([settings.seed, 0xE9, epoch]))
        order = rng.permutation(n)
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, n, settings.batch_size):
            idx = order[start:start + settings.batch_size]
            losses = model.forward_loss(x_rgb[idx], x_res[idx], labels[idx], alpha=alpha)
            values = (losses.total.item(), losses.fused.item(),
                      losses.rgb.item(), losses.res.item())
            if not all(np.isfinite(v) for v in values):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {n_batches}: "
                    f"total={values[0]!r}")
            opt.zero_grad()
            ad.backward(losses.total)
            opt.step()
            sums += values
            n_batches += 1
        means = sums / n_batches
        stats = EpochStats(
            epoch=epoch, alpha=alpha, learning_rate=opt.lr,
            loss_total=means[0], loss_fused=means[1],
            loss_rgb=means[2], loss_res=means[3],
            n_batches=n_batches, seconds=time.perf_counter() - t0,
        )
        log.epochs.append(stats)
        if settings.verbose:
            print(f"epoch {epoch}: loss {means[0]:.4f} "
                  f"(fused {means[1]:.4f} rgb {means[2]:.4f} res {means[3]:.4f}) "
                  f"alpha ({alpha[0]:.3f}, {alpha[1]:.3f}) lr {opt.lr:.2e} "
                  f"{stats.seconds:.1f}s")
        prev_means = means
        opt.decay_lr(settings.lr_decay)
    # the weights frozen for inference are the ones the final epoch trained with
    model.stream_alpha = alpha
    log.final_alpha = alpha
    return log


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    n: int
    accuracy: float
    accuracy_rgb: float
    accuracy_res: float
    confusion: np.ndarray
    per_class: np.ndarray
    auc: float | None
    mean_loss: float

    def summary(self) -> str:
        parts = [f"n={self.n}", f"acc={self.accuracy:.4f}",
                 f"acc_rgb={self.accuracy_rgb:.4f}", f"acc_res={self.accuracy_res:.4f}"]
        if self.auc is not None:
            parts.append(f"auc={self.auc:.4f}")
        parts.append(f"loss={self.mean_loss:.4f}")
        return " ".join(parts)


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def evaluate(model: DualStreamModel, x_rgb: np.ndarray, x_res: np.ndarray,
             labels: np.ndarray, batch_size: int = 128) -> EvalReport:
    """Batched inference with the model's trained stream weights."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    logits = np.empty((n, model.config.n_classes))
    logits_rgb = np.empty_like(logits)
    logits_res = np.empty_like(logits)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        out = model.forward(x_rgb[sl], x_res[sl])
        logits[sl] = out.logits_fused.data
        logits_rgb[sl] = out.logits_rgb.data
        logits_res[sl] = out.logits_res.data
        loss_sum += ad.cross_entropy(out.logits_fused, labels[sl]).item() * (sl.stop - sl.start)
    preds = logits.argmax(axis=1)
    confusion = confusion_matrix(preds, labels, model.config.n_classes)
    auc = None
    if model.config.n_classes == 2 and len(np.unique(labels)) == 2:
        auc = auc_rank(_softmax_np(logits)[:, 1], labels)
    return EvalReport(
        n=n,
        accuracy=accuracy(preds, labels),
        accuracy_rgb=accuracy(logits_rgb.argmax(axis=1), labels),
        accuracy_res=accuracy(logits_res.argmax(axis=1), labels),
        confusion=confusion,
        per_class=per_class_accuracy(confusion),
        auc=auc,
        mean_loss=loss_sum / n,
    )
