"""Attention-based adaptive fusion of two feature streams.

Three pieces: (1) per-stream channel attention, a row-stochastic C x C
matrix of softmax-normalized channel similarities that reweights the channel
maps; (2) loss-adaptive stream weights, each stream's coefficient one minus the
softmax of the stream losses, so the stream currently doing better (smaller
loss) gets the larger weight; (3) an element-wise weighted sum of the two
attended feature maps. Attention is computed per sample, never across a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class StreamWeights:
    """Fusion coefficients (alpha) plus the losses that produced them.

    For two streams the alphas sum to 1 and each lies in (0, 1). Alphas are
    allocation coefficients, not learned parameters: no gradient flows
    through them.
    """

    alpha: tuple[float, float]
    losses: tuple[float, float]
    epoch: int = 0

    def __post_init__(self):
        if abs(self.alpha[0] + self.alpha[1] - 1.0) > 1e-12:
            raise ValueError(f"stream weights must sum to 1, got {self.alpha}")


def stream_weights(loss_rgb: float, loss_residual: float, epoch: int = 0) -> StreamWeights:
    """alpha_i = 1 - softmax(losses)_i; smaller loss -> larger weight."""
    l1, l2 = float(loss_rgb), float(loss_residual)
    for v in (l1, l2):
        if math.isnan(v) or math.isinf(v):
            raise ValueError(f"stream loss must be finite, got {v}")
        if v < 0:
            raise ValueError(f"stream loss must be nonnegative, got {v}")
    m = max(l1, l2)
    e1, e2 = math.exp(l1 - m), math.exp(l2 - m)
    z = e1 + e2
    a1 = 1.0 - e1 / z
    a2 = 1.0 - e2 / z
    # two-stream case: a1 + a2 = 2 - 1 = 1 up to rounding; renormalize the
    # residual rounding so the invariant holds to 1e-12
    s = a1 + a2
    return StreamWeights(alpha=(a1 / s, a2 / s), losses=(l1, l2), epoch=epoch)


def channel_attention(f: Tensor, skip_connection: bool = False) -> tuple[Tensor, Tensor]:
    """Reweight channel maps by their softmax-normalized Gram similarities.

    f is (C, H, W) for one sample or (B, C, H, W) for a batch (each sample
    attended independently). Flattening the spatial dims to N gives a C x N
    matrix; its Gram G = f f^T row-softmaxes into the attention matrix M, and
    the attended feature is M^T f reshaped back. Returns (f_prime, M); M is
    (C, C) or (B, C, C), every row summing to 1.

    With skip_connection the input is added back: f + M^T f.
    """
    if f.ndim not in (3, 4):
        raise ValueError(f"channel_attention expects (C,H,W) or (B,C,H,W), got {f.shape}")
    c, h, w = f.shape[-3:]
    if c < 1 or h * w < 1:
        raise ValueError(f"degenerate feature shape {f.shape}")
    if f.ndim == 3:
        flat = ad.reshape(f, (c, h * w))
        gram = ad.matmul(flat, ad.transpose(flat))
    else:
        b = f.shape[0]
        flat = ad.reshape(f, (b, c, h * w))
        gram = ad.matmul(flat, ad.transpose(flat, (0, 2, 1)))
    m = ad.softmax(gram, axis=-1)
    mt = ad.transpose(m) if f.ndim == 3 else ad.transpose(m, (0, 2, 1))
    attended = ad.reshape(ad.matmul(mt, flat), f.shape)
    if skip_connection:
        attended = ad.add(f, attended)
    return attended, m


def fuse(f_rgb_prime: Tensor, f_gr_prime: Tensor, weights: StreamWeights) -> Tensor:
    """alpha1 * f_rgb' + alpha2 * f_gr', differentiable in both streams."""
    if f_rgb_prime.shape != f_gr_prime.shape:
        raise ValueError(f"fuse: shape mismatch {f_rgb_prime.shape} vs {f_gr_prime.shape}")
    a1, a2 = weights.alpha
    return ad.add(ad.mul(f_rgb_prime, a1), ad.mul(f_gr_prime, a2))
