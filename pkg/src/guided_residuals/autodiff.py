"""Dense float64 tensors with reverse-mode differentiation.

Small and strict by design: no broadcasting beyond scalar-tensor, batch
dimensions of stacked matmuls must agree exactly, and every differentiable
operation is validated against central finite differences (see `grad_check`).
All arithmetic is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Tensor:
    """N-d array plus optional gradient buffer and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> "ComputationTape":
        return backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _result(data, parents, backward_fn) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires,
                  _parents=parents if requires else (),
                  _backward_fn=backward_fn if requires else None)


class ComputationTape:
    """Reverse-topological record of the graph below a root tensor.

    Built once per backward pass; `run_backward` visits every node exactly
    once, parents strictly after all their consumers.
    """

    def __init__(self, nodes):
        self.nodes = nodes  # topological order, root last

    @classmethod
    def from_root(cls, root: Tensor) -> "ComputationTape":
        nodes = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return cls(nodes)

    def run_backward(self, root: Tensor) -> None:
        root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def backward(root: Tensor) -> ComputationTape:
    """Reverse-mode pass from a scalar root; returns the tape used."""
    if root.data.size != 1:
        raise ValueError(f"backward requires a scalar root, got shape {root.data.shape}")
    tape = ComputationTape.from_root(root)
    tape.run_backward(root)
    return tape


# ---------------------------------------------------------------------------
# elementwise ops (same-shape or scalar operands only)
# ---------------------------------------------------------------------------

def _check_elementwise(a: Tensor, b: Tensor, op: str):
    a_scalar = a.data.ndim == 0
    b_scalar = b.data.ndim == 0
    if not a_scalar and not b_scalar and a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")
    return a_scalar, b_scalar


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    a_scalar, b_scalar = _check_elementwise(a, b, "add")

    def backward_fn(g):
        _accumulate(a, g.sum() if a_scalar and g.ndim > 0 else g)
        _accumulate(b, g.sum() if b_scalar and g.ndim > 0 else g)

    return _result(a.data + b.data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    a_scalar, b_scalar = _check_elementwise(a, b, "mul")

    def backward_fn(g):
        ga = g * b.data
        gb = g * a.data
        _accumulate(a, ga.sum() if a_scalar and ga.ndim > 0 else ga)
        _accumulate(b, gb.sum() if b_scalar and gb.ndim > 0 else gb)

    return _result(a.data * b.data, (a, b), backward_fn)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first argument."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"maximum: shape mismatch {a.data.shape} vs {b.data.shape}")
    mask = a.data >= b.data

    def backward_fn(g):
        _accumulate(a, g * mask)
        _accumulate(b, g * ~mask)

    return _result(np.maximum(a.data, b.data), (a, b), backward_fn)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient routes to the first argument."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"minimum: shape mismatch {a.data.shape} vs {b.data.shape}")
    mask = a.data <= b.data

    def backward_fn(g):
        _accumulate(a, g * mask)
        _accumulate(b, g * ~mask)

    return _result(np.minimum(a.data, b.data), (a, b), backward_fn)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def backward_fn(g):
        _accumulate(x, g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), backward_fn)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    old_shape = x.data.shape

    def backward_fn(g):
        _accumulate(x, g.reshape(old_shape))

    return _result(x.data.reshape(shape), (x,), backward_fn)


def transpose(x: Tensor, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.data.ndim)))
    inverse = np.argsort(axes)

    def backward_fn(g):
        _accumulate(x, g.transpose(inverse))

    return _result(x.data.transpose(axes), (x,), backward_fn)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tsum(x: Tensor) -> Tensor:
    x = _as_tensor(x)

    def backward_fn(g):
        _accumulate(x, np.full_like(x.data, float(g)))

    return _result(x.data.sum(), (x,), backward_fn)


def tmean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size

    def backward_fn(g):
        _accumulate(x, np.full_like(x.data, float(g) / n))

    return _result(x.data.mean(), (x,), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C) or (C, H, W) -> (C,): mean over spatial dims."""
    x = _as_tensor(x)
    if x.data.ndim not in (3, 4):
        raise ValueError(f"global_avg_pool expects 3-D or 4-D input, got {x.data.shape}")
    h, w = x.data.shape[-2:]

    def backward_fn(g):
        _accumulate(x, np.broadcast_to(g[..., None, None], x.data.shape) / (h * w))

    return _result(x.data.mean(axis=(-2, -1)), (x,), backward_fn)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; for stacked operands the batch dims must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: inner dims disagree {a.data.shape} @ {b.data.shape}")
    if a.data.ndim != b.data.ndim or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(f"matmul: batch dims disagree {a.data.shape} @ {b.data.shape}")

    def backward_fn(g):
        _accumulate(a, g @ b.data.swapaxes(-1, -2))
        _accumulate(b, a.data.swapaxes(-1, -2) @ g)

    return _result(a.data @ b.data, (a, b), backward_fn)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """(B, K) @ (K, M) plus per-output bias."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"linear: bad shapes x{x.data.shape} w{w.data.shape}")
    out = x.data @ w.data
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (w.data.shape[1],):
            raise ValueError(f"linear: bias shape {b.data.shape} != ({w.data.shape[1]},)")
        out = out + b.data

    def backward_fn(g):
        _accumulate(x, g @ w.data.T)
        _accumulate(w, x.data.T @ g)
        if b is not None:
            _accumulate(b, g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, backward_fn)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, hout: int, wout: int) -> np.ndarray:
    bsz, cin, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(bsz, cin, kh, kw, hout, wout),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(bsz, cin * kh * kw, hout * wout)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (B, Cin, H, W) (or (Cin, H, W)) with (Cout, Cin, kh, kw)."""
    x, w = _as_tensor(x), _as_tensor(w)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"conv2d: bad ranks x{x.data.shape} w{w.data.shape}")
    bsz, cin, h, wdt = xd.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: channel mismatch x has {cin}, w expects {cin_w}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    hout = (h + 2 * padding - kh) // stride + 1
    wout = (wdt + 2 * padding - kw) // stride + 1
    if hout < 1 or wout < 1:
        raise ValueError(f"conv2d: kernel {kh}x{kw} too large for input {h}x{wdt} with padding {padding}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = _im2col(xp, kh, kw, stride, hout, wout)          # (B, Cin*kh*kw, L)
    w2 = w.data.reshape(cout, -1)
    out = np.matmul(w2, cols)                                # (B, Cout, L)
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (cout,):
            raise ValueError(f"conv2d: bias shape {b.data.shape} != ({cout},)")
        out = out + b.data[:, None]
    out = out.reshape(bsz, cout, hout, wout)

    hp, wp = xp.shape[2], xp.shape[3]

    def backward_fn(g):
        g4 = g[None] if squeeze else g
        g2 = g4.reshape(bsz, cout, hout * wout)
        _accumulate(w, np.einsum("bol,bkl->ok", g2, cols).reshape(w.data.shape))
        if b is not None:
            _accumulate(b, g2.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2).reshape(bsz, cin, kh, kw, hout, wout)
            gxp = np.zeros((bsz, cin, hp, wp), dtype=np.float64)
            for dy in range(kh):
                for dx in range(kw):
                    gxp[:, :, dy:dy + hout * stride:stride, dx:dx + wout * stride:stride] += gcols[:, :, dy, dx]
            gx = gxp[:, :, padding:hp - padding, padding:wp - padding] if padding else gxp
            _accumulate(x, gx[0] if squeeze else gx)

    parents = (x, w) if b is None else (x, w, b)
    return _result(out[0] if squeeze else out, parents, backward_fn)


# ---------------------------------------------------------------------------
# softmax / loss
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along one axis; rows sum to 1."""
    x = _as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise ValueError("softmax: non-finite input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        _accumulate(x, s * (g - inner))

    return _result(s, (x,), backward_fn)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class.

    logits: (B, K) or (K,); labels: int array of shape (B,) or a scalar index.
    """
    logits = _as_tensor(logits)
    single = logits.data.ndim == 1
    ld = logits.data[None] if single else logits.data
    if ld.ndim != 2:
        raise ValueError(f"cross_entropy: logits must be 1-D or 2-D, got {logits.data.shape}")
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    bsz, k = ld.shape
    if y.shape != (bsz,):
        raise ValueError(f"cross_entropy: labels shape {y.shape} != ({bsz},)")
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"cross_entropy: label outside [0, {k})")
    shifted = ld - ld.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(bsz), y]
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)

    def backward_fn(g):
        gl = p.copy()
        gl[np.arange(bsz), y] -= 1.0
        gl *= float(g) / bsz
        _accumulate(logits, gl[0] if single else gl)

    return _result(losses.mean(), (logits,), backward_fn)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_coords: int
    worst_input: int
    worst_coord: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(f, xs, step: float = 1e-4, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of a scalar function against central
    finite differences, coordinate by coordinate.

    f takes the tensors in xs (a Tensor or a sequence) and returns a scalar
    Tensor; it must build a fresh graph on every call and not mutate inputs.
    Relative error uses max(|analytic|, |numeric|, 1e-6) as the scale so
    exactly-zero gradients compare at absolute 1e-6 resolution.
    """
    inputs = [xs] if isinstance(xs, Tensor) else list(xs)
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    out = f(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    backward(out)
    analytic = [x.grad.copy() if x.grad is not None else np.zeros_like(x.data) for x in inputs]

    max_rel = 0.0
    worst = (0, 0)
    n_coords = 0
    for xi, x in enumerate(inputs):
        flat = x.data.reshape(-1)
        ana = analytic[xi].reshape(-1)
        for ci in range(flat.size):
            orig = flat[ci]
            flat[ci] = orig + step
            f_plus = float(f(*inputs).data)
            flat[ci] = orig - step
            f_minus = float(f(*inputs).data)
            flat[ci] = orig
            num = (f_plus - f_minus) / (2.0 * step)
            scale = max(abs(num), abs(ana[ci]), 1e-6)
            rel = abs(num - ana[ci]) / scale
            if rel > max_rel:
                max_rel = rel
                worst = (xi, ci)
            n_coords += 1
    return GradCheckReport(
        max_rel_error=max_rel,
        tolerance=tolerance,
        n_coords=n_coords,
        worst_input=worst[0],
        worst_coord=worst[1],
    )


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adaptive-moment optimizer with per-epoch exponential rate decay."""

    def __init__(self, params, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def decay_lr(self, gamma: float) -> None:
        """Multiply the learning rate by gamma (call once per epoch)."""
        self.lr *= gamma
