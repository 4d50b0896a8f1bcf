"""A small reverse-mode engine covering exactly the layers CalCNN needs.

Forward functions take an optional :class:`Tape`; when one is given the
operation is recorded with the context its backward needs. Backward functions
are plain ``(ctx, grad_out) -> input grads`` and can be called directly.
Everything is float64.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class Tensor:
    """An array plus an optional gradient accumulator."""

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


class Param(Tensor):
    """A named trainable tensor."""

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True, name=name)


@dataclass
class _Record:
    name: str
    backward: object
    ctx: object
    inputs: tuple
    output: Tensor


class Tape:
    """Ordered log of executed operations; ``backward`` replays it in reverse."""

    def __init__(self):
        self.records = []
        self.visits = []

    def record(self, name, backward, ctx, inputs, output):
        output.requires_grad = output.requires_grad or any(t.requires_grad for t in inputs)
        self.records.append(_Record(name, backward, ctx, tuple(inputs), output))
        return output

    def backward(self, output, grad=None):
        if not any(r.output is output for r in self.records):
            raise RuntimeError("backward called on a tensor that was not produced on this tape")
        output.grad = np.ones_like(output.data) if grad is None else np.asarray(grad, dtype=np.float64)
        self.visits = []
        for rec in reversed(self.records):
            self.visits.append(rec.name)
            g = rec.output.grad
            if g is None or not rec.output.requires_grad:
                continue
            grads = rec.backward(rec.ctx, g)
            for t, gi in zip(rec.inputs, grads):
                if gi is not None and t.requires_grad:
                    t.accumulate(gi)


def _maybe_record(tape, name, backward, ctx, inputs, out):
    out = Tensor(out)
    if tape is not None:
        tape.record(name, backward, ctx, inputs, out)
    return out


# ---------------------------------------------------------------------------
# conv2d: cross-correlation, replicate padding, output size == input size

@dataclass
class ConvContext:
    x_shape: tuple
    w: np.ndarray
    flat: np.ndarray = field(repr=False)
    need_input_grad: bool = True


def _conv_geometry(x_shape, w_shape):
    N, C, H, W = x_shape
    Co, Ci, kh, kw = w_shape
    ph, pw = kh // 2, kw // 2
    Hp, Wp = H + 2 * ph, W + 2 * pw
    total = N * Hp * Wp
    valid = total - (kh - 1) * Wp - (kw - 1)
    return ph, pw, Hp, Wp, total, valid


def conv2d_forward(x, w, b):
    """Returns (output, ctx). ``x`` (N, C_in, H, W), ``w`` (C_out, C_in, kh, kw)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects a 4-D input and a 4-D weight")
    Co, Ci, kh, kw = w.shape
    if x.shape[1] != Ci:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {Ci}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel dims must be odd, got {kh}x{kw}")
    N, _, H, W = x.shape
    ph, pw, Hp, Wp, total, valid = _conv_geometry(x.shape, w.shape)
    # each tap is one GEMM over the flattened padded batch; positions whose
    # window straddles a row or image boundary land in the discarded margin
    flat = kernels.pad_replicate_cm(x, ph, pw)
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    out = np.zeros((Co, total))
    acc = out[:, :valid]
    for dy in range(kh):
        for dx in range(kw):
            off = dy * Wp + dx
            acc += taps[dy, dx] @ flat[:, off:off + valid]
    y = out.reshape(Co, N, Hp, Wp)[:, :, :H, :W].transpose(1, 0, 2, 3)
    y = y + np.asarray(b, dtype=np.float64)[None, :, None, None]
    return y, ConvContext(x.shape, w, flat)


def conv2d_backward(ctx, grad_out):
    """Returns (grad_input, grad_weight, grad_bias); grad_input is None if not needed."""
    if ctx is None or getattr(ctx, "flat", None) is None:
        raise RuntimeError("conv2d_backward needs the context saved by a forward pass")
    x_shape, w, flat = ctx.x_shape, ctx.w, ctx.flat
    N, _, H, W = x_shape
    Co, Ci, kh, kw = w.shape
    ph, pw, Hp, Wp, total, valid = _conv_geometry(x_shape, w.shape)
    g = np.asarray(grad_out, dtype=np.float64)
    ge = np.zeros((Co, N, Hp, Wp))
    ge[:, :, :H, :W] = g.transpose(1, 0, 2, 3)
    ge = ge.reshape(Co, total)[:, :valid]
    grad_taps = np.empty((kh, kw, Co, Ci))
    taps_t = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    gflat = np.zeros((Ci, total)) if ctx.need_input_grad else None
    for dy in range(kh):
        for dx in range(kw):
            off = dy * Wp + dx
            grad_taps[dy, dx] = ge @ flat[:, off:off + valid].T
            if gflat is not None:
                gflat[:, off:off + valid] += taps_t[dy, dx] @ ge
    grad_w = np.ascontiguousarray(grad_taps.transpose(2, 3, 0, 1))
    grad_b = g.sum(axis=(0, 2, 3))
    grad_x = None
    if gflat is not None:
        grad_x = np.asarray(kernels.fold_replicate_cm(gflat, N, H, W, ph, pw))
    return grad_x, grad_w, grad_b


def conv2d(x: Tensor, w: Tensor, b: Tensor, tape=None):
    y, ctx = conv2d_forward(x.data, w.data, b.data)
    ctx.need_input_grad = x.requires_grad
    return _maybe_record(tape, "conv2d", conv2d_backward, ctx, (x, w, b), y)


# ---------------------------------------------------------------------------

def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(mask, grad_out):
    return (np.where(mask, grad_out, 0.0),)


def relu(x: Tensor, tape=None):
    y, mask = relu_forward(x.data)
    return _maybe_record(tape, "relu", relu_backward, mask, (x,), y)


def add_backward(ctx, grad_out):
    return grad_out, grad_out


def add(a: Tensor, b: Tensor, tape=None):
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _maybe_record(tape, "add", add_backward, None, (a, b), a.data + b.data)


def scale(x: Tensor, c, tape=None):
    """Multiply by a fixed (non-trainable) scalar."""
    c = float(c)
    return _maybe_record(tape, "scale", lambda ctx, g: (c * g,), None, (x,), c * x.data)


# ---------------------------------------------------------------------------
# batch normalization over (batch, height, width) per channel

@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels):
        return cls(np.zeros(channels), np.ones(channels))


@dataclass
class BatchNormContext:
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    train: bool


def batchnorm_forward(x, gamma, beta, state: BatchNormState, train=True):
    x = np.asarray(x, dtype=np.float64)
    axes = (0, 2, 3)
    if train:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count < 2:
            raise ValueError("train-mode batchnorm needs at least 2 elements per channel")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean
        state.running_var = (1 - m) * state.running_var + m * var
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, BatchNormContext(xhat, inv_std, np.asarray(gamma), train)


def batchnorm_backward(ctx: BatchNormContext, grad_out):
    axes = (0, 2, 3)
    g = np.asarray(grad_out)
    grad_beta = g.sum(axis=axes)
    grad_gamma = (g * ctx.xhat).sum(axis=axes)
    gx_hat = g * ctx.gamma[None, :, None, None]
    inv = ctx.inv_std[None, :, None, None]
    if ctx.train:
        grad_x = inv * (gx_hat - gx_hat.mean(axis=axes, keepdims=True)
                        - ctx.xhat * (gx_hat * ctx.xhat).mean(axis=axes, keepdims=True))
    else:
        grad_x = inv * gx_hat
    return grad_x, grad_gamma, grad_beta


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state, train=True, tape=None):
    y, ctx = batchnorm_forward(x.data, gamma.data, beta.data, state, train)
    return _maybe_record(tape, "batchnorm", batchnorm_backward, ctx, (x, gamma, beta), y)


# ---------------------------------------------------------------------------
# linear map along the last (across-track) axis, shared over all other axes

def axis_linear_forward(x, w, b):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"axis_linear width mismatch: input {x.shape[-1]}, weight expects {w.shape[1]}")
    return x @ w.T + b, (x, w)


def axis_linear_backward(ctx, grad_out):
    x, w = ctx
    g = np.asarray(grad_out)
    g2 = g.reshape(-1, g.shape[-1])
    x2 = x.reshape(-1, x.shape[-1])
    return g @ w, g2.T @ x2, g2.sum(axis=0)


def axis_linear(x: Tensor, w: Tensor, b: Tensor, tape=None):
    y, ctx = axis_linear_forward(x.data, w.data, b.data)
    return _maybe_record(tape, "axis_linear", axis_linear_backward, ctx, (x, w, b), y)


# ---------------------------------------------------------------------------
# side folding: (B, C, H, 2*S) <-> (2B, C, H, S), so a conv sees one side at a time

def fold_sides_array(x, split):
    B, C, H, W = x.shape
    if W != 2 * split:
        raise ValueError(f"width {W} cannot be split into two sides of {split}")
    return np.ascontiguousarray(x.reshape(B, C, H, 2, split).transpose(0, 3, 1, 2, 4)).reshape(2 * B, C, H, split)


def unfold_sides_array(x):
    B2, C, H, S = x.shape
    return np.ascontiguousarray(x.reshape(B2 // 2, 2, C, H, S).transpose(0, 2, 3, 1, 4)).reshape(B2 // 2, C, H, 2 * S)


def fold_sides(x: Tensor, split, tape=None):
    return _maybe_record(tape, "fold_sides", lambda ctx, g: (unfold_sides_array(g),), None,
                         (x,), fold_sides_array(x.data, split))


def unfold_sides(x: Tensor, split, tape=None):
    return _maybe_record(tape, "unfold_sides", lambda ctx, g: (fold_sides_array(g, split),), None,
                         (x,), unfold_sides_array(x.data))


# ---------------------------------------------------------------------------

def mse(pred: Tensor, target, tape=None):
    target = np.asarray(target, dtype=np.float64)
    diff = pred.data - target
    n = diff.size

    def backward(ctx, g):
        return (g * 2.0 * diff / n,)

    return _maybe_record(tape, "mse", backward, None, (pred,), np.mean(diff * diff))


def sum_all(x: Tensor, tape=None):
    return _maybe_record(tape, "sum", lambda ctx, g: (np.full(x.shape, float(g)),), None,
                         (x,), np.sum(x.data))


# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; moment buffers are keyed by parameter name."""

    def __init__(self, betas=(0.9, 0.999), eps=1e-8):
        self.betas = betas
        self.eps = eps
        self.m = {}
        self.v = {}
        self.step_count = 0

    def step(self, params, lr):
        self.step_count += 1
        adam_step(params, lr, self.betas, self.eps, self.step_count, self.m, self.v)

    def state_dict(self):
        return {"step_count": self.step_count, "m": self.m, "v": self.v}


def adam_step(params, lr, betas=(0.9, 0.999), eps=1e-8, step_count=1, m=None, v=None):
    """Update ``params`` in place. ``step_count`` is 1-based."""
    b1, b2 = betas
    m = {} if m is None else m
    v = {} if v is None else v
    c1 = 1 - b1 ** step_count
    c2 = 1 - b2 ** step_count
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        mk = m.get(p.name)
        vk = v.get(p.name)
        mk = (1 - b1) * g if mk is None else b1 * mk + (1 - b1) * g
        vk = (1 - b2) * g * g if vk is None else b2 * vk + (1 - b2) * g * g
        m[p.name] = mk
        v[p.name] = vk
        p.data = p.data - lr * (mk / c1) / (np.sqrt(vk / c2) + eps)
    return m, v
