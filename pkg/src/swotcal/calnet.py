"""CalCNN: scale-decomposed inputs, side-split convolutions, swath mixers and a
residual head anchored on the gridded product.

Layout of one forward pass::

    [obs bands | gridded bands] -> batchnorm -> entry split-conv (linear)
        -> n_blocks x { h' = mix(h + relu(split_conv(h))) }
        -> exit split-conv to 1 channel -> + gridded
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import swt
from .scale_space import ScaleList, decompose_array, default_scales
from .swath_geom import SwathField, SwathGrid

ABLATIONS = ("no_mix", "no_scale_decomp", "no_skip", "no_gridded", "linear_only")


@dataclass(frozen=True)
class ArchConfig:
    n_blocks: int = 3
    n_channels: int = 128
    kernel: tuple = (3, 3)
    scales: ScaleList = field(default_factory=lambda: default_scales(20, 8.0))
    ablations: frozenset = frozenset()
    share_side_weights: bool = True
    mixer_init_std: float = 1e-2

    def __post_init__(self):
        if self.n_blocks < 0:
            raise ValueError("n_blocks must be >= 0")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if len(self.kernel) != 2 or any(k % 2 == 0 or k < 1 for k in self.kernel):
            raise ValueError(f"kernel must be two odd sizes, got {self.kernel}")
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}; expected a subset of {ABLATIONS}")
        if "linear_only" in self.ablations and self.ablations & {"no_mix", "no_skip"}:
            raise ValueError("linear_only has no blocks; it cannot be combined with no_mix or no_skip")
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        object.__setattr__(self, "kernel", tuple(self.kernel))

    def has(self, flag):
        return flag in self.ablations

    @property
    def effective_blocks(self):
        return 0 if self.has("linear_only") else self.n_blocks

    @property
    def bands_per_input(self):
        return 1 if self.has("no_scale_decomp") else self.scales.n_bands

    @property
    def in_channels(self):
        n_inputs = 1 if self.has("no_gridded") else 2
        return n_inputs * self.bands_per_input

    @property
    def label(self):
        base = "linear" if self.has("linear_only") else f"{self.n_channels}x{self.n_blocks}"
        extra = sorted(self.ablations - {"linear_only"})
        return "+".join([base] + extra)

    def to_dict(self):
        return {"n_blocks": self.n_blocks, "n_channels": self.n_channels, "kernel": list(self.kernel),
                "sigmas_km": list(self.scales.sigmas_km), "ablations": sorted(self.ablations),
                "share_side_weights": self.share_side_weights, "mixer_init_std": self.mixer_init_std}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_blocks"]), int(d["n_channels"]), tuple(d["kernel"]),
                   ScaleList(tuple(d["sigmas_km"])), frozenset(d["ablations"]),
                   bool(d["share_side_weights"]), float(d["mixer_init_std"]))


def parse_arch(text):
    """``"CxB"`` (channels x blocks, e.g. ``"128x3"``) or ``"linear"``."""
    t = text.strip().lower()
    if t == "linear":
        return {"n_channels": 1, "n_blocks": 0, "ablations": {"linear_only"}}
    try:
        c, b = t.split("x")
        c, b = int(c), int(b)
    except ValueError:
        raise ValueError(f"cannot parse architecture {text!r}; expected 'CxB' such as '128x3' or 'linear'") from None
    if c < 1 or b < 0:
        raise ValueError(f"invalid architecture {text!r}")
    return {"n_channels": c, "n_blocks": b, "ablations": set()}


def expected_param_count(cfg: ArchConfig, n_across):
    """Closed-form trainable parameter count."""
    kh, kw = cfg.kernel
    c_in, c = cfg.in_channels, cfg.n_channels
    sides = 1 if cfg.share_side_weights else 2
    count = 2 * c_in
    count += sides * (c_in * c * kh * kw + c)
    for _ in range(cfg.effective_blocks):
        count += sides * (c * c * kh * kw + c)
        if not cfg.has("no_mix"):
            count += n_across * n_across + n_across
    count += sides * (c * kh * kw + 1)
    return count


class CalCNN:
    def __init__(self, cfg: ArchConfig, grid: SwathGrid, params, bn_state, out_scale=1.0):
        self.cfg = cfg
        self.grid = grid
        self.params = params
        self.bn_state = bn_state
        # fixed metres-per-unit of the exit conv; set from the training targets
        self.out_scale = float(out_scale)

    # -- bookkeeping ----------------------------------------------------------
    def param_list(self):
        return list(self.params.values())

    def n_params(self):
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self):
        arrays = {name: p.data for name, p in self.params.items()}
        arrays["bn.running_mean"] = self.bn_state.running_mean
        arrays["bn.running_var"] = self.bn_state.running_var
        arrays["head.out_scale"] = np.array([self.out_scale])
        return arrays

    def load_state_arrays(self, arrays):
        for name, p in self.params.items():
            if arrays[name].shape != p.data.shape:
                raise ValueError(f"parameter {name}: shape {arrays[name].shape} != {p.data.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)
        self.bn_state.running_mean = np.array(arrays["bn.running_mean"], dtype=np.float64)
        if "head.out_scale" in arrays:
            self.out_scale = float(np.asarray(arrays["head.out_scale"]).ravel()[0])
        self.bn_state.running_var = np.array(arrays["bn.running_var"], dtype=np.float64)

    def copy(self):
        params = {n: ad.Param(n, p.data.copy()) for n, p in self.params.items()}
        bn = ad.BatchNormState(self.bn_state.running_mean.copy(), self.bn_state.running_var.copy(),
                               self.bn_state.momentum, self.bn_state.eps)
        return CalCNN(self.cfg, self.grid, params, bn, self.out_scale)

    # -- inputs ---------------------------------------------------------------
    def features(self, obs, gridded):
        """Input channels (C_in, n_along, n_across) for one sample of raw arrays."""
        obs = np.asarray(obs, dtype=np.float64)
        gridded = np.asarray(gridded, dtype=np.float64)
        if obs.shape != self.grid.shape or gridded.shape != self.grid.shape:
            raise ValueError(f"inputs must have the model grid shape {self.grid.shape}")
        inputs = [obs] if self.cfg.has("no_gridded") else [obs, gridded]
        if self.cfg.has("no_scale_decomp"):
            return np.stack(inputs)
        sig = self.cfg.scales.sigmas_km
        return np.concatenate([decompose_array(a, sig, self.grid.pixel_km) for a in inputs])

    # -- network --------------------------------------------------------------
    def split_conv(self, x, prefix, tape=None):
        return split_conv(x, self.params, prefix, self.grid.side_split, self.cfg.share_side_weights, tape)

    def swath_mix(self, x, prefix, tape=None):
        return swath_mix(x, self.params, prefix, tape)

    def run(self, features, gridded, train=False, tape=None):
        """Batched forward on arrays; returns the prediction Tensor (B, 1, H, W)."""
        cfg = self.cfg
        x = ad.Tensor(features)
        h = ad.batchnorm(x, self.params["bn.gamma"], self.params["bn.beta"], self.bn_state, train, tape)
        h = self.split_conv(h, "entry", tape)
        for i in range(cfg.effective_blocks):
            z = ad.relu(self.split_conv(h, f"block{i}.conv", tape), tape)
            if not cfg.has("no_skip"):
                z = ad.add(h, z, tape)
            if not cfg.has("no_mix"):
                z = self.swath_mix(z, f"block{i}.mix", tape)
            h = z
        out = self.split_conv(h, "exit", tape)
        if self.out_scale != 1.0:
            out = ad.scale(out, self.out_scale, tape)
        if cfg.has("no_gridded"):
            return out
        anchor = ad.Tensor(np.asarray(gridded, dtype=np.float64)[:, None, :, :])
        return ad.add(out, anchor, tape)

    def predict_arrays(self, features, gridded, batch_size=8):
        preds = []
        for s in range(0, len(features), batch_size):
            preds.append(self.run(np.asarray(features[s:s + batch_size]),
                                  np.asarray(gridded[s:s + batch_size]), train=False).data[:, 0])
        return np.concatenate(preds)


def _conv_param_names(prefix, shared):
    if shared:
        return [(f"{prefix}.w", f"{prefix}.b")]
    return [(f"{prefix}.left.w", f"{prefix}.left.b"), (f"{prefix}.right.w", f"{prefix}.right.b")]


def split_conv(x, params, prefix, split, shared=True, tape=None):
    """Convolve each swath side on its own; sides share weights unless ``shared`` is False."""
    if x.shape[-1] != 2 * split:
        raise ValueError(f"split_conv needs an even width of {2 * split}, got {x.shape[-1]}")
    folded = ad.fold_sides(x, split, tape)
    if shared:
        (wn, bn), = _conv_param_names(prefix, True)
        y = ad.conv2d(folded, params[wn], params[bn], tape)
    else:
        y = _unshared_side_conv(folded, params, prefix, tape)
    return ad.unfold_sides(y, split, tape)


def _unshared_side_conv(folded, params, prefix, tape):
    # folded rows alternate left, right
    (lw, lb), (rw, rb) = _conv_param_names(prefix, False)
    left = _take_rows(folded, 0, tape)
    right = _take_rows(folded, 1, tape)
    yl = ad.conv2d(left, params[lw], params[lb], tape)
    yr = ad.conv2d(right, params[rw], params[rb], tape)
    return _interleave(yl, yr, tape)


def _take_rows(x, parity, tape):
    n = x.shape[0]

    def backward(ctx, g):
        full = np.zeros((n,) + g.shape[1:])
        full[parity::2] = g
        return (full,)

    return ad._maybe_record(tape, "take_side", backward, None, (x,), np.ascontiguousarray(x.data[parity::2]))


def _interleave(a, b, tape):
    out = np.empty((2 * a.shape[0],) + a.shape[1:])
    out[0::2] = a.data
    out[1::2] = b.data
    return ad._maybe_record(tape, "stack_sides", lambda ctx, g: (g[0::2], g[1::2]), None, (a, b), out)


def swath_mix(x, params, prefix, tape=None):
    """Linear map across the full across-track width, shared over channels and rows."""
    return ad.axis_linear(x, params[f"{prefix}.w"], params[f"{prefix}.b"], tape)


def build_model(cfg: ArchConfig, grid: SwathGrid, seed=0) -> CalCNN:
    if grid.side_split * 2 != grid.n_across:
        raise ValueError("grid sides must have equal widths")
    rng = np.random.default_rng(seed)
    kh, kw = cfg.kernel
    params = {}

    def add_param(name, data):
        params[name] = ad.Param(name, data)

    def add_conv(prefix, c_in, c_out, zero=False):
        bound = 1.0 / np.sqrt(c_in * kh * kw)
        for wn, bn in _conv_param_names(prefix, cfg.share_side_weights):
            if zero:
                add_param(wn, np.zeros((c_out, c_in, kh, kw)))
                add_param(bn, np.zeros(c_out))
            else:
                add_param(wn, rng.uniform(-bound, bound, (c_out, c_in, kh, kw)))
                add_param(bn, rng.uniform(-bound, bound, c_out))

    c_in, c = cfg.in_channels, cfg.n_channels
    add_param("bn.gamma", np.ones(c_in))
    add_param("bn.beta", np.zeros(c_in))
    add_conv("entry", c_in, c)
    n = grid.n_across
    for i in range(cfg.effective_blocks):
        add_conv(f"block{i}.conv", c, c)
        if not cfg.has("no_mix"):
            add_param(f"block{i}.mix.w", np.eye(n) + cfg.mixer_init_std * rng.standard_normal((n, n)))
            add_param(f"block{i}.mix.b", np.zeros(n))
    add_conv("exit", c, 1, zero=True)
    return CalCNN(cfg, grid, params, ad.BatchNormState.fresh(c_in))


def forward(model: CalCNN, obs: SwathField, gridded_on_swath: SwathField) -> SwathField:
    """Calibrated swath for one sample (eval-mode batchnorm)."""
    if obs.grid != model.grid or gridded_on_swath.grid != model.grid:
        raise ValueError("obs and gridded fields must share the model grid")
    feats = model.features(obs.values, gridded_on_swath.values)[None]
    pred = model.run(feats, gridded_on_swath.values[None], train=False)
    return SwathField(model.grid, pred.data[0, 0])


def save_model(path, model: CalCNN, meta=None):
    m = {"arch": model.cfg.to_dict(), "grid": model.grid.to_dict(), **(meta or {})}
    swt.write(path, "model", model.state_arrays(), m)


def load_model(path) -> CalCNN:
    header, arrays = swt.read(path)
    if header["kind"] != "model":
        raise swt.SwtFormatError(f"expected a model, found kind {header['kind']!r}")
    cfg = ArchConfig.from_dict(header["meta"]["arch"])
    grid = SwathGrid.from_dict(header["meta"]["grid"])
    model = build_model(cfg, grid)
    model.load_state_arrays(arrays)
    return model


def with_ablations(cfg: ArchConfig, *flags):
    return replace(cfg, ablations=frozenset(cfg.ablations) | set(flags))
