"""Supervised training of CalCNN.

Loss is a weighted sum of the MSE of the SSH, of its gradient and of its
Laplacian. Learning rate follows a triangular cycle whose amplitude is
multiplied by ``anneal_factor`` after every full cycle. The model returned is
the one with the best validation RMSE seen, including the untrained start.
"""
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import swt
from .calnet import CalCNN
from .errorsim import ErrorBundle
from .swath_geom import SwathField, gradient_adjoint, gradient_arrays, laplacian_array

log = logging.getLogger(__name__)

# feature arrays above this size are kept in a temporary memory-mapped file
MEMMAP_BYTES = 512 * 2 ** 20


@dataclass
class CalSample:
    truth: SwathField
    obs: SwathField
    gridded: SwathField
    bundle: ErrorBundle = None

    def __post_init__(self):
        g = self.truth.grid
        if self.obs.grid != g or self.gridded.grid != g:
            raise ValueError("truth, obs and gridded must share one grid")


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_size: int = 4
    base_lr: float = 1e-4
    max_lr: float = 1e-3
    cycle_epochs: int = 20
    anneal_factor: float = 0.5
    loss_weights: tuple = None  # None -> auto-balanced on the first batch
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.base_lr < self.max_lr:
            raise ValueError(f"base_lr ({self.base_lr}) must be < max_lr ({self.max_lr})")
        if self.cycle_epochs < 1:
            raise ValueError("cycle_epochs must be >= 1")
        if self.loss_weights is not None:
            self.loss_weights = tuple(float(w) for w in self.loss_weights)
            if len(self.loss_weights) != 3:
                raise ValueError("loss_weights must be (w_ssh, w_grad, w_lap)")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    initial_val_rmse: float = None
    loss_weights: tuple = None
    best_epoch: int = 0
    best_val_rmse: float = None

    def to_jsonl(self):
        lines = [json.dumps({"initial_val_rmse": self.initial_val_rmse,
                             "loss_weights": list(self.loss_weights) if self.loss_weights else None},
                            sort_keys=True)]
        lines += [json.dumps(e, sort_keys=True) for e in self.epochs]
        return "\n".join(lines) + "\n"


class TrainingDiverged(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


# ---------------------------------------------------------------------------

def loss_components(diff, pixel_km, split):
    """MSE of the difference, of its gradient (squared norm) and of its Laplacian."""
    g_al, g_ac = gradient_arrays(diff, pixel_km, split)
    lap = laplacian_array(diff, pixel_km, split)
    return (float(np.mean(diff * diff)), float(np.mean(g_al * g_al + g_ac * g_ac)),
            float(np.mean(lap * lap)))


def composite_loss(pred, truth, weights, pixel_km, split, tape=None):
    """Weighted loss between ``pred`` (Tensor (B, 1, H, W)) and ``truth`` (B, H, W).

    Returns (loss Tensor, {"ssh", "grad", "lap"} unweighted components).
    """
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape[0] != truth.shape[0] or pred.shape[2:] != truth.shape[1:]:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} do not match")
    w_ssh, w_grad, w_lap = weights
    diff = pred.data[:, 0] - truth
    n = diff.size
    g_al, g_ac = gradient_arrays(diff, pixel_km, split)
    lap = laplacian_array(diff, pixel_km, split)
    comps = {"ssh": float(np.mean(diff * diff)),
             "grad": float(np.mean(g_al * g_al + g_ac * g_ac)),
             "lap": float(np.mean(lap * lap))}
    total = w_ssh * comps["ssh"] + w_grad * comps["grad"] + w_lap * comps["lap"]
    if not math.isfinite(total):
        raise FloatingPointError(f"non-finite loss {total!r}; components {comps}, weights {weights}")

    def backward(ctx, g):
        gd = (2.0 / n) * (w_ssh * diff
                          + w_grad * gradient_adjoint(g_al, g_ac, pixel_km, split)
                          + w_lap * laplacian_array(lap, pixel_km, split))
        return (float(g) * gd[:, None, :, :],)

    out = ad._maybe_record(tape, "composite_loss", backward, None, (pred,), np.float64(total))
    return out, comps


def balance_weights(components):
    """Weights making all three weighted components equal to the SSH term."""
    ssh = components["ssh"]
    w = [1.0]
    for key in ("grad", "lap"):
        w.append(ssh / components[key] if components[key] > 0 and ssh > 0 else 1.0)
    return tuple(w)


def cyclical_lr(step, steps_per_epoch, cfg: TrainConfig):
    """Triangular wave from ``base_lr`` to an annealed peak and back, once per cycle."""
    cycle_len = cfg.cycle_epochs * steps_per_epoch
    cycle, pos = divmod(step, cycle_len)
    frac = pos / cycle_len
    tri = 1.0 - abs(2.0 * frac - 1.0)
    amplitude = (cfg.max_lr - cfg.base_lr) * cfg.anneal_factor ** cycle
    return cfg.base_lr + amplitude * tri


# ---------------------------------------------------------------------------

def _feature_store(model, samples, directory, tag):
    shape = (len(samples), model.cfg.in_channels) + model.grid.shape
    nbytes = 8 * int(np.prod(shape))
    if directory is not None and nbytes > MEMMAP_BYTES:
        store = np.lib.format.open_memmap(os.path.join(directory, f"{tag}.npy"), mode="w+",
                                          dtype=np.float64, shape=shape)
    else:
        store = np.empty(shape)
    for i, s in enumerate(samples):
        store[i] = model.features(s.obs.values, s.gridded.values)
    return store


def target_scale(model, samples):
    """RMS of what the exit conv has to produce: truth - gridded, or truth alone."""
    if model.cfg.has("no_gridded"):
        sq = [np.mean(s.truth.values ** 2) for s in samples]
    else:
        sq = [np.mean((s.truth.values - s.gridded.values) ** 2) for s in samples]
    value = float(np.sqrt(np.mean(sq)))
    return value if value > 0 else 1.0


def evaluate_rmse(model, features, gridded, truth, batch_size=8):
    pred = model.predict_arrays(features, gridded, batch_size)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def _save_train_state(path, model, opt, rng, epoch, step, history, best_state):
    arrays = {f"param/{k}": v for k, v in model.state_arrays().items()}
    arrays.update({f"best/{k}": v for k, v in best_state.items()})
    arrays.update({f"adam_m/{k}": v for k, v in opt.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in opt.v.items()})
    meta = {"epoch": epoch, "step": step, "adam_step": opt.step_count,
            "rng": rng.bit_generator.state, "history": history.to_jsonl(),
            "best_epoch": history.best_epoch, "best_val_rmse": history.best_val_rmse}
    swt.write(path, "train_state", arrays, meta)


def _load_train_state(path, model, opt, rng):
    header, arrays = swt.read(path)
    meta = header["meta"]
    model.load_state_arrays({k[6:]: v for k, v in arrays.items() if k.startswith("param/")})
    best_state = {k[5:]: v for k, v in arrays.items() if k.startswith("best/")}
    opt.m = {k[7:]: v.copy() for k, v in arrays.items() if k.startswith("adam_m/")}
    opt.v = {k[7:]: v.copy() for k, v in arrays.items() if k.startswith("adam_v/")}
    opt.step_count = meta["adam_step"]
    rng.bit_generator.state = meta["rng"]
    lines = meta["history"].strip().split("\n")
    head = json.loads(lines[0])
    history = TrainHistory([json.loads(line) for line in lines[1:]], head["initial_val_rmse"],
                           tuple(head["loss_weights"]) if head["loss_weights"] else None,
                           meta["best_epoch"], meta["best_val_rmse"])
    return meta["epoch"], meta["step"], history, best_state


def train(model: CalCNN, train_set, val_set, cfg: TrainConfig, checkpoint=None, resume=False,
          feature_dir=None, progress=None):
    """Train ``model`` in place; returns (best model copy, history).

    ``checkpoint`` is a path for a resumable training-state file written after
    every epoch; ``resume`` restarts from it when it exists.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    for s in list(train_set) + list(val_set):
        if s.truth.grid != model.grid:
            raise ValueError("all samples must be on the model grid")
    grid = model.grid
    pixel_km, split = grid.pixel_km, grid.side_split

    with tempfile.TemporaryDirectory(dir=feature_dir) as tmp:
        feats = _feature_store(model, train_set, tmp, "train")
        truth = np.stack([s.truth.values for s in train_set])
        gridded = np.stack([s.gridded.values for s in train_set])
        vfeats = _feature_store(model, val_set, tmp, "val")
        vtruth = np.stack([s.truth.values for s in val_set])
        vgridded = np.stack([s.gridded.values for s in val_set])

        rng = np.random.default_rng(cfg.seed)
        opt = ad.Adam()
        n = len(train_set)
        spe = math.ceil(n / cfg.batch_size)
        start_epoch, step = 0, 0
        history = None
        best_state = None

        if resume and checkpoint and os.path.exists(checkpoint):
            start_epoch, step, history, best_state = _load_train_state(checkpoint, model, opt, rng)
            weights = history.loss_weights
            log.info("resumed at epoch %d", start_epoch)
        else:
            model.out_scale = target_scale(model, train_set)
            history = TrainHistory()
            history.initial_val_rmse = evaluate_rmse(model, vfeats, vgridded, vtruth)
            history.best_val_rmse = history.initial_val_rmse
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            weights = cfg.loss_weights
            if weights is None:
                first = rng.permutation(n)[:cfg.batch_size]
                rng = np.random.default_rng(cfg.seed)
                probe = model.copy()
                pred = probe.run(feats[np.sort(first)], gridded[np.sort(first)], train=True)
                _, comps = composite_loss(pred, truth[np.sort(first)], (1.0, 1.0, 1.0), pixel_km, split)
                weights = balance_weights(comps)
            history.loss_weights = tuple(weights)
            log.info("loss weights %s", weights)

        initial_loss = None
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(n)
            sums = np.zeros(4)
            lr = cfg.base_lr
            for b in range(spe):
                idx = np.sort(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
                lr = cyclical_lr(step, spe, cfg)
                tape = ad.Tape()
                model.zero_grad()
                pred = model.run(feats[idx], gridded[idx], train=True, tape=tape)
                loss, comps = composite_loss(pred, truth[idx], weights, pixel_km, split, tape)
                value = float(loss.data)
                if initial_loss is None:
                    initial_loss = value
                if value > 1e3 * initial_loss:
                    raise TrainingDiverged(f"loss {value:.3e} exceeded 1e3 x initial {initial_loss:.3e} "
                                           f"at epoch {epoch}", history)
                tape.backward(loss)
                opt.step(model.param_list(), lr)
                step += 1
                sums += len(idx) * np.array([value, comps["ssh"], comps["grad"], comps["lap"]])
            sums /= n
            val = evaluate_rmse(model, vfeats, vgridded, vtruth)
            entry = {"epoch": epoch, "loss": sums[0], "loss_ssh": sums[1], "loss_grad": sums[2],
                     "loss_lap": sums[3], "lr": lr, "val_rmse": val,
                     "seconds": time.perf_counter() - t0}
            if not all(math.isfinite(v) for v in entry.values()):
                raise TrainingDiverged(f"non-finite history entry at epoch {epoch}: {entry}", history)
            history.epochs.append(entry)
            if val < history.best_val_rmse:
                history.best_val_rmse = val
                history.best_epoch = epoch
                best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            if progress is not None:
                progress(entry)
            log.info("epoch %d loss %.4e val_rmse %.4e lr %.2e (%.1fs)", epoch, entry["loss"], val, lr,
                     entry["seconds"])
            if checkpoint:
                _save_train_state(checkpoint, model, opt, rng, epoch, step, history, best_state)

    best = model.copy()
    best.load_state_arrays(best_state)
    return best, history


def config_dict(cfg: TrainConfig):
    d = asdict(cfg)
    d["loss_weights"] = list(cfg.loss_weights) if cfg.loss_weights else None
    return d
