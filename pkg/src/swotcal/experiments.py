"""Desk-scale OSSE experiments: simulate, train, evaluate against the baselines.

Training, validation (checkpoint selection) and evaluation segments come from
independent field streams, so the evaluation set is never seen during training.
"""
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import calnet, config, metrics, osse, swt, training
from .scale_space import ScaleList, parse_scales

log = logging.getLogger(__name__)


@dataclass
class DeskRun:
    n_train: int = 500
    n_val: int = 50
    n_eval: int = 50
    arch: str = "32x1"
    epochs: int = 50
    ablations: tuple = ()
    preset: str = None
    seed: int = 0
    eval_sigmas: ScaleList = None
    overrides: dict = field(default_factory=dict)


def make_datasets(cfg, run: DeskRun):
    return (osse.simulate(cfg, run.n_train, seed=run.seed, split="train"),
            osse.simulate(cfg, run.n_val, seed=run.seed, split="val"),
            osse.simulate(cfg, run.n_eval, seed=run.seed, split="test"))


def run_desk(run: DeskRun, datasets=None, progress=None):
    """Returns a result dict with the ranked reports and the training history."""
    user = dict(run.overrides)
    if run.preset:
        user["gridded_preset"] = run.preset
    cfg = config.resolve(user)
    t0 = time.perf_counter()
    train_set, val_set, eval_set = datasets or make_datasets(cfg, run)
    parsed = calnet.parse_arch(run.arch)
    arch = calnet.ArchConfig(n_blocks=parsed["n_blocks"], n_channels=parsed["n_channels"],
                             scales=parse_scales(cfg["scales"]),
                             ablations=frozenset(parsed["ablations"]) | frozenset(run.ablations))
    grid = train_set[0].truth.grid
    model = calnet.build_model(arch, grid, run.seed)
    tcfg = training.TrainConfig(epochs=run.epochs, seed=run.seed)
    best, history = training.train(model, train_set, val_set, tcfg, progress=progress)
    sigmas = run.eval_sigmas or parse_scales(cfg["eval"]["scales"])
    preds = [calnet.forward(best, s.obs, s.gridded).values for s in eval_set]
    reports = metrics.compare({"calibrated": preds}, eval_set, sigmas, cfg["eval"]["mode"])
    return {"arch": arch.label, "preset": cfg["gridded_preset"], "seed": run.seed,
            "reports": {r.name: r.to_dict() for r in reports}, "sigmas_km": list(sigmas.sigmas_km),
            "best_epoch": history.best_epoch, "initial_val_rmse": history.initial_val_rmse,
            "best_val_rmse": history.best_val_rmse, "history": history.epochs,
            "seconds": time.perf_counter() - t0}


def artifact_name(run: DeskRun):
    """File name identifying a desk run by everything that changes its outcome."""
    parts = [run.arch, "+".join(sorted(run.ablations)) or "ref", run.preset or "default", f"s{run.seed}",
             f"n{run.n_train}-{run.n_val}-{run.n_eval}", f"e{run.epochs}"]
    if run.eval_sigmas:
        parts.append("ev" + "-".join(f"{v:g}" for v in run.eval_sigmas.sigmas_km))
    if run.overrides:
        parts.append(config.config_hash(config.resolve(run.overrides)))
    return "_".join(parts) + ".json"


def cached_run(run: DeskRun, directory, compute=True, progress=None):
    """Load the result of ``run`` from ``directory`` or (if ``compute``) run and store it.

    Returns None when the artifact is missing and ``compute`` is False.
    """
    path = os.path.join(directory, artifact_name(run))
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    if not compute:
        return None
    result = run_desk(run, progress=progress)
    os.makedirs(directory, exist_ok=True)
    text = json.dumps(result, indent=1, sort_keys=True, default=float)
    swt.atomic_write(path, text.encode("utf-8"))
    return result


def main(argv=None):
    """``python -m swotcal.experiments OUT.json [key=value ...]``: one desk run."""
    import sys

    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: python -m swotcal.experiments OUT.json [key=value ...]", file=sys.stderr)
        return 1
    out, pairs = argv[0], argv[1:]
    run = DeskRun()
    for p in pairs:
        k, v = p.split("=", 1)
        if k == "ablations":
            run.ablations = tuple(a for a in v.split(",") if a)
        elif k in ("arch", "preset"):
            setattr(run, k, v)
        else:
            setattr(run, k, int(v))
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    result = run_desk(run)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=1, sort_keys=True, default=float)
    r = result["reports"]
    print(json.dumps({k: r[k]["rmse_m"] for k in r}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
