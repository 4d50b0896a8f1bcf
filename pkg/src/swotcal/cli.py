"""``swotcal`` command line: simulate, train, eval, decompose, bands.

Exit codes: 0 ok, 1 usage, 2 config, 3 data, 4 numeric failure.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import config as config_mod
from . import swt

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4

log = logging.getLogger("swotcal")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path):
    cfg = config_mod.load(path) if path else config_mod.resolve({})
    log.info("resolved config %s", config_mod.canonical(cfg))
    return cfg


def _write_text(path, text):
    swt.atomic_write(path, text.encode("utf-8"))


def _read_dataset(directory):
    from . import osse

    if not os.path.exists(os.path.join(directory, "manifest.json")):
        raise DataError(f"{directory}: no manifest.json (not a dataset directory)")
    try:
        return osse.load_dataset(directory)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{directory}: cannot read dataset: {exc}") from None


# -- simulate -------------------------------------------------------------------

def cmd_simulate(args):
    from . import osse

    cfg = _load_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    if args.n_segments < 0:
        raise UsageError("--n-segments must be >= 0")
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {args.out}: {exc}") from None
    if not os.access(args.out, os.W_OK):
        raise DataError(f"{args.out} is not writable")
    samples = osse.simulate(cfg, args.n_segments, seed=seed, split=args.split)
    manifest = osse.save_dataset(args.out, samples, cfg, seed, args.split, __version__,
                                 config_mod.config_hash(cfg))
    print(json.dumps({"segments": len(manifest["segments"]), "out": args.out, "split": args.split}))
    return EXIT_OK


# -- train ----------------------------------------------------------------------

def arch_from_args(cfg, args):
    from .calnet import ArchConfig, parse_arch
    from .scale_space import parse_scales

    a = cfg["arch"]
    parsed = parse_arch(args.arch or a["arch"])
    ablations = set(a["ablations"]) | parsed["ablations"]
    for flag, name in (("no_mix", "no_mix"), ("no_scales", "no_scale_decomp"), ("no_gridded", "no_gridded"),
                       ("no_skip", "no_skip"), ("linear", "linear_only")):
        if getattr(args, flag, False):
            ablations.add(name)
    if "linear_only" in ablations:
        parsed = parse_arch("linear")
    return ArchConfig(n_blocks=parsed["n_blocks"], n_channels=parsed["n_channels"],
                      scales=parse_scales(cfg["scales"]), ablations=frozenset(ablations),
                      share_side_weights=bool(a["share_side_weights"]),
                      mixer_init_std=float(a["mixer_init_std"]))


def train_config_from(cfg, args):
    from .training import TrainConfig

    t = dict(cfg["train"])
    if args.epochs is not None:
        t["epochs"] = args.epochs
    seed = cfg["seed"] if args.seed is None else args.seed
    return TrainConfig(epochs=int(t["epochs"]), batch_size=int(t["batch_size"]), base_lr=float(t["base_lr"]),
                       max_lr=float(t["max_lr"]), cycle_epochs=int(t["cycle_epochs"]),
                       anneal_factor=float(t["anneal_factor"]), loss_weights=t["loss_weights"], seed=int(seed))


def _split_samples(samples, val_every):
    """Train/validation split by field; holds out the last field if none qualifies."""
    from .osse import split_train_val

    train, val = split_train_val(samples, val_every)
    if not val:
        last = samples[-1].meta.get("field_index")
        train = [s for s in samples if s.meta.get("field_index") != last]
        val = [s for s in samples if s.meta.get("field_index") == last]
    if not train:
        # a single field: hold out its last segment
        train, val = samples[:-1], samples[-1:]
    return train, val


def cmd_train(args):
    from . import calnet, training

    cfg = _load_config(args.config)
    try:
        arch = arch_from_args(cfg, args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tcfg = train_config_from(cfg, args)
    manifest, samples = _read_dataset(args.data)
    if not samples:
        raise DataError(f"{args.data}: dataset is empty")
    if args.val:
        _, val = _read_dataset(args.val)
        train = samples
        if not val:
            raise DataError(f"{args.val}: validation dataset is empty")
    else:
        if len(samples) < 2:
            raise DataError("need at least 2 segments (or --val) to train with validation")
        train, val = _split_samples(samples, int(cfg["osse"]["val_every"]))
    grid = train[0].truth.grid
    for s in train + val:
        if s.truth.grid != grid:
            raise DataError("segments are on different swath grids")
    seed = tcfg.seed
    model = calnet.build_model(arch, grid, seed)
    log.info("model %s: %d parameters, %d train / %d val segments", arch.label, model.n_params(),
             len(train), len(val))
    out = args.out
    checkpoint = out + ".state"
    history_path = args.history or os.path.splitext(out)[0] + ".history.jsonl"

    def progress(entry):
        log.info("epoch %(epoch)d loss %(loss).4e val_rmse %(val_rmse).4e", entry)

    best, history = training.train(model, train, val, tcfg, checkpoint=checkpoint, resume=args.resume,
                                   progress=progress)
    meta = {"train": training.config_dict(tcfg), "config_hash": config_mod.config_hash(cfg),
            "data_config_hash": manifest.get("config_hash"), "version": __version__,
            "best_epoch": history.best_epoch, "best_val_rmse": history.best_val_rmse,
            "initial_val_rmse": history.initial_val_rmse}
    calnet.save_model(out, best, meta)
    _write_text(history_path, history.to_jsonl())
    if os.path.exists(checkpoint) and not args.keep_state:
        os.unlink(checkpoint)
    gridded_val = float(np.sqrt(np.mean([np.mean((s.gridded.values - s.truth.values) ** 2) for s in val])))
    print(json.dumps({"model": out, "arch": arch.label, "best_epoch": history.best_epoch,
                      "val_rmse": history.best_val_rmse, "val_rmse_gridded": gridded_val,
                      "initial_val_rmse": history.initial_val_rmse}, sort_keys=True))
    return EXIT_OK


# -- eval -----------------------------------------------------------------------

def predict_samples(model, samples, batch_size=8):
    preds = []
    for s in range(0, len(samples), batch_size):
        chunk = samples[s:s + batch_size]
        feats = np.stack([model.features(x.obs.values, x.gridded.values) for x in chunk])
        grid = np.stack([x.gridded.values for x in chunk])
        preds.extend(model.predict_arrays(feats, grid, batch_size))
    return preds


def cmd_eval(args):
    from . import calnet, metrics
    from .scale_space import parse_scales

    try:
        model = calnet.load_model(args.model)
    except (OSError, swt.SwtFormatError, KeyError) as exc:
        raise DataError(f"{args.model}: cannot load model: {exc}") from None
    manifest, samples = _read_dataset(args.data)
    if not samples:
        raise DataError(f"{args.data}: dataset is empty")
    for s in samples:
        if s.truth.grid != model.grid:
            raise DataError("dataset grid does not match the model grid")
    model_scales = model.cfg.scales
    if args.scales:
        try:
            sigma_grid = parse_scales(args.scales)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if not model.cfg.has("no_scale_decomp") and sigma_grid != model_scales:
            raise config_mod.ConfigError(f"--scales {args.scales} does not match the model's scale list "
                                         f"{list(model_scales.sigmas_km)}")
    else:
        sigma_grid = model_scales
    preds = predict_samples(model, samples)
    reports = metrics.compare({"calibrated": preds}, samples, sigma_grid, args.mode)
    meta = {"model": os.path.basename(args.model), "arch": model.cfg.label, "n_segments": len(samples),
            "data_config_hash": manifest.get("config_hash"), "mode": args.mode, "version": __version__}
    data = metrics.report_json(reports, sigma_grid, meta)
    metrics.validate_report(json.loads(data))
    if args.report:
        swt.atomic_write(args.report, data)
    if args.curves:
        _write_text(args.curves, metrics.curves_csv(reports, sigma_grid))
    summary = {r.name: {"rmse_m": r.rmse_m, "rmse_grad": r.rmse_grad} for r in reports}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -- decompose / bands ----------------------------------------------------------

def _read_swath(path):
    try:
        f = swt.read_field(path)
    except (OSError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if not hasattr(f, "grid"):
        raise DataError(f"{path}: expected a swath field")
    return f


def cmd_decompose(args):
    from .scale_space import decompose, parse_scales

    try:
        scales = parse_scales(args.scales)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    f = _read_swath(args.input)
    swt.write_stack(args.out, decompose(f, scales))
    return EXIT_OK


def cmd_bands(args):
    from . import calnet, metrics
    from .scale_space import parse_scales

    try:
        scales = parse_scales(args.scales)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if os.path.isdir(args.input):
        _, samples = _read_dataset(args.input)
        if not samples:
            raise DataError(f"{args.input}: dataset is empty")
        values = [s.obs.values for s in samples]
        pixel_km = samples[0].truth.grid.pixel_km
    else:
        f = _read_swath(args.input)
        values, pixel_km = [f.values], f.grid.pixel_km
    gamma = None
    if args.model:
        model = calnet.load_model(args.model)
        if model.cfg.scales != scales or model.cfg.has("no_scale_decomp"):
            raise config_mod.ConfigError("--scales must match the model's scale list")
        n = scales.n_bands
        # obs bands come first in the input channels
        gamma = np.abs(model.params["bn.gamma"].data[:n])
    pre, post = metrics.rescaled_band_fractions(values, scales.sigmas_km, pixel_km, gamma)
    sig = scales.sigmas_km
    labels = ([f"G{sig[0]:g}"] + [f"G{b:g}-G{a:g}" for a, b in zip(sig[:-1], sig[1:])]
              + [f"f-G{sig[-1]:g}"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["band", "definition", "fraction_pre", "fraction_post"])
    for i, (lab, a, b) in enumerate(zip(labels, pre, post)):
        w.writerow([i, lab, repr(float(a)), repr(float(b))])
    if args.out:
        _write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -------------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="swotcal", description="Scale-aware calibration of wide-swath altimetry (OSSE).")
    p.add_argument("--version", action="version", version=f"swotcal {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate an OSSE dataset")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--n-segments", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--split", choices=("train", "val", "test"), default="train",
                   help="independent field stream per split")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a calibration network")
    t.add_argument("--data", required=True)
    t.add_argument("--val", help="separate validation dataset (default: held-out fields of --data)")
    t.add_argument("--config")
    t.add_argument("--arch", help="CxB, e.g. 128x3, or 'linear'")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-mix", action="store_true")
    t.add_argument("--no-scales", action="store_true")
    t.add_argument("--no-gridded", action="store_true")
    t.add_argument("--no-skip", action="store_true")
    t.add_argument("--linear", action="store_true")
    t.add_argument("--out", required=True)
    t.add_argument("--history", help="JSONL history path (default: <out>.history.jsonl)")
    t.add_argument("--resume", action="store_true", help="continue from <out>.state if present")
    t.add_argument("--keep-state", action="store_true", help="keep the resumable state file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model against baselines")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report")
    e.add_argument("--curves")
    e.add_argument("--scales", help="per-scale grid; must match the model's scales")
    e.add_argument("--mode", choices=("highpass", "lowpass"), default="highpass")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("decompose", help="scale-space decomposition of a swath field")
    d.add_argument("--input", required=True)
    d.add_argument("--scales", default="20x8")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decompose)

    b = sub.add_parser("bands", help="band variance fractions before/after rescaling")
    b.add_argument("--input", required=True, help="swath field SWT or dataset directory")
    b.add_argument("--scales", default="20x8")
    b.add_argument("--model", help="use the model's learnt batchnorm scales")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bands)
    return p


def main(argv=None):
    from .training import TrainingDiverged

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"swotcal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except config_mod.ConfigError as exc:
        print(f"swotcal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, swt.SwtFormatError, FileNotFoundError) as exc:
        print(f"swotcal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"swotcal: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
