"""OSSE segment generation: truth field -> swath sampling -> errors + gridded product.

Straight swath segments are cut at random headings inside an inset of each
synthetic field; several segments share one field. Every random draw comes
from a generator seeded by (seed, split, field index), so datasets are
reproducible and splits never share a field.
"""
import math
import os

import numpy as np

from . import swt
from .errorsim import ErrorSpec, corrupt
from .fieldgen import FieldSpec, GriddedPreset, emulate_gridded_product, get_preset, synth_ssh_field
from .swath_geom import SwathField, SwathGrid, build_swath_grid, sample_swath, swath_points
from .training import CalSample

SPLITS = {"train": 0, "val": 1, "test": 2}


def grid_from_config(cfg):
    g = cfg["grid"]
    return build_swath_grid(int(g["n_along"]), float(g["pixel_km"]), float(g["inner_km"]), float(g["outer_km"]))


def preset_from_config(cfg):
    p = cfg["gridded_preset"]
    if isinstance(p, str):
        return get_preset(p)
    return GriddedPreset(p["name"], float(p["lowpass_sigma_km"]), float(p["noise_std_m"]), float(p["noise_corr_km"]))


def field_spec_from_config(cfg, seed):
    f = cfg["field"]
    return FieldSpec(int(f["nx"]), int(f["ny"]), float(f["pixel_km"]), float(f["spectral_slope"]),
                     float(f["rolloff_km"]), float(f["target_std_m"]), int(seed))


def error_specs_from_config(cfg, rng):
    specs = []
    for kind, e in cfg["errors"].items():
        specs.append(ErrorSpec(kind, float(e["edge_std_m"]), float(e["corr_km"]), int(rng.integers(2 ** 31))))
    return specs


def place_segment(extent_km, grid: SwathGrid, rng, inset_frac=0.1, max_tries=1000):
    """Random heading and origin so the whole swath lies inside the inset box."""
    x_max, y_max = extent_km
    lo = np.array([inset_frac * x_max, inset_frac * y_max])
    hi = np.array([(1 - inset_frac) * x_max, (1 - inset_frac) * y_max])
    for _ in range(max_tries):
        heading = rng.uniform(0.0, 2 * math.pi)
        corners = swath_points(grid, (0.0, 0.0), heading)[[0, 0, -1, -1], [0, -1, 0, -1]]
        cmin, cmax = corners.min(axis=0), corners.max(axis=0)
        room = (hi - lo) - (cmax - cmin)
        if np.all(room >= 0):
            origin = lo - cmin + rng.uniform(0.0, 1.0, 2) * room
            return origin, heading
    raise ValueError("swath segment does not fit inside the field inset at any tried heading")


def _field_rng(seed, split, index):
    return np.random.default_rng([int(seed), SPLITS[split], int(index)])


def simulate_field_segments(cfg, seed, split, field_index, n_segments, grid=None):
    """Generate ``n_segments`` CalSamples from one synthetic field."""
    grid = grid or grid_from_config(cfg)
    rng = _field_rng(seed, split, field_index)
    truth = synth_ssh_field(field_spec_from_config(cfg, rng.integers(2 ** 31)))
    gridded = emulate_gridded_product(truth, preset_from_config(cfg), int(rng.integers(2 ** 31)))
    out = []
    for _ in range(n_segments):
        origin, heading = place_segment(truth.extent_km, grid, rng, cfg["osse"]["inset_frac"])
        truth_sw = sample_swath(truth, grid, origin, heading)
        gridded_sw = sample_swath(gridded, grid, origin, heading)
        obs, bundle = corrupt(truth_sw, error_specs_from_config(cfg, rng))
        sample = CalSample(truth_sw, obs, gridded_sw, bundle)
        sample.meta = {"field_index": int(field_index), "heading_rad": float(heading),
                       "origin_km": [float(origin[0]), float(origin[1])]}
        out.append(sample)
    return out


def simulate(cfg, n_segments, seed=None, split="train"):
    """``n_segments`` samples, ``segments_per_field`` at a time from fresh fields."""
    seed = cfg["seed"] if seed is None else seed
    per = int(cfg["osse"]["segments_per_field"])
    grid = grid_from_config(cfg)
    samples = []
    index = 0
    while len(samples) < n_segments:
        k = min(per, n_segments - len(samples))
        samples.extend(simulate_field_segments(cfg, seed, split, index, k, grid))
        index += 1
    return samples


def split_train_val(samples, val_every):
    """Hold out every ``val_every``-th field for validation."""
    train, val = [], []
    for s in samples:
        (val if s.meta["field_index"] % val_every == val_every - 1 else train).append(s)
    return train, val


# -- on-disk datasets ------------------------------------------------------------

def sample_arrays(sample: CalSample):
    arrays = {"truth": sample.truth.values, "obs": sample.obs.values, "gridded": sample.gridded.values}
    if sample.bundle is not None:
        for kind, comp in sample.bundle.components.items():
            arrays[f"err_{kind}"] = comp.values
    return arrays


def write_sample(path, sample: CalSample):
    meta = {"grid": sample.truth.grid.to_dict(), **getattr(sample, "meta", {})}
    swt.write(path, "cal_sample", sample_arrays(sample), meta)


def read_sample(path) -> CalSample:
    from .errorsim import ErrorBundle

    header, arrays = swt.read(path)
    if header["kind"] != "cal_sample":
        raise swt.SwtFormatError(f"{path}: expected a cal_sample, found {header['kind']!r}")
    meta = dict(header["meta"])
    grid = SwathGrid.from_dict(meta.pop("grid"))
    comps = {k[4:]: SwathField(grid, v) for k, v in arrays.items() if k.startswith("err_")}
    bundle = None
    if comps:
        total = np.zeros(grid.shape)
        for c in comps.values():
            total = total + c.values
        bundle = ErrorBundle(comps, SwathField(grid, total))
    s = CalSample(SwathField(grid, arrays["truth"]), SwathField(grid, arrays["obs"]),
                  SwathField(grid, arrays["gridded"]), bundle)
    s.meta = meta
    return s


def segment_summary(sample):
    t = sample.truth.values
    return {"rms_truth": float(np.sqrt(np.mean(t ** 2))),
            "rms_obs_minus_truth": float(np.sqrt(np.mean((sample.obs.values - t) ** 2))),
            "rms_gridded_minus_truth": float(np.sqrt(np.mean((sample.gridded.values - t) ** 2)))}


def load_dataset(directory):
    import json

    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    samples = [read_sample(os.path.join(directory, seg["file"])) for seg in manifest["segments"]]
    return manifest, samples


def save_dataset(directory, samples, cfg, seed, split, version, config_hash):
    """One ``seg_NNNNN.swt`` per sample plus ``manifest.json`` (written last)."""
    import json

    os.makedirs(directory, exist_ok=True)
    segments = []
    for i, s in enumerate(samples):
        name = f"seg_{i:05d}.swt"
        write_sample(os.path.join(directory, name), s)
        segments.append({"file": name, **getattr(s, "meta", {}), **segment_summary(s)})
    manifest = {"tool": "swotcal", "version": version, "config_hash": config_hash, "config": cfg,
                "seed": int(seed), "split": split, "grid": grid_from_config(cfg).to_dict(),
                "segments": segments}
    text = json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    swt.atomic_write(os.path.join(directory, "manifest.json"), text.encode("utf-8"))
    return manifest
