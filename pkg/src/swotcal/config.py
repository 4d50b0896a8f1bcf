"""Experiment configuration: a strict JSON document with fixed sections.

Unknown keys are rejected with the key and its line number named.
"""
import copy
import hashlib
import json
import re

from .errorsim import DEFAULT_AMPLITUDES, ERROR_KINDS
from .fieldgen import PRESETS

DEFAULTS = {
    "field": {"nx": 640, "ny": 640, "pixel_km": 2.0, "spectral_slope": 4.0,
              "rolloff_km": 300.0, "target_std_m": 0.30},
    "errors": {k: {"edge_std_m": a, "corr_km": c} for k, (a, c) in DEFAULT_AMPLITUDES.items()},
    "gridded_preset": "neural_like",
    "grid": {"n_along": 512, "pixel_km": 2.0, "inner_km": 10.0, "outer_km": 60.0},
    "scales": "20x8",
    "arch": {"arch": "128x3", "ablations": [], "share_side_weights": True, "mixer_init_std": 0.01},
    "train": {"epochs": 250, "batch_size": 4, "base_lr": 1e-4, "max_lr": 1e-3, "cycle_epochs": 20,
              "anneal_factor": 0.5, "loss_weights": None},
    "eval": {"scales": "20x8", "mode": "highpass"},
    "osse": {"segments_per_field": 4, "inset_frac": 0.1, "val_every": 10},
    "seed": 0,
}

PRESET_KEYS = {"name", "lowpass_sigma_km", "noise_std_m", "noise_corr_km"}


class ConfigError(ValueError):
    pass


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text, key):
    line = _line_of(text, key)
    return f" (line {line})" if line else ""


def _merge(section, defaults, user, text):
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {section}.{key}{_where(text, key)}; "
                              f"allowed: {sorted(defaults)}")
        out[key] = value
    return out


def resolve(user, text=None):
    """Merge a user document over the defaults, rejecting unknown keys."""
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(DEFAULTS)
    for section, value in user.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section {section!r}{_where(text, section)}; allowed: {sorted(DEFAULTS)}")
        if section == "errors":
            if not isinstance(value, dict):
                raise ConfigError("errors must be an object keyed by error kind")
            errors = {}
            for kind, spec in value.items():
                if kind not in ERROR_KINDS:
                    raise ConfigError(f"unknown error kind {kind!r}{_where(text, kind)}; allowed: {list(ERROR_KINDS)}")
                if spec is None:
                    continue
                errors[kind] = _merge(f"errors.{kind}", DEFAULTS["errors"][kind], spec, text)
            cfg["errors"] = errors
        elif section == "gridded_preset":
            if isinstance(value, str):
                if value not in PRESETS:
                    raise ConfigError(f"unknown gridded preset {value!r}{_where(text, section)}")
                cfg[section] = value
            elif isinstance(value, dict):
                extra = set(value) - PRESET_KEYS
                if extra:
                    k = sorted(extra)[0]
                    raise ConfigError(f"unknown key gridded_preset.{k}{_where(text, k)}")
                if set(value) != PRESET_KEYS:
                    raise ConfigError(f"gridded_preset object needs keys {sorted(PRESET_KEYS)}")
                cfg[section] = dict(value)
            else:
                raise ConfigError("gridded_preset must be a preset name or an object")
        elif section in ("scales", "seed"):
            cfg[section] = value
        else:
            if not isinstance(value, dict):
                raise ConfigError(f"section {section!r} must be an object")
            cfg[section] = _merge(section, DEFAULTS[section], value, text)
    return cfg


def load(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return resolve(user, text)


def canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical(cfg).encode("utf-8")).hexdigest()[:16]
