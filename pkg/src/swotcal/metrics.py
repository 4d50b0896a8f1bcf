"""Evaluation: RMSE, gradient-magnitude RMSE, per-scale error curves and reports.

The per-scale error at blur scale sigma compares fine-scale parts
``H_sigma = I - G_sigma`` (along-track) of the error and of the truth:
``e(sigma) = RMS(H_sigma(est - truth)) / RMS(H_sigma(truth))``. The low-pass
variant (``G_sigma`` instead of ``H_sigma``) is available with ``mode="lowpass"``.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .scale_space import ScaleList, band_variances, blur_along_array, decompose_array
from .swath_geom import SwathField, gradient_arrays

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["entries", "sigmas_km", "metadata"],
    "additionalProperties": False,
    "properties": {
        "sigmas_km": {"type": "array", "items": {"type": "number"}},
        "metadata": {"type": "object"},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "rmse_m", "rmse_grad", "per_scale"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "rank": {"type": "integer"},
                    "rmse_m": {"type": "number", "minimum": 0},
                    "rmse_grad": {"type": "number", "minimum": 0},
                    "per_scale": {"type": "array", "items": {"type": "number"}},
                    "band_variance": {"type": "object"},
                    "metadata": {"type": "object"},
                },
            },
        },
    },
}


def _check_pair(a: SwathField, b: SwathField):
    if a.grid != b.grid:
        raise ValueError("fields are on different grids")


def _kahan_sum(values):
    total = 0.0
    comp = 0.0
    for v in values:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def rmse(a: SwathField, b: SwathField):
    _check_pair(a, b)
    return float(np.sqrt(np.mean((a.values - b.values) ** 2)))


def grad_magnitude(values, pixel_km, split):
    d_al, d_ac = gradient_arrays(values, pixel_km, split)
    return np.sqrt(d_al * d_al + d_ac * d_ac)


def grad_rmse(a: SwathField, b: SwathField):
    _check_pair(a, b)
    g = a.grid
    ma = grad_magnitude(a.values, g.pixel_km, g.side_split)
    mb = grad_magnitude(b.values, g.pixel_km, g.side_split)
    return float(np.sqrt(np.mean((ma - mb) ** 2)))


def _scale_part(values, sigma_km, pixel_km, mode):
    low = blur_along_array(values, sigma_km, pixel_km)
    if mode == "highpass":
        return values - low
    if mode == "lowpass":
        return low
    raise ValueError(f"unknown per-scale mode {mode!r}")


def scale_sums(est, truth, sigma_grid: ScaleList, pixel_km, mode="highpass"):
    """Per-sigma (sum of squared filtered error, sum of squared filtered truth)."""
    err = np.asarray(est) - np.asarray(truth)
    out = []
    for s in sigma_grid.sigmas_km:
        fe = _scale_part(err, s, pixel_km, mode)
        ft = _scale_part(np.asarray(truth), s, pixel_km, mode)
        out.append((float(np.sum(fe * fe)), float(np.sum(ft * ft))))
    return out


def error_vs_scale(est: SwathField, truth: SwathField, sigma_grid: ScaleList, mode="highpass"):
    """[(sigma_km, normalized error)] for one sample."""
    _check_pair(est, truth)
    sums = scale_sums(est.values, truth.values, sigma_grid, truth.grid.pixel_km, mode)
    out = []
    for s, (e2, t2) in zip(sigma_grid.sigmas_km, sums):
        if not t2 > 0:
            raise ValueError(f"truth has no energy at sigma={s} km; normalized error undefined")
        out.append((float(s), math.sqrt(e2 / t2)))
    return out


def pooled_error_vs_scale(ests, truths, sigma_grid: ScaleList, pixel_km, mode="highpass"):
    """Per-scale error pooled over many samples (ratio of summed energies)."""
    if not len(truths):
        raise ValueError("empty evaluation set")
    per = [scale_sums(e, t, sigma_grid, pixel_km, mode) for e, t in zip(ests, truths)]
    out = []
    for k, s in enumerate(sigma_grid.sigmas_km):
        e2 = _kahan_sum(p[k][0] for p in per)
        t2 = _kahan_sum(p[k][1] for p in per)
        if not t2 > 0:
            raise ValueError(f"truth has no energy at sigma={s} km")
        out.append(math.sqrt(e2 / t2))
    return out


def pooled_rmse(ests, truths):
    n = sum(np.asarray(t).size for t in truths)
    return math.sqrt(_kahan_sum(float(np.sum((np.asarray(e) - np.asarray(t)) ** 2))
                                for e, t in zip(ests, truths)) / n)


def pooled_grad_rmse(ests, truths, pixel_km, split):
    n = sum(np.asarray(t).size for t in truths)
    total = _kahan_sum(float(np.sum((grad_magnitude(e, pixel_km, split) - grad_magnitude(t, pixel_km, split)) ** 2))
                       for e, t in zip(ests, truths))
    return math.sqrt(total / n)


def band_fractions(values, sigmas_km, pixel_km):
    var = band_variances(decompose_array(np.asarray(values), sigmas_km, pixel_km))
    return var / var.sum()


def rescaled_band_fractions(values_list, sigmas_km, pixel_km, gamma=None):
    """Band variance fractions before and after per-band standardization.

    Standardization divides every band by its pooled standard deviation (what a
    batch-normalization layer does at initialization), optionally scaled by a
    learnt ``gamma`` per band.
    """
    stacks = [decompose_array(np.asarray(v), sigmas_km, pixel_km) for v in values_list]
    var = np.array([np.mean([np.var(st[k]) for st in stacks]) for k in range(len(sigmas_km) + 1)])
    pre = var / var.sum()
    g = np.ones_like(var) if gamma is None else np.asarray(gamma, dtype=np.float64) ** 2
    post_var = g * var / np.where(var > 0, var, 1.0)
    return pre, post_var / post_var.sum()


@dataclass
class EvalReport:
    name: str
    rmse_m: float
    rmse_grad: float
    per_scale: list
    band_variance: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"name": self.name, "rmse_m": self.rmse_m, "rmse_grad": self.rmse_grad,
             "per_scale": list(self.per_scale), "metadata": self.metadata}
        if self.band_variance:
            d["band_variance"] = self.band_variance
        return d


def evaluate_estimates(name, ests, truths, grid, sigma_grid, mode="highpass", metadata=None):
    return EvalReport(name,
                      pooled_rmse(ests, truths),
                      pooled_grad_rmse(ests, truths, grid.pixel_km, grid.side_split),
                      pooled_error_vs_scale(ests, truths, sigma_grid, grid.pixel_km, mode),
                      metadata=metadata or {})


def compare(entries, eval_set, sigma_grid: ScaleList, mode="highpass", metadata=None):
    """Reports for the obs and gridded baselines plus every named estimator.

    ``entries`` maps name -> callable(sample) -> ndarray of the estimate, or
    name -> precomputed list of estimate arrays. Returned list is ranked by RMSE.
    """
    if not eval_set:
        raise ValueError("empty evaluation set")
    grid = eval_set[0].truth.grid
    truths = [s.truth.values for s in eval_set]
    reports = [evaluate_estimates("obs", [s.obs.values for s in eval_set], truths, grid, sigma_grid, mode),
               evaluate_estimates("gridded", [s.gridded.values for s in eval_set], truths, grid, sigma_grid, mode)]
    for name, est in entries.items():
        ests = [est(s) for s in eval_set] if callable(est) else list(est)
        reports.append(evaluate_estimates(name, ests, truths, grid, sigma_grid, mode))
    reports.sort(key=lambda r: r.rmse_m)
    return reports


def report_json(reports, sigma_grid: ScaleList, metadata=None):
    """Canonical JSON bytes: sorted keys, floats at 17 significant digits."""
    doc = {"sigmas_km": list(sigma_grid.sigmas_km), "metadata": metadata or {},
           "entries": [dict(r.to_dict(), rank=i + 1) for i, r in enumerate(reports)]}
    return (json.dumps(_fix_floats(doc), sort_keys=True, indent=1) + "\n").encode("utf-8")


def _fix_floats(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("reports must be finite")
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _fix_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_fix_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _fix_floats(obj.item())
    return obj


def validate_report(doc):
    import jsonschema

    jsonschema.validate(doc, REPORT_SCHEMA)


def curves_csv(reports, sigma_grid: ScaleList, calibrated="calibrated"):
    by_name = {r.name: r for r in reports}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sigma_km", "err_obs", "err_gridded", "err_calibrated"])
    cal = by_name.get(calibrated)
    for k, s in enumerate(sigma_grid.sigmas_km):
        writer.writerow([repr(float(s)), repr(by_name["obs"].per_scale[k]), repr(by_name["gridded"].per_scale[k]),
                         repr(cal.per_scale[k]) if cal else ""])
    return buf.getvalue()
