"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed
in the terminal summary.

Criteria 6-9 need full desk-scale training runs (hours on one CPU core). They
are evaluated from run artifacts found in ``$SWOTCAL_ACCEPTANCE_DIR`` (named by
:func:`swotcal.experiments.artifact_name`); missing artifacts are computed only
when ``SWOTCAL_FULL_ACCEPTANCE=1``, otherwise those criteria are skipped.
"""
import json
import os
import time

import numpy as np
import pytest

import swotcal.autodiff as ad
from oracles import blur_loops, conv2d_loops, gradcheck, numeric_grad, rel_error
from swotcal import calnet, cli, experiments, swt
from swotcal.calnet import ArchConfig, build_model, forward
from swotcal.fieldgen import Field2D
from swotcal.metrics import rescaled_band_fractions
from swotcal.scale_space import (ScaleList, blur_along_array, decompose, default_scales, reconstruct)
from swotcal.swath_geom import SwathField, build_swath_grid
from swotcal.training import composite_loss

RESULTS = {}
FULL = os.environ.get("SWOTCAL_FULL_ACCEPTANCE", "") == "1"
ART_DIR = os.environ.get("SWOTCAL_ACCEPTANCE_DIR")
PRESET_ORDER = ("oi_like", "neural_like", "neural_sst_like")  # worst to best


def verdict(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def desk(run, n, est_hours):
    """Artifact for a desk run, or skip criterion ``n``."""
    result = None
    if ART_DIR or FULL:
        directory = ART_DIR or os.path.join(os.path.dirname(__file__), "..", "acceptance_runs")
        result = experiments.cached_run(run, directory, compute=FULL)
    if result is None:
        RESULTS[n] = (None, f"skipped: needs {experiments.artifact_name(run)} "
                            f"(~{est_hours:g} h on one core); set SWOTCAL_FULL_ACCEPTANCE=1")
        pytest.skip(RESULTS[n][1])
    return result


def rmse_of(result, name="calibrated"):
    return result["reports"][name]["rmse_m"]


# ---------------------------------------------------------------------------------

def test_c01_oracle_equivalence():
    t0 = time.perf_counter()
    r = np.random.default_rng(1)
    worst_blur = worst_conv = 0.0
    for _ in range(20):
        n, m = int(r.integers(3, 80)), int(r.integers(1, 5))
        sigma = float(r.uniform(1.0, 60.0))
        v = r.standard_normal((n, m))
        worst_blur = max(worst_blur, np.max(np.abs(blur_along_array(v, sigma, 2.0) - blur_loops(v, sigma, 2.0))))
    for _ in range(20):
        N, C, H, W, Co = (int(k) for k in r.integers(1, 5, size=5))
        k = int(r.choice([1, 3, 5]))
        x = r.standard_normal((N, C, H, W))
        w = r.standard_normal((Co, C, k, k))
        b = r.standard_normal(Co)
        worst_conv = max(worst_conv, np.max(np.abs(ad.conv2d_forward(x, w, b)[0] - conv2d_loops(x, w, b))))
    dt = time.perf_counter() - t0
    verdict(1, worst_blur <= 1e-12 and worst_conv <= 1e-12 and dt < 10,
            f"max |blur - oracle| {worst_blur:.1e}, max |conv - oracle| {worst_conv:.1e} over 20+20 cases, {dt:.1f} s")


def test_c02_scale_space_identity(default_samples):
    t0 = time.perf_counter()
    f = default_samples[0].obs
    worst = 0.0
    for n, d in [(20, 8), (40, 4), (10, 16), (5, 32), (10, 8), (40, 8)]:
        back = reconstruct(decompose(f, default_scales(n, d))).values
        worst = max(worst, np.max(np.abs(back - f.values)) / np.max(np.abs(f.values)))
    dt = time.perf_counter() - t0
    verdict(2, worst <= 1e-10 and dt < 10, f"max relative reconstruction error {worst:.1e} over 6 scale lists, {dt:.1f} s")


def test_c03_gradient_verification():
    t0 = time.perf_counter()
    r = np.random.default_rng(3)
    a, b = r.standard_normal((2, 2, 2, 3, 4))
    relu_in = np.where(np.abs(a) < 1e-3, 0.5, a)
    target = r.standard_normal(a.shape)

    def bn(train):
        def fwd(x, g, be, tape=None):
            state = ad.BatchNormState(np.array([0.3, -0.2]), np.array([1.5, 0.8]))
            return ad.batchnorm(x, g, be, state, train=train, tape=tape)
        return fwd

    checks = {
        "conv2d": (ad.conv2d, [r.standard_normal((2, 2, 4, 5)), r.standard_normal((3, 2, 3, 3)), r.standard_normal(3)]),
        "relu": (ad.relu, [relu_in]),
        "batchnorm_train": (bn(True), [r.standard_normal((3, 2, 3, 4)), r.standard_normal(2), r.standard_normal(2)]),
        "batchnorm_eval": (bn(False), [r.standard_normal((3, 2, 3, 4)), r.standard_normal(2), r.standard_normal(2)]),
        "add": (ad.add, [a, b]),
        "scale": (lambda x, tape=None: ad.scale(x, 0.7, tape=tape), [a]),
        "axis_linear": (ad.axis_linear, [a, r.standard_normal((5, 4)), r.standard_normal(5)]),
        "fold_sides": (lambda x, tape=None: ad.fold_sides(x, 2, tape=tape), [a]),
        "unfold_sides": (lambda x, tape=None: ad.unfold_sides(x, 2, tape=tape), [r.standard_normal((4, 2, 3, 2))]),
        "mse": (lambda x, tape=None: ad.mse(x, target, tape=tape), [a]),
        "sum": (ad.sum_all, [a]),
        "composite_loss": (lambda p, tape=None: composite_loss(p, target[:, 0], (1.0, 3.0, 5.0), 2.0, 2, tape)[0],
                           [r.standard_normal((2, 1, 3, 4))]),
    }
    worst = {name: gradcheck(fn, arrays) for name, (fn, arrays) in checks.items()}

    # full loss through a tiny unshared-weight model: covers the side split/interleave ops too
    grid = build_swath_grid(8, 2, 10, 14)
    model = build_model(ArchConfig(n_blocks=1, n_channels=2, scales=ScaleList((8.0,)), share_side_weights=False),
                        grid, seed=1)
    for name, p in model.params.items():
        if name.startswith("exit"):
            p.data = r.standard_normal(p.data.shape)
    feats = r.standard_normal((2, model.cfg.in_channels) + grid.shape)
    grd, tru = r.standard_normal((2, 2) + grid.shape)

    def loss_value():
        return float(composite_loss(model.run(feats, grd, train=True), tru, (1.0, 3.0, 5.0), 2.0, 3)[0].data)

    tape = ad.Tape()
    loss, _ = composite_loss(model.run(feats, grd, train=True, tape=tape), tru, (1.0, 3.0, 5.0), 2.0, 3, tape)
    tape.backward(loss)
    worst["model+loss"] = max(rel_error(p.grad, numeric_grad(loss_value, p.data)) for p in model.params.values())
    dt = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    verdict(3, max(worst.values()) <= 1e-6 and dt < 60,
            f"{len(worst)} gradchecks, worst {top} rel err {worst[top]:.1e}, {dt:.1f} s")


def test_c04_side_isolation():
    t0 = time.perf_counter()
    grid = build_swath_grid(16, 2, 10, 20)
    s = grid.side_split
    r = np.random.default_rng(4)
    obs = SwathField(grid, r.standard_normal(grid.shape))
    grd = SwathField(grid, r.standard_normal(grid.shape))

    def models(ablations):
        m = build_model(ArchConfig(n_blocks=2, n_channels=4, scales=ScaleList((8.0, 16.0)),
                                   ablations=frozenset(ablations)), grid, seed=2)
        for name, p in m.params.items():
            if name.startswith("exit"):
                p.data = r.standard_normal(p.data.shape)
        return m

    iso, mixed = models({"no_mix"}), models(())
    base_iso, base_mix = forward(iso, obs, grd).values, forward(mixed, obs, grd).values
    leaks = silent = 0
    for i in range(grid.n_along):
        for j in range(s):
            for which in ("obs", "gridded"):
                o, g = obs.values.copy(), grd.values.copy()
                (o if which == "obs" else g)[i, j] += 1.0
                o, g = obs.with_values(o), grd.with_values(g)
                if not np.array_equal(forward(iso, o, g).values[:, s:], base_iso[:, s:]):
                    leaks += 1
                if np.array_equal(forward(mixed, o, g).values[:, s:], base_mix[:, s:]):
                    silent += 1
    n = 2 * grid.n_along * s
    dt = time.perf_counter() - t0
    verdict(4, leaks == 0 and silent == 0 and dt < 10,
            f"{n} left-side perturbations: {leaks} changed the right side without mixers, "
            f"{silent} left it unchanged with mixers; {dt:.1f} s")


def test_c05_band_variance_dominance(default_samples):
    # variance fractions pooled over the segments of a dataset; single segments scatter around this
    t0 = time.perf_counter()
    sig = default_scales().sigmas_km
    pre, post = rescaled_band_fractions([smp.obs.values for smp in default_samples], sig, 2.0)
    ratio = pre[0] / np.median(pre[1:])
    spread = post.max() / post.min()
    singles = [rescaled_band_fractions([smp.obs.values], sig, 2.0)[0] for smp in default_samples]
    worst = min(f[0] / np.median(f[1:]) for f in singles)
    dt = time.perf_counter() - t0
    verdict(5, ratio >= 1e3 and spread <= 10 and dt < 10,
            f"large-scale band / median other band {ratio:.0f} pooled over {len(default_samples)} segments "
            f"(lowest single segment {worst:.0f}); post-rescale max/min {spread:.3g}; {dt:.1f} s")


def test_c06_end_to_end():
    res = desk(experiments.DeskRun(), 6, 3.5)
    cal, grd = res["reports"]["calibrated"], res["reports"]["gridded"]
    ok = cal["rmse_m"] < 0.7 * grd["rmse_m"] and cal["rmse_grad"] < grd["rmse_grad"]
    verdict(6, ok, f"calibrated RMSE {cal['rmse_m']:.4e} vs 0.7 x gridded {0.7 * grd['rmse_m']:.4e} "
                   f"(ratio {cal['rmse_m'] / grd['rmse_m']:.3f}); grad-RMSE {cal['rmse_grad']:.3e} vs "
                   f"{grd['rmse_grad']:.3e}; run took {res['seconds'] / 60:.0f} min")


def test_c07_per_scale_superiority():
    res = desk(experiments.DeskRun(), 7, 3.5)
    sig = np.array(res["sigmas_km"])
    band = (sig >= 10) & (sig <= 100)
    e = {k: np.array(res["reports"][k]["per_scale"])[band] for k in ("calibrated", "obs", "gridded")}
    margin = e["calibrated"] - np.minimum(e["obs"], e["gridded"])
    worst = int(np.argmax(margin))
    verdict(7, np.all(margin <= 0), f"worst sigma {sig[band][worst]:g} km: calibrated {e['calibrated'][worst]:.4f} "
                                    f"vs min(obs, gridded) {min(e['obs'][worst], e['gridded'][worst]):.4f}")


def test_c08_ablation_directionality():
    seeds = (0, 1, 2)
    thresholds = {"no_gridded": 2.0, "no_scale_decomp": 1.2, "no_skip": 1.2, "no_mix": 1.0}
    ratios = {k: [] for k in thresholds}
    for seed in seeds:
        ref = rmse_of(desk(experiments.DeskRun(seed=seed), 8, 3.5 * 15))
        for abl in thresholds:
            ratios[abl].append(rmse_of(desk(experiments.DeskRun(seed=seed, ablations=(abl,)), 8, 3.5 * 15)) / ref)
    med = {k: float(np.median(v)) for k, v in ratios.items()}
    ok = all(med[k] >= t for k, t in thresholds.items() if k != "no_mix") and med["no_mix"] > 1.0
    verdict(8, ok, "median RMSE ratio to reference: " + ", ".join(f"{k} {v:.3f}" for k, v in med.items()))


def test_c09_preset_sensitivity():
    res = {p: desk(experiments.DeskRun(preset=p), 9, 3.5 * 3) for p in PRESET_ORDER}
    improves = all(rmse_of(r) < rmse_of(r, "gridded") for r in res.values())
    cal = [rmse_of(res[p]) for p in PRESET_ORDER]
    ordered = cal[0] > cal[1] > cal[2]
    verdict(9, improves and ordered,
            "calibrated/gridded: " + ", ".join(f"{p} {rmse_of(res[p]):.4e}/{rmse_of(res[p], 'gridded'):.4e}"
                                               for p in PRESET_ORDER))


def test_c10_determinism_and_serialization(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"field": {"nx": 200, "ny": 200}, "grid": {"n_along": 48}, "scales": "4x8",
                               "osse": {"segments_per_field": 1}}))

    def pipeline(tag):
        # same file names in separate directories: reports record the model file name
        (tmp_path / tag).mkdir()
        d, m, rep = (str(tmp_path / tag / k) for k in ("data", "m.swt", "r.json"))
        assert cli.main(["simulate", "--config", str(cfg), "--out", d, "--n-segments", "3", "--seed", "2"]) == 0
        assert cli.main(["train", "--data", d, "--config", str(cfg), "--arch", "4x1", "--epochs", "2",
                         "--out", m]) == 0
        assert cli.main(["eval", "--model", m, "--data", d, "--report", rep]) == 0
        files = {f"data/{n}": open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))}
        files["model"] = open(m, "rb").read()
        files["report"] = open(rep, "rb").read()
        return files

    a, b = pipeline("a"), pipeline("b")
    same = a == b

    # round trip every SWT payload type
    r = np.random.default_rng(10)
    grid = build_swath_grid(12, 2, 10, 14)
    sw = SwathField(grid, r.standard_normal(grid.shape))
    lossless = []
    swt.write_field(tmp_path / "f.swt", sw)
    lossless.append(np.array_equal(swt.read_field(tmp_path / "f.swt").values, sw.values))
    f2 = Field2D(r.standard_normal((6, 5)), 2.0)
    swt.write_field(tmp_path / "g.swt", f2)
    lossless.append(np.array_equal(swt.read_field(tmp_path / "g.swt").values, f2.values))
    st = decompose(sw, default_scales(3, 8))
    swt.write_stack(tmp_path / "s.swt", st)
    lossless.append(np.array_equal(swt.read_stack(tmp_path / "s.swt").bands, st.bands))
    model = calnet.load_model(str(tmp_path / "a" / "m.swt"))
    calnet.save_model(tmp_path / "m2.swt", model)
    back = calnet.load_model(tmp_path / "m2.swt").state_arrays()
    lossless.append(all(np.array_equal(v, back[k]) for k, v in model.state_arrays().items()))
    special = np.array([np.nan, np.inf, -0.0, 5e-324, 1.7976931348623157e308])
    lossless.append(swt.decode(swt.encode("x", {"v": special}))[1]["v"].tobytes() == special.tobytes())
    dt = time.perf_counter() - t0
    verdict(10, same and all(lossless) and dt < 300,
            f"{len(a)} artifacts byte-identical across runs: {same}; {sum(lossless)}/{len(lossless)} "
            f"SWT round trips lossless; {dt:.1f} s")
