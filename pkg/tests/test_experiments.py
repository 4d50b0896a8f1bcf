import json

from swotcal import experiments
from swotcal.experiments import DeskRun
from swotcal.scale_space import parse_scales

TINY = {"field": {"nx": 200, "ny": 200}, "grid": {"n_along": 48}, "scales": "3x8",
        "eval": {"scales": "4x10"}, "osse": {"segments_per_field": 1}}


def tiny_run(**kw):
    return DeskRun(n_train=3, n_val=1, n_eval=2, arch="2x1", epochs=2, overrides=TINY, **kw)


def test_artifact_names_distinguish_runs():
    names = {experiments.artifact_name(r) for r in (
        DeskRun(), DeskRun(seed=1), DeskRun(preset="oi_like"), DeskRun(ablations=("no_mix",)),
        DeskRun(epochs=10), DeskRun(n_train=20), DeskRun(overrides={"seed": 3}),
        DeskRun(eval_sigmas=parse_scales("5x10")))}
    assert len(names) == 8
    assert experiments.artifact_name(DeskRun()) == "32x1_ref_default_s0_n500-50-50_e50.json"


def test_run_desk_and_cache(tmp_path):
    run = tiny_run()
    assert experiments.cached_run(run, tmp_path, compute=False) is None
    res = experiments.cached_run(run, tmp_path)
    assert set(res["reports"]) == {"obs", "gridded", "calibrated"}
    assert res["sigmas_km"] == [10.0, 20.0, 30.0, 40.0]
    assert len(res["history"]) == 2 and res["best_val_rmse"] <= res["initial_val_rmse"]
    stored = json.loads((tmp_path / experiments.artifact_name(run)).read_text())
    assert experiments.cached_run(run, tmp_path, compute=False) == stored


def test_main_usage(capsys):
    assert experiments.main([]) == 1
    assert "usage" in capsys.readouterr().err
