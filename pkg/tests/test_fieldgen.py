import numpy as np
import pytest

from swotcal.fieldgen import (PRESETS, Field2D, FieldSpec, GriddedPreset, emulate_gridded_product, get_preset,
                              synth_ssh_field)


def _radial_slope(values, pixel_km, lam_lo=50.0, lam_hi=300.0, nbins=12):
    """Least-squares log-log slope of the radially averaged |FFT| between two wavelengths."""
    F = np.abs(np.fft.fft2(values))
    fx = np.fft.fftfreq(values.shape[0], d=pixel_km)
    fy = np.fft.fftfreq(values.shape[1], d=pixel_km)
    kk = np.hypot(fx[:, None], fy[None, :])
    lk = np.log(np.where(kk > 0, kk, 1e-12))
    edges = np.linspace(np.log(1 / lam_hi), np.log(1 / lam_lo), nbins)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (lk >= a) & (lk < b)
        xs.append(0.5 * (a + b))
        ys.append(np.log(F[m].mean()))
    return np.polyfit(xs, ys, 1)[0]


def test_std_is_exact():
    f = synth_ssh_field(FieldSpec(128, 96, 2.0, 4.0, 300.0, 0.30, seed=4))
    assert abs(f.values.std() - 0.30) < 1e-12
    assert abs(f.values.mean()) < 1e-12


def test_same_seed_is_bitwise():
    spec = FieldSpec(64, 64, seed=9)
    assert np.array_equal(synth_ssh_field(spec).values, synth_ssh_field(spec).values)


def test_spectrum_slope_default():
    slopes = [_radial_slope(synth_ssh_field(FieldSpec(seed=s)).values, 2.0) for s in range(20)]
    assert abs(np.mean(slopes) + 4.0) <= 0.5


def test_distinct_seeds_uncorrelated():
    # many independent modes: short rolloff on a large domain
    rho = [np.corrcoef(synth_ssh_field(FieldSpec(256, 256, 2.0, 4.0, 4.0, 0.3, seed=s)).values.ravel(),
                       synth_ssh_field(FieldSpec(256, 256, 2.0, 4.0, 4.0, 0.3, seed=s + 1)).values.ravel())[0, 1]
           for s in range(5)]
    assert np.all(np.abs(rho) < 0.1)


@pytest.mark.parametrize("kw", [{"nx": 8}, {"spectral_slope": 0.0}, {"target_std_m": -1.0}, {"pixel_km": 0.0}])
def test_degenerate_spec_rejected(kw):
    with pytest.raises(ValueError):
        synth_ssh_field(FieldSpec(**{"nx": 32, "ny": 32, **kw}))


def test_presets_and_lookup():
    assert get_preset("oi_like") == GriddedPreset("oi_like", 100.0, 0.02, 150.0)
    assert get_preset("neural_like") == GriddedPreset("neural_like", 50.0, 0.01, 100.0)
    assert get_preset("neural_sst_like") == GriddedPreset("neural_sst_like", 30.0, 0.005, 80.0)
    with pytest.raises(ValueError):
        get_preset("duacs")
    with pytest.raises(ValueError):
        emulate_gridded_product(Field2D(np.zeros((16, 16))), GriddedPreset("x", -1.0, 0.0, 1.0), 0)


def test_gridded_limit_case():
    truth = synth_ssh_field(FieldSpec(128, 128, seed=1))
    out = emulate_gridded_product(truth, GriddedPreset("x", 0.1 * 2.0, 0.0, 1.0), 0)
    assert np.max(np.abs(out.values - truth.values)) < 1e-3 * truth.values.std()


def test_gridded_constant_truth():
    truth = Field2D(np.full((32, 32), 0.4))
    out = emulate_gridded_product(truth, GriddedPreset("x", 20.0, 0.0, 1.0), 3)
    np.testing.assert_allclose(out.values, 0.4, atol=1e-14)


def test_gridded_linear_without_noise(rng):
    p = GriddedPreset("x", 30.0, 0.0, 1.0)
    a, b = Field2D(rng.standard_normal((64, 48))), Field2D(rng.standard_normal((64, 48)))
    lhs = emulate_gridded_product(Field2D(2.0 * a.values - 3.0 * b.values), p, 0).values
    rhs = 2.0 * emulate_gridded_product(a, p, 0).values - 3.0 * emulate_gridded_product(b, p, 0).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_preset_quality_ordering():
    for seed in range(10):
        truth = synth_ssh_field(FieldSpec(seed=seed))
        err = {name: np.sqrt(np.mean((emulate_gridded_product(truth, p, seed + 100).values - truth.values) ** 2))
               for name, p in PRESETS.items()}
        assert err["oi_like"] >= err["neural_like"] >= err["neural_sst_like"]
