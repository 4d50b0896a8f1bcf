"""Structured KaRIN-like error components on the swath.

Roll, phase, timing and baseline dilation have fixed across-track shapes
(linear, per-side linear, constant, quadratic) modulated by along-track series
with Gaussian autocorrelation. The wet-troposphere residual is an isotropic
correlated 2-D field on the swath.
"""
from dataclasses import dataclass, field

import numpy as np

from .swath_geom import SwathField, SwathGrid

ERROR_KINDS = ("roll", "phase", "timing", "baseline_dilation", "wet_tropo")

# edge std (m) and along-track correlation (km)
DEFAULT_AMPLITUDES = {
    "roll": (0.50, 500.0),
    "phase": (0.10, 300.0),
    "timing": (0.05, 200.0),
    "baseline_dilation": (0.05, 800.0),
    "wet_tropo": (0.02, 100.0),
}

X_MAX_KM = 60.0


@dataclass(frozen=True)
class ErrorSpec:
    kind: str
    edge_std_m: float
    corr_km: float
    seed: int = 0

    def validate(self):
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}; expected one of {ERROR_KINDS}")
        if self.edge_std_m < 0:
            raise ValueError(f"{self.kind}: edge_std_m must be >= 0")
        if not self.corr_km > 0:
            raise ValueError(f"{self.kind}: corr_km must be > 0")


@dataclass
class ErrorBundle:
    components: dict = field(default_factory=dict)
    total: SwathField = None


def default_error_specs(seed=0, scale=1.0):
    """One spec per kind at the default amplitudes; each kind gets its own sub-seed."""
    return [ErrorSpec(kind, scale * amp, corr, seed=seed * 16 + i)
            for i, (kind, (amp, corr)) in enumerate(DEFAULT_AMPLITUDES.items())]


def gaussian_kernel(sigma_samples, truncate=4.0):
    r = max(1, int(np.ceil(truncate * sigma_samples)))
    t = np.arange(-r, r + 1)
    k = np.exp(-0.5 * (t / sigma_samples) ** 2)
    return k / k.sum()


def _smooth_series(white, sigma_samples):
    kernel = gaussian_kernel(sigma_samples)
    return np.convolve(white, kernel, mode="valid")


def gen_alongtrack_series(n_along, pixel_km, corr_km, seed=0, rng=None):
    """Zero-mean, unit-variance series with autocorrelation exp(-lag^2 / (2 corr_km^2)).

    White noise convolved with a Gaussian kernel of std ``corr_km / sqrt(2)``
    has exactly that autocorrelation; the sample is then standardized.
    """
    if not corr_km > pixel_km:
        raise ValueError(f"corr_km ({corr_km}) must exceed pixel_km ({pixel_km})")
    if rng is None:
        rng = np.random.default_rng(seed)
    sigma = corr_km / np.sqrt(2.0) / pixel_km
    r = max(1, int(np.ceil(4.0 * sigma)))
    series = _smooth_series(rng.standard_normal(n_along + 2 * r), sigma)
    series = series - series.mean()
    return series / series.std()


def _wet_tropo_field(grid: SwathGrid, corr_km, rng):
    # white noise on a padded contiguous strip that includes the nadir gap,
    # so the 2-D correlation is isotropic in ground distance
    sigma = corr_km / np.sqrt(2.0) / grid.pixel_km
    r = max(1, int(np.ceil(4.0 * sigma)))
    offsets = grid.offsets
    span = int(round((offsets[-1] - offsets[0]) / grid.pixel_km)) + 1
    white = rng.standard_normal((grid.n_along + 2 * r, span + 2 * r))
    kernel = gaussian_kernel(sigma)
    smooth = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, white)
    smooth = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 1, smooth)
    cols = np.rint((offsets - offsets[0]) / grid.pixel_km).astype(int)
    values = smooth[:, cols]
    values = values - values.mean()
    return values / values.std()


def gen_error_component(grid: SwathGrid, spec: ErrorSpec, coefficients=None) -> SwathField:
    """One error component. ``coefficients`` overrides the random along-track series
    (a single array, or a ``(left, right)`` pair for phase)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    x = grid.offsets / X_MAX_KM
    n = grid.n_along

    def series():
        return gen_alongtrack_series(n, grid.pixel_km, spec.corr_km, rng=rng)

    if spec.kind == "wet_tropo":
        values = spec.edge_std_m * _wet_tropo_field(grid, spec.corr_km, rng)
    elif spec.kind == "phase":
        left, right = coefficients if coefficients is not None else (series(), series())
        c = np.empty((n, grid.n_across))
        c[:, :grid.side_split] = np.asarray(left)[:, None]
        c[:, grid.side_split:] = np.asarray(right)[:, None]
        values = spec.edge_std_m * c * x[None, :]
    else:
        c = np.asarray(coefficients) if coefficients is not None else series()
        if spec.kind == "roll":
            shape = x
        elif spec.kind == "timing":
            shape = np.ones_like(x)
        else:
            shape = x ** 2
        values = spec.edge_std_m * c[:, None] * shape[None, :]
    return SwathField(grid, values)


def corrupt(truth: SwathField, specs):
    """Add every error component to ``truth``; returns (obs, bundle)."""
    specs = list(specs)
    if not specs:
        raise ValueError("at least one error spec is required")
    kinds = [s.kind for s in specs]
    dupes = sorted({k for k in kinds if kinds.count(k) > 1})
    if dupes:
        raise ValueError(f"duplicate error kinds: {dupes}")
    components = {s.kind: gen_error_component(truth.grid, s) for s in specs}
    total = np.zeros(truth.grid.shape)
    for comp in components.values():
        total = total + comp.values
    bundle = ErrorBundle(components, SwathField(truth.grid, total))
    return SwathField(truth.grid, truth.values + total), bundle
