"""Along-track Gaussian scale-space of swath fields.

A field is split into S+1 telescoping bands
``[G1 f, G2 f - G1 f, ..., GS f - G(S-1) f, f - GS f]`` whose sum is ``f``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .swath_geom import SwathField, SwathGrid

TRUNCATE = 4.0


@dataclass(frozen=True)
class ScaleList:
    sigmas_km: tuple

    def __post_init__(self):
        s = np.asarray(self.sigmas_km, dtype=np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("a scale list needs at least one sigma")
        if np.any(s <= 0):
            raise ValueError("sigmas must be positive")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sigmas must be strictly increasing")

    def __len__(self):
        return len(self.sigmas_km)

    @property
    def n_bands(self):
        return len(self.sigmas_km) + 1


@dataclass
class ScaleStack:
    grid: SwathGrid
    scales: ScaleList
    bands: np.ndarray

    def __post_init__(self):
        expected = (self.scales.n_bands,) + self.grid.shape
        if self.bands.shape != expected:
            raise ValueError(f"bands shape {self.bands.shape} != {expected}")


def default_scales(n_bands=20, delta_km=8.0) -> ScaleList:
    if n_bands < 1 or not delta_km > 0:
        raise ValueError("need n_bands >= 1 and delta_km > 0")
    return ScaleList(tuple(float(delta_km * (i + 1)) for i in range(n_bands)))


def parse_scales(text) -> ScaleList:
    """``"NxD"``: N bands at D km spacing, e.g. ``"20x8"``."""
    try:
        n, d = text.lower().split("x")
        return default_scales(int(n), float(d))
    except (ValueError, AttributeError):
        raise ValueError(f"cannot parse scale string {text!r}; expected 'NxD' such as '20x8'") from None


def blur_kernel(sigma_km, pixel_km):
    """Sampled Gaussian of std ``sigma_km / pixel_km`` samples, cut at 4 sigma, summing to 1."""
    s = sigma_km / pixel_km
    r = max(1, int(np.ceil(TRUNCATE * s)))
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / s) ** 2)
    return k / k.sum()


def blur_along_array(values, sigma_km, pixel_km):
    """Blur ``values`` (n_along, m) along axis 0 with reflect boundaries."""
    if not sigma_km > 0:
        raise ValueError(f"sigma must be positive, got {sigma_km}")
    values = np.asarray(values, dtype=np.float64)
    flat = values.reshape(values.shape[0], -1)
    out = kernels.blur_columns(np.ascontiguousarray(flat), blur_kernel(sigma_km, pixel_km))
    return np.asarray(out).reshape(values.shape)


def gaussian_blur_along(f: SwathField, sigma_km) -> SwathField:
    return SwathField(f.grid, blur_along_array(f.values, sigma_km, f.grid.pixel_km))


def decompose_array(values, sigmas_km, pixel_km):
    """Band stack (S+1, n_along, ...) of ``values`` (n_along, ...)."""
    blurred = [blur_along_array(values, s, pixel_km) for s in sigmas_km]
    bands = np.empty((len(blurred) + 1,) + values.shape)
    bands[0] = blurred[0]
    for i in range(1, len(blurred)):
        bands[i] = blurred[i] - blurred[i - 1]
    bands[-1] = values - blurred[-1]
    return bands


def decompose(f: SwathField, scales: ScaleList) -> ScaleStack:
    return ScaleStack(f.grid, scales, decompose_array(f.values, scales.sigmas_km, f.grid.pixel_km))


def reconstruct(stack: ScaleStack) -> SwathField:
    return SwathField(stack.grid, stack.bands.sum(axis=0))


def band_variances(bands):
    return np.array([np.var(b) for b in bands])


def band_energy(stack: ScaleStack):
    """Fraction of the summed band variance carried by each band."""
    var = band_variances(stack.bands)
    total = var.sum()
    if not total > 0:
        raise ValueError("band energy is undefined for an all-zero (or constant-band) stack")
    return var / total
