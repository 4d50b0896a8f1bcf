"""Synthetic ground-truth SSH fields and emulated nadir-based gridded products.

Truth fields come from isotropic spectral synthesis on a periodic grid; the
gridded products are Gaussian low-passed copies of the truth with an additive
correlated noise field. Three presets stand in for an optimal-interpolation
product and two neural mapping products of increasing quality. The slope-4
default spectrum is a stand-in, not a measured ocean spectrum.
"""
from dataclasses import dataclass

import numpy as np

PRESET_NAMES = ("oi_like", "neural_like", "neural_sst_like")


@dataclass
class Field2D:
    """SSH (m) on a regular grid; ``values[ix, iy]`` sits at (ix, iy) * pixel_km."""

    values: np.ndarray
    pixel_km: float = 2.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"field must be 2-D, got shape {self.values.shape}")
        if not self.pixel_km > 0:
            raise ValueError(f"pixel_km must be positive, got {self.pixel_km}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def nx(self):
        return self.values.shape[0]

    @property
    def ny(self):
        return self.values.shape[1]

    @property
    def extent_km(self):
        """(x_max, y_max) of the node lattice; the domain is [0, x_max] x [0, y_max]."""
        return ((self.nx - 1) * self.pixel_km, (self.ny - 1) * self.pixel_km)


@dataclass(frozen=True)
class FieldSpec:
    nx: int = 640
    ny: int = 640
    pixel_km: float = 2.0
    spectral_slope: float = 4.0
    rolloff_km: float = 300.0
    target_std_m: float = 0.30
    seed: int = 0

    def validate(self):
        if self.nx < 16 or self.ny < 16:
            raise ValueError(f"field must be at least 16x16, got {self.nx}x{self.ny}")
        if not self.pixel_km > 0:
            raise ValueError("pixel_km must be positive")
        if not self.spectral_slope > 0:
            raise ValueError("spectral_slope must be positive")
        if not self.rolloff_km > 0:
            raise ValueError("rolloff_km must be positive")
        if not self.target_std_m > 0:
            raise ValueError("target_std_m must be positive")


@dataclass(frozen=True)
class GriddedPreset:
    name: str
    lowpass_sigma_km: float
    noise_std_m: float
    noise_corr_km: float

    def validate(self):
        if not self.lowpass_sigma_km > 0:
            raise ValueError(f"{self.name}: lowpass_sigma_km must be positive")
        if self.noise_std_m < 0:
            raise ValueError(f"{self.name}: noise_std_m must be non-negative")
        if self.noise_std_m > 0 and not self.noise_corr_km > 0:
            raise ValueError(f"{self.name}: noise_corr_km must be positive")


PRESETS = {
    "oi_like": GriddedPreset("oi_like", 100.0, 0.02, 150.0),
    "neural_like": GriddedPreset("neural_like", 50.0, 0.01, 100.0),
    "neural_sst_like": GriddedPreset("neural_sst_like", 30.0, 0.005, 80.0),
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown gridded preset {name!r}; expected one of {PRESET_NAMES}") from None


def angular_wavenumbers(nx, ny, pixel_km):
    """Isotropic |k| in rad/km for an (nx, ny) FFT grid."""
    kx = 2 * np.pi * np.fft.fftfreq(nx, d=pixel_km)
    ky = 2 * np.pi * np.fft.fftfreq(ny, d=pixel_km)
    return np.hypot(kx[:, None], ky[None, :])


def synth_ssh_field(spec: FieldSpec) -> Field2D:
    """Random-phase spectral synthesis, rescaled to zero mean and ``target_std_m``.

    Amplitude follows ``(1 + (k * rolloff_km)**2) ** (-spectral_slope / 2)`` with
    ``k`` the angular wavenumber. The real part of the inverse transform is kept.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    k = angular_wavenumbers(spec.nx, spec.ny, spec.pixel_km)
    amplitude = (1.0 + (k * spec.rolloff_km) ** 2) ** (-spec.spectral_slope / 2.0)
    amplitude[0, 0] = 0.0
    phases = rng.uniform(0.0, 2 * np.pi, size=amplitude.shape)
    field = np.fft.ifft2(amplitude * np.exp(1j * phases)).real
    field -= field.mean()
    field *= spec.target_std_m / field.std()
    return Field2D(field, spec.pixel_km)


def gaussian_lowpass_2d(values, sigma_km, pixel_km):
    """Periodic isotropic Gaussian low-pass (exact transfer exp(-k^2 sigma^2 / 2))."""
    k = angular_wavenumbers(values.shape[0], values.shape[1], pixel_km)
    transfer = np.exp(-0.5 * (k * sigma_km) ** 2)
    return np.fft.ifft2(np.fft.fft2(values) * transfer).real


def correlated_noise_2d(shape, corr_km, std_m, pixel_km, rng):
    """White noise low-passed at ``corr_km`` and rescaled to ``std_m``."""
    white = rng.standard_normal(shape)
    smooth = gaussian_lowpass_2d(white, corr_km, pixel_km)
    smooth -= smooth.mean()
    return smooth * (std_m / smooth.std())


def emulate_gridded_product(truth: Field2D, preset: GriddedPreset, seed) -> Field2D:
    preset.validate()
    rng = np.random.default_rng(seed)
    product = gaussian_lowpass_2d(truth.values, preset.lowpass_sigma_km, truth.pixel_km)
    if preset.noise_std_m > 0:
        product = product + correlated_noise_2d(
            truth.values.shape, preset.noise_corr_km, preset.noise_std_m, truth.pixel_km, rng)
    return Field2D(product, truth.pixel_km)
