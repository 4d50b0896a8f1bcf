"""Two-sided swath geometry, bilinear sampling and gap-aware difference operators.

Array convention: swath arrays are ``(..., n_along, n_across)``; columns
``[:side_split]`` are the left side (negative offsets), the rest the right side.
No difference stencil ever reads across the nadir gap.
"""
from dataclasses import dataclass

import numpy as np

from .fieldgen import Field2D

# KaRIN swath extent off nadir (km)
GAP_KM = (10.0, 60.0)


@dataclass(frozen=True)
class SwathGrid:
    n_along: int
    pixel_km: float
    across_offsets_km: tuple
    side_split: int

    def __post_init__(self):
        offsets = np.asarray(self.across_offsets_km, dtype=np.float64)
        if self.n_along < 3:
            raise ValueError(f"n_along must be >= 3, got {self.n_along}")
        if not self.pixel_km > 0:
            raise ValueError(f"pixel_km must be positive, got {self.pixel_km}")
        if offsets.ndim != 1 or offsets.size < 2 or np.any(np.diff(offsets) <= 0):
            raise ValueError("across_offsets_km must be strictly increasing")
        if 2 * self.side_split != offsets.size:
            raise ValueError("left and right sides must have the same column count")
        if np.any(offsets[:self.side_split] >= 0) or np.any(offsets[self.side_split:] <= 0):
            raise ValueError("side_split must separate negative from positive offsets")
        a = np.abs(offsets)
        if np.any(a < GAP_KM[0] - 1e-9) or np.any(a > GAP_KM[1] + 1e-9):
            raise ValueError(f"across offsets must lie {GAP_KM[0]:g}-{GAP_KM[1]:g} km off nadir")

    @property
    def offsets(self):
        return np.asarray(self.across_offsets_km, dtype=np.float64)

    @property
    def n_across(self):
        return len(self.across_offsets_km)

    @property
    def shape(self):
        return (self.n_along, self.n_across)

    @property
    def outer_km(self):
        return float(np.max(np.abs(self.offsets)))

    def to_dict(self):
        return {"n_along": self.n_along, "pixel_km": self.pixel_km,
                "across_offsets_km": list(self.across_offsets_km), "side_split": self.side_split}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_along"]), float(d["pixel_km"]),
                   tuple(float(v) for v in d["across_offsets_km"]), int(d["side_split"]))


@dataclass
class SwathField:
    grid: SwathGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("swath field contains non-finite values")

    def with_values(self, values):
        return SwathField(self.grid, values)


def build_swath_grid(n_along=512, pixel_km=2.0, inner_km=10.0, outer_km=60.0) -> SwathGrid:
    """Pixel centres at every ``pixel_km`` from ``inner_km`` to ``outer_km`` inclusive, both sides."""
    if n_along <= 0 or pixel_km <= 0 or inner_km <= 0 or outer_km <= 0:
        raise ValueError("swath sizes must be positive")
    if inner_km >= outer_km:
        raise ValueError(f"inner_km ({inner_km}) must be < outer_km ({outer_km})")
    steps = (outer_km - inner_km) / pixel_km
    n_steps = int(round(steps))
    if abs(steps - n_steps) > 1e-9:
        raise ValueError(f"pixel_km ({pixel_km}) must divide outer_km - inner_km ({outer_km - inner_km})")
    right = inner_km + pixel_km * np.arange(n_steps + 1)
    offsets = np.concatenate([-right[::-1], right])
    return SwathGrid(int(n_along), float(pixel_km), tuple(float(v) for v in offsets), n_steps + 1)


def bilinear_sample(field: Field2D, points):
    """Bilinear interpolation of ``field`` at ``points`` (P, 2) given in km."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x_max, y_max = field.extent_km
    tol = 1e-9 * max(x_max, y_max, 1.0)
    bad = ((pts[:, 0] < -tol) | (pts[:, 0] > x_max + tol)
           | (pts[:, 1] < -tol) | (pts[:, 1] > y_max + tol))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"point ({pts[i, 0]:.6g}, {pts[i, 1]:.6g}) km lies outside the field "
                         f"bounds [0, {x_max:.6g}] x [0, {y_max:.6g}] km")
    gx = np.clip(pts[:, 0] / field.pixel_km, 0.0, field.nx - 1)
    gy = np.clip(pts[:, 1] / field.pixel_km, 0.0, field.ny - 1)
    ix = np.minimum(np.floor(gx).astype(np.int64), field.nx - 2)
    iy = np.minimum(np.floor(gy).astype(np.int64), field.ny - 2)
    tx = gx - ix
    ty = gy - iy
    v = field.values
    return ((1 - tx) * (1 - ty) * v[ix, iy] + tx * (1 - ty) * v[ix + 1, iy]
            + (1 - tx) * ty * v[ix, iy + 1] + tx * ty * v[ix + 1, iy + 1])


def swath_points(grid: SwathGrid, origin, heading_rad):
    """Ground coordinates (n_along, n_across, 2) in km of every swath pixel centre."""
    along = np.array([np.cos(heading_rad), np.sin(heading_rad)])
    across = np.array([-np.sin(heading_rad), np.cos(heading_rad)])
    s = grid.pixel_km * np.arange(grid.n_along)
    return (np.asarray(origin, dtype=np.float64)[None, None, :]
            + s[:, None, None] * along[None, None, :]
            + grid.offsets[None, :, None] * across[None, None, :])


def sample_swath(field: Field2D, grid: SwathGrid, origin, heading_rad) -> SwathField:
    pts = swath_points(grid, origin, heading_rad)
    values = bilinear_sample(field, pts.reshape(-1, 2)).reshape(grid.shape)
    return SwathField(grid, values)


# ---------------------------------------------------------------------------
# difference operators on raw arrays, with their adjoints (needed by the loss)

def _diff(f, h, axis):
    f = np.moveaxis(f, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * h)
    out[..., 0] = (f[..., 1] - f[..., 0]) / h
    out[..., -1] = (f[..., -1] - f[..., -2]) / h
    return np.moveaxis(out, -1, axis)


def _diff_adjoint(g, h, axis):
    g = np.moveaxis(g, axis, -1)
    out = np.zeros_like(g)
    out[..., :-2] -= g[..., 1:-1] / (2 * h)
    out[..., 2:] += g[..., 1:-1] / (2 * h)
    out[..., 0] -= g[..., 0] / h
    out[..., 1] += g[..., 0] / h
    out[..., -2] -= g[..., -1] / h
    out[..., -1] += g[..., -1] / h
    return np.moveaxis(out, -1, axis)


def _second_diff(f, h, axis):
    # replicated edges; the matrix is symmetric, so this is its own adjoint
    f = np.moveaxis(f, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]
    out[..., 0] = f[..., 1] - f[..., 0]
    out[..., -1] = f[..., -2] - f[..., -1]
    return np.moveaxis(out / (h * h), -1, axis)


def _per_side(fn, f, split):
    return np.concatenate([fn(f[..., :split]), fn(f[..., split:])], axis=-1)


def gradient_arrays(f, pixel_km, split):
    """(d_along, d_across) of ``f`` (..., n_along, n_across), in m/km."""
    if f.shape[-2] < 3 or split < 2 or f.shape[-1] - split < 2:
        raise ValueError(f"array of shape {f.shape} too small for differencing")
    d_al = _diff(f, pixel_km, -2)
    d_ac = _per_side(lambda s: _diff(s, pixel_km, -1), f, split)
    return d_al, d_ac


def gradient_adjoint(g_al, g_ac, pixel_km, split):
    return (_diff_adjoint(g_al, pixel_km, -2)
            + _per_side(lambda s: _diff_adjoint(s, pixel_km, -1), g_ac, split))


def laplacian_array(f, pixel_km, split):
    if f.shape[-2] < 3 or split < 2 or f.shape[-1] - split < 2:
        raise ValueError(f"array of shape {f.shape} too small for differencing")
    return (_second_diff(f, pixel_km, -2)
            + _per_side(lambda s: _second_diff(s, pixel_km, -1), f, split))


def swath_gradient(f: SwathField):
    d_al, d_ac = gradient_arrays(f.values, f.grid.pixel_km, f.grid.side_split)
    return SwathField(f.grid, d_al), SwathField(f.grid, d_ac)


def swath_laplacian(f: SwathField) -> SwathField:
    return SwathField(f.grid, laplacian_array(f.values, f.grid.pixel_km, f.grid.side_split))
