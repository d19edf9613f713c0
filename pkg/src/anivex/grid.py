"""Uniform-lattice functions, quadrature, ball masks, and scaled convolution.

Lattice points sit at cell midpoints; all integrals are midpoint sums, which
are exact for cell-aligned indicators and second order for smooth integrands.
Functions are zero outside their box.
"""

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.signal import fftconvolve

from .errors import EmptyMask, ScaleTooFine


@dataclass(frozen=True)
class Grid:
    lower: tuple
    upper: tuple
    resolution: tuple

    def __post_init__(self):
        if any(r < 2 for r in self.resolution):
            raise ValueError("resolution must be >= 2 per axis")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("upper must exceed lower per axis")

    @property
    def n(self):
        return len(self.resolution)

    @property
    def spacing(self):
        return np.array(
            [(u - l) / r for l, u, r in zip(self.lower, self.upper, self.resolution)]
        )

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [
            l + (np.arange(r) + 0.5) * h
            for l, r, h in zip(self.lower, self.resolution, self.spacing)
        ]

    def meshes(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """All lattice points as an (N, n) array in C order (memoized)."""
        cached = getattr(self, "_points", None)
        if cached is None:
            meshes = self.meshes()
            cached = np.stack([m.ravel() for m in meshes], axis=1)
            cached.setflags(write=False)
            object.__setattr__(self, "_points", cached)
        return cached

    def key(self):
        return (self.lower, self.upper, self.resolution)


def uniform_grid(lower, upper, resolution):
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if np.isscalar(resolution) or np.ndim(resolution) == 0:
        resolution = (int(resolution),) * len(lower)
    return Grid(tuple(lower), tuple(upper), tuple(int(r) for r in resolution))


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != tuple(self.grid.resolution):
            raise ValueError(
                f"values shape {self.values.shape} != resolution {self.grid.resolution}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    def with_values(self, values):
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _coerce(other, self.grid))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _coerce(other, self.grid))

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * _coerce(other, self.grid))

    __rmul__ = __mul__

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))


def _coerce(other, grid):
    if isinstance(other, GridFunction):
        if other.grid.key() != grid.key():
            raise ValueError("grid mismatch")
        return other.values
    return other


def sample(grid, fn):
    """Sample a vectorized callable of the mesh coordinate arrays."""
    return GridFunction(grid, np.asarray(fn(*grid.meshes()), dtype=float))


def constant(grid, value=1.0):
    return GridFunction(grid, np.full(grid.resolution, float(value)))


def integrate(f):
    """Midpoint quadrature over the whole box."""
    return f.values.sum() * f.grid.cell_volume


def ball_lattice_mask(grid, d, ball):
    """Boolean mask of lattice points strictly inside the dilated ball."""
    vals = d.form_values(grid.points() - ball.center, ball.scale)
    return (vals < d.level_c).reshape(grid.resolution)


def indicator(grid, d, ball):
    return GridFunction(grid, ball_lattice_mask(grid, d, ball).astype(float))


def integrate_on_ball(f, d, ball):
    mask = ball_lattice_mask(f.grid, d, ball)
    if not mask.any():
        raise EmptyMask(f"ball at scale {ball.scale} misses every lattice point")
    return f.values[mask].sum() * f.grid.cell_volume


def ball_quadrature_measure(grid, d, ball):
    """Lattice measure of the ball: point count times cell volume."""
    mask = ball_lattice_mask(grid, d, ball)
    count = int(mask.sum())
    if count == 0:
        raise EmptyMask(f"ball at scale {ball.scale} misses every lattice point")
    return count * grid.cell_volume


def boundary_margin(grid, width):
    """Indicator of lattice points at distance >= width from the box boundary."""
    masks = []
    for ax, l, u in zip(grid.axes(), grid.lower, grid.upper):
        masks.append((ax >= l + width) & (ax <= u - width))
    full = masks[0]
    for m in masks[1:]:
        full = np.multiply.outer(full, m)
    return GridFunction(grid, full.reshape(grid.resolution).astype(float))


def kernel_grid(spacing, halfwidth):
    """Symmetric grid with the given spacing whose midpoints are integer
    multiples of it; required for exact alignment in convolutions."""
    spacing = np.atleast_1d(np.asarray(spacing, dtype=float))
    halfwidth = np.broadcast_to(np.atleast_1d(np.asarray(halfwidth, dtype=float)), spacing.shape)
    m = np.maximum(np.ceil(halfwidth / spacing).astype(int), 1)
    lower = -(m + 0.5) * spacing
    upper = (m + 0.5) * spacing
    return Grid(tuple(lower), tuple(upper), tuple(2 * m + 1))


def _offset_axes(grid, halfwidths):
    """Integer offset ranges covering the requested halfwidths, capped at the
    full difference range of the grid."""
    counts = []
    for h, hw, r in zip(grid.spacing, halfwidths, grid.resolution):
        counts.append(min(int(np.ceil(hw / h)) + 1, r - 1))
    return [np.arange(-c, c + 1) for c in counts]


def _monomial_basis(points, order):
    n = points.shape[1]
    cols = [np.ones(points.shape[0])]
    for deg in range(1, order + 1):
        for combo in combinations_with_replacement(range(n), deg):
            col = np.ones(points.shape[0])
            for axis in combo:
                col = col * points[:, axis]
            cols.append(col)
    return np.stack(cols, axis=1)


def _cancel_discrete_moments(kernel_vals, offset_points, order):
    """Subtract a polynomial on the kernel support so that all discrete
    moments up to the given order vanish exactly on the lattice."""
    support = kernel_vals.ravel() != 0.0
    if not support.any():
        return kernel_vals
    pts = offset_points[support]
    basis = _monomial_basis(pts, order)
    gram = basis.T @ basis
    moments = basis.T @ kernel_vals.ravel()[support]
    coef, *_ = np.linalg.lstsq(gram, moments, rcond=None)
    corrected = kernel_vals.ravel().copy()
    corrected[support] -= basis @ coef
    return corrected.reshape(kernel_vals.shape)


def scaled_kernel_samples(kernel, d, k, grid, moment_cancel=None):
    """Sample b^k * kernel(A^k z) on the integer-offset lattice of the grid."""
    bbox = np.array([0.5 * (u - l) for l, u in zip(kernel.grid.lower, kernel.grid.upper)])
    corners = np.array(np.meshgrid(*[(-w, w) for w in bbox], indexing="ij")).reshape(
        len(bbox), -1
    )
    scaled_corners = np.linalg.solve(d.power(k), corners)
    halfwidths = np.abs(scaled_corners).max(axis=1)
    if np.max(2.0 * halfwidths) < np.min(grid.spacing):
        raise ScaleTooFine(f"support of the scale-{k} kernel is below one cell")

    axes = _offset_axes(grid, halfwidths)
    offset_meshes = np.meshgrid(*[a * h for a, h in zip(axes, grid.spacing)], indexing="ij")
    offsets = np.stack([m.ravel() for m in offset_meshes], axis=1)
    mapped = offsets @ d.power(k).T
    idx = [
        (mapped[:, i] - kernel.grid.lower[i]) / kernel.grid.spacing[i] - 0.5
        for i in range(grid.n)
    ]
    vals = map_coordinates(kernel.values, np.stack(idx), order=1, cval=0.0)
    vals = (d.bpow(k) * vals).reshape([len(a) for a in axes])
    if moment_cancel is not None:
        vals = _cancel_discrete_moments(vals, offsets, moment_cancel)
    return vals


def convolve_scaled(f, kernel, d, k, moment_cancel=None):
    """Discrete f * phi_k with phi_k(x) = b^k * kernel(A^k x).

    The kernel is resampled on the grid's offset lattice by linear
    interpolation and the sum is scaled by the cell volume.  With
    moment_cancel=s the resampled kernel is corrected to annihilate sampled
    polynomials of degree <= s exactly.
    """
    vals = scaled_kernel_samples(kernel, d, k, f.grid, moment_cancel=moment_cancel)
    conv = fftconvolve(f.values, vals, mode="same") * f.grid.cell_volume
    return GridFunction(f.grid, conv)
