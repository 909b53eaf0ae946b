"""Discretization of the truncated strip [-L_z, L_z] x [0, lam].

The z-axis is a uniform finite-difference axis including both endpoints;
the y-axis is periodic and differentiated spectrally (exact for resolved
Fourier modes).  The one-sided exponential weight w(z) = 1 + e^{s z} is
sampled once at construction and drives all weighted quadrature.

Grids and fields are immutable value snapshots: every operator allocates
a fresh output array, so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid construction arguments."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on the truncated strip.

    z nodes: z_i = -L_z + i*dz, i = 0..n_z-1, dz = 2*L_z/(n_z-1)
    y nodes: y_j = j*dy,        j = 0..n_y-1, dy = lam/n_y (no repeated endpoint)
    weight : w(z_i) = 1 + e^{s z_i}, exact at every node
    """

    L_z: float
    n_z: int
    lam: float
    n_y: int
    s: float
    z: np.ndarray = field(repr=False, compare=False, default=None)
    y: np.ndarray = field(repr=False, compare=False, default=None)
    weight: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.L_z <= 0:
            raise GridError(f"L_z must be positive, got {self.L_z}")
        if self.n_z < 16:
            raise GridError(f"n_z must be >= 16, got {self.n_z}")
        if self.lam <= 0:
            raise GridError(f"lam must be positive, got {self.lam}")
        if self.n_y < 4 or self.n_y % 2 != 0:
            raise GridError(f"n_y must be even and >= 4, got {self.n_y}")
        z = np.linspace(-self.L_z, self.L_z, self.n_z)
        y = np.arange(self.n_y) * (self.lam / self.n_y)
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "weight", _frozen(1.0 + np.exp(self.s * z)))

    @property
    def dz(self) -> float:
        return 2.0 * self.L_z / (self.n_z - 1)

    @property
    def dy(self) -> float:
        return self.lam / self.n_y

    @property
    def wavenumbers_y(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*m/lam for the rfft bins m = 0..n_y/2."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.n_y, d=self.dy)

    def same_as(self, other: "Grid") -> bool:
        return (self.L_z, self.n_z, self.lam, self.n_y, self.s) == (
            other.L_z, other.n_z, other.lam, other.n_y, other.s)


def make_grid(L_z: float, n_z: int, lam: float, n_y: int, s: float) -> Grid:
    """Build the strip grid; rejects odd n_y and non-positive sizes."""
    return Grid(L_z=float(L_z), n_z=int(n_z), lam=float(lam), n_y=int(n_y), s=float(s))


@dataclass(frozen=True)
class ScalarField:
    """Real-valued function sampled on the grid, shape (n_z, n_y)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_z, self.grid.n_y):
            raise GridError(
                f"field shape {v.shape} does not match grid ({self.grid.n_z}, {self.grid.n_y})")
        object.__setattr__(self, "values", _frozen(v))

    def check_finite(self) -> "ScalarField":
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("field contains non-finite entries")
        return self

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _vals(other))

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _vals(x):
    return x.values if isinstance(x, ScalarField) else x


@dataclass(frozen=True)
class VectorField:
    """Two-component field (z-component, y-component) on one shared grid."""

    z: ScalarField
    y: ScalarField

    def __post_init__(self):
        if not self.z.grid.same_as(self.y.grid):
            raise GridError("vector field components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.z.grid

    def max_abs(self) -> float:
        return max(self.z.max_abs(), self.y.max_abs())


def field_from_function(grid: Grid, fn) -> ScalarField:
    """Sample fn(z, y) on the tensor grid (z broadcast along rows)."""
    Z, Y = np.meshgrid(grid.z, grid.y, indexing="ij")
    return ScalarField(grid, fn(Z, Y))


def zero_field(grid: Grid) -> ScalarField:
    return ScalarField(grid, np.zeros((grid.n_z, grid.n_y)))


# ---------------------------------------------------------------------------
# z-derivatives: 2nd-order central interior, 2nd-order one-sided at the ends.
# Exact for polynomials of degree <= 2, including the boundary stencils.
# ---------------------------------------------------------------------------

def ddz_array(v: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * dz)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dz)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dz)
    return out


def d2dz2_array(v: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dz**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dz**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dz**2
    return out


def ddy_array(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral d/dy along axis 1.

    The Nyquist bin is zeroed: the mode cos(pi*n_y*y/lam) alternates in sign
    on the collocation nodes and its pointwise derivative samples to zero, so
    zeroing is the exact collocation derivative of that mode.
    """
    vh = np.fft.rfft(v, axis=1)
    k = grid.wavenumbers_y.copy()
    k[-1] = 0.0
    vh *= 1j * k
    return np.fft.irfft(vh, n=grid.n_y, axis=1)


def d2dy2_array(v: np.ndarray, grid: Grid) -> np.ndarray:
    vh = np.fft.rfft(v, axis=1)
    vh *= -grid.wavenumbers_y**2
    return np.fft.irfft(vh, n=grid.n_y, axis=1)


def ddz(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, ddz_array(f.values, f.grid.dz))


def ddy(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, ddy_array(f.values, f.grid))


def laplacian(f: ScalarField) -> ScalarField:
    """3-point second difference in z plus spectral d2/dy2."""
    return ScalarField(
        f.grid, d2dz2_array(f.values, f.grid.dz) + d2dy2_array(f.values, f.grid))


def gradient(f: ScalarField) -> VectorField:
    return VectorField(ddz(f), ddy(f))


def divergence(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, ddz_array(v.z.values, v.grid.dz) + ddy_array(v.y.values, v.grid))


# ---------------------------------------------------------------------------
# Quadrature: trapezoid in z (matches the 2nd-order FD accuracy), exact
# rectangle rule in y for the full period.
# ---------------------------------------------------------------------------

def _trapz_weights(grid: Grid) -> np.ndarray:
    wz = np.full(grid.n_z, grid.dz)
    wz[0] = wz[-1] = 0.5 * grid.dz
    return wz


def integrate_array(v: np.ndarray, grid: Grid) -> float:
    return float(_trapz_weights(grid) @ v.sum(axis=1)) * grid.dy


def integrate(f: ScalarField) -> float:
    """Integral over the strip: trapezoid in z x rectangle in y."""
    return integrate_array(f.values, f.grid)


def integrate_weighted(f: ScalarField) -> float:
    """Same quadrature with the weight w(z_i) applied per row."""
    g = f.grid
    return float((_trapz_weights(g) * g.weight) @ f.values.sum(axis=1)) * g.dy


def mean_in_y(f: ScalarField) -> np.ndarray:
    """Per-z average over the periodic direction, shape (n_z,)."""
    return f.values.mean(axis=1)


def remove_mean_in_y(f: ScalarField) -> ScalarField:
    """Subtract the per-z y-average; idempotent projector."""
    return ScalarField(f.grid, f.values - f.values.mean(axis=1, keepdims=True))


def field_to_csv(f: ScalarField, path) -> None:
    """Snapshot format: header z,y,value; row-major over (z_i, y_j); 17 digits."""
    g = f.grid
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("z,y,value\n")
        for i in range(g.n_z):
            zi = g.z[i]
            row = f.values[i]
            for j in range(g.n_y):
                fh.write(f"{zi:.17g},{g.y[j]:.17g},{row[j]:.17g}\n")
