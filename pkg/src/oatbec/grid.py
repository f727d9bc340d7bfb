"""Spatial grids, spectral kinetic propagators and the Strang split-step kernel.

Two geometries are supported.  ``CARTESIAN_3D`` is a periodic box handled with
3D FFTs.  ``SPHERICAL_RADIAL_1D`` describes s-wave fields psi(r) on a
cell-centred radial grid r_j = (j + 1/2) dr; the radial Laplacian is applied to
u = r psi, which satisfies u(0) = u(R) = 0 and is diagonalised exactly by the
type-II discrete sine transform.

Fields may carry any number of leading axes (component, trajectory batch); the
trailing ``grid.ndim`` axes are spatial.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .constants import HBAR
from .errors import ConfigError, IntegrationError

MAX_POINTS = 4096
MIN_POINTS = 8


class Geometry(str, enum.Enum):
    CARTESIAN_3D = "cartesian3d"
    SPHERICAL_RADIAL_1D = "spherical1d"


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    geometry: Geometry
    points: tuple
    lengths: tuple
    coords: tuple          # per-axis coordinate vectors (m)
    weights: np.ndarray    # per-point volume element (m^3), full grid shape
    wavenumbers: tuple     # per-axis spectral wavenumbers (rad/m)
    k_squared: np.ndarray  # |k|^2 in spectral index order, full grid shape
    r_squared: np.ndarray  # |r|^2 per point, full grid shape

    @property
    def shape(self):
        return tuple(self.points)

    @property
    def ndim(self):
        return len(self.points)

    @property
    def axes(self):
        return tuple(range(-self.ndim, 0))

    @property
    def size(self):
        """Number of grid points, i.e. modes per field component."""
        return int(np.prod(self.points))

    @property
    def dv(self):
        if self.geometry is Geometry.CARTESIAN_3D:
            return float(np.prod([L / n for L, n in zip(self.lengths, self.points)]))
        return self.weights

    @property
    def volume(self):
        if self.geometry is Geometry.CARTESIAN_3D:
            return float(np.prod(self.lengths))
        return 4.0 / 3.0 * np.pi * self.lengths[0] ** 3

    def mesh(self):
        """Coordinate arrays broadcastable to the grid shape."""
        if self.geometry is Geometry.SPHERICAL_RADIAL_1D:
            return (self.coords[0],)
        x, y, z = self.coords
        return x[:, None, None], y[None, :, None], z[None, None, :]

    def to_dict(self):
        return {
            "geometry": self.geometry.value,
            "points": list(self.points),
            "lengths": list(self.lengths),
        }


def make_grid(geometry, points, lengths) -> Grid:
    """Build a grid.

    ``points`` and ``lengths`` are per-axis sequences (three entries for the
    Cartesian box, one for the radial grid).  Cartesian lengths are full box
    edges centred on the origin; the radial length is the outer radius R.
    """
    geometry = Geometry(geometry)
    points = tuple(int(p) for p in np.atleast_1d(points))
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    want = 3 if geometry is Geometry.CARTESIAN_3D else 1
    if len(points) != want or len(lengths) != want:
        raise ConfigError(f"{geometry.value} grid needs {want} points/lengths entries", key="grid")
    for p in points:
        if p < MIN_POINTS or p > MAX_POINTS:
            raise ConfigError(f"grid points per axis must be in [{MIN_POINTS}, {MAX_POINTS}], got {p}",
                              key="grid.points")
    for L in lengths:
        if not np.isfinite(L) or L <= 0:
            raise ConfigError(f"grid lengths must be positive, got {L}", key="grid.lengths_m")

    if geometry is Geometry.CARTESIAN_3D:
        coords, ks = [], []
        for n, L in zip(points, lengths):
            dx = L / n
            coords.append(-L / 2 + dx * np.arange(n))
            ks.append(2 * np.pi * np.fft.fftfreq(n, d=dx))
        kx, ky, kz = ks
        k2 = kx[:, None, None] ** 2 + ky[None, :, None] ** 2 + kz[None, None, :] ** 2
        x, y, z = coords
        r2 = x[:, None, None] ** 2 + y[None, :, None] ** 2 + z[None, None, :] ** 2
        dv = np.prod([L / n for L, n in zip(lengths, points)])
        weights = np.full(points, dv)
    else:
        (n,), (R,) = points, lengths
        dr = R / n
        r = (np.arange(n) + 0.5) * dr
        k = np.pi * np.arange(1, n + 1) / R
        coords, ks = [r], [k]
        k2 = k ** 2
        r2 = r ** 2
        weights = 4 * np.pi * r ** 2 * dr

    return Grid(
        geometry=geometry,
        points=points,
        lengths=lengths,
        coords=tuple(_frozen(c) for c in coords),
        weights=_frozen(weights),
        wavenumbers=tuple(_frozen(k) for k in ks),
        k_squared=_frozen(k2),
        r_squared=_frozen(r2),
    )


# -- spectral transforms ------------------------------------------------------

def to_spectral(grid: Grid, psi, workers=None):
    if grid.geometry is Geometry.CARTESIAN_3D:
        return sfft.fftn(psi, axes=grid.axes, workers=workers)
    return sfft.dst(psi * grid.coords[0], type=2, norm="ortho", axis=-1, workers=workers)


def from_spectral(grid: Grid, spec, workers=None):
    if grid.geometry is Geometry.CARTESIAN_3D:
        return sfft.ifftn(spec, axes=grid.axes, workers=workers)
    return sfft.idst(spec, type=2, norm="ortho", axis=-1, workers=workers) / grid.coords[0]


def neg_laplacian(grid: Grid, psi):
    """-nabla^2 psi evaluated spectrally."""
    return from_spectral(grid, grid.k_squared * to_spectral(grid, psi))


def integrate(grid: Grid, f):
    """Sum f * dv over the spatial axes."""
    return np.sum(f * grid.weights, axis=grid.axes)


def norm(grid: Grid, psi):
    return integrate(grid, np.abs(psi) ** 2)


def kinetic_phase_factors(grid: Grid, dt, mass, imaginary=False):
    """Spectral multipliers exp(-i hbar k^2 dt / 2m).

    With ``imaginary=True`` the imaginary-time multipliers exp(-hbar k^2 dt / 2m)
    are returned instead.
    """
    if dt <= 0 or mass <= 0:
        raise ConfigError("kinetic factors need dt > 0 and mass > 0")
    arg = HBAR * grid.k_squared * dt / (2 * mass)
    if imaginary:
        return np.exp(-arg)
    return np.exp(-1j * arg)


def apply_kinetic(grid: Grid, psi, factors, workers=None):
    return from_spectral(grid, factors * to_spectral(grid, psi, workers), workers)


PointwiseEnergy = Callable[[np.ndarray], np.ndarray]


def _check_finite(psi, step):
    if not np.isfinite(np.sum(psi.real * psi.real + psi.imag * psi.imag)):
        raise IntegrationError(f"non-finite field values at step {step}", step=step)


def split_step(fields, grid: Grid, half_kinetic, pointwise_energy: PointwiseEnergy, dt, step_index=0):
    """One symmetric Strang step: half kinetic, full pointwise phase, half kinetic.

    ``pointwise_energy(psi)`` returns the real local energy (J) multiplying each
    component; it is evaluated on the post-half-kinetic fields, and since a real
    phase rotation leaves |psi|^2 unchanged the pointwise sub-step is exact.
    """
    psi = apply_kinetic(grid, fields, half_kinetic)
    psi = psi * np.exp((-1j * dt / HBAR) * pointwise_energy(psi))
    psi = apply_kinetic(grid, psi, half_kinetic)
    _check_finite(psi, step_index)
    return psi


class SplitStepper:
    """Repeated Strang steps with the adjacent half-kinetic factors fused."""

    def __init__(self, grid: Grid, mass, dt, pointwise_energy: PointwiseEnergy, workers=None):
        self.grid = grid
        self.mass = mass
        self.dt = dt
        self.energy = pointwise_energy
        self.workers = workers
        self._half = kinetic_phase_factors(grid, dt / 2, mass)
        self._full = self._half * self._half
        self.steps_taken = 0

    def _nonlinear(self, psi, dt):
        return psi * np.exp((-1j * dt / HBAR) * self.energy(psi))

    def advance(self, fields, n_steps):
        if n_steps <= 0:
            return fields
        grid, w = self.grid, self.workers
        psi = apply_kinetic(grid, fields, self._half, w)
        for i in range(n_steps):
            psi = self._nonlinear(psi, self.dt)
            psi = apply_kinetic(grid, psi, self._full if i < n_steps - 1 else self._half, w)
            self.steps_taken += 1
            _check_finite(psi, self.steps_taken)
        return psi

    def advance_time(self, fields, duration):
        """Advance by exactly ``duration``: whole steps of dt plus one shorter step."""
        if duration < 0:
            raise ValueError("duration must be non-negative")
        n = int(np.floor(duration / self.dt * (1 + 1e-12)))
        fields = self.advance(fields, n)
        rest = duration - n * self.dt
        if rest > 1e-9 * self.dt:
            half = kinetic_phase_factors(self.grid, rest / 2, self.mass)
            fields = split_step(fields, self.grid, half, self.energy, rest, self.steps_taken + 1)
            self.steps_taken += 1
        return fields
