"""Periodic 1D grids, unitary Fourier coefficients and frequency projectors.

Coefficient convention: a field with node values ``phi_j`` has coefficients

    c_n = <e_n, phi> = (sqrt(L) / M) * sum_j phi_j exp(-i k_n x_j),

relative to the orthonormal plane waves ``e_n(x) = exp(i k_n x) / sqrt(L)``.
With this choice ``sum |c_n|^2`` equals the rectangle-rule mass
``sum |phi_j|^2 L / M`` exactly, and the same coefficients are reused as
one-particle mode amplitudes by :mod:`bosemf.fock`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the periodic box ``[0, L)`` with ``M`` nodes."""

    length: float
    points: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    n: np.ndarray = field(init=False, repr=False, compare=False)
    k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        L, M = self.length, self.points
        if not np.isfinite(L) or L <= 0:
            raise ValueError(f"box length must be positive, got {L}")
        if int(M) != M or M < 8 or M % 2:
            raise ValueError(f"point count must be an even integer >= 8, got {M}")
        object.__setattr__(self, "points", int(M))
        n = np.arange(-M // 2, M // 2)
        object.__setattr__(self, "x", _frozen(np.arange(M) * (L / M)))
        object.__setattr__(self, "n", _frozen(n))
        object.__setattr__(self, "k", _frozen(2 * np.pi * n / L))

    @property
    def spacing(self) -> float:
        return self.length / self.points

    @property
    def nyquist(self) -> float:
        """|k| of the unpaired mode n = -M/2."""
        return np.pi * self.points / self.length

    def to_coefficients(self, values: np.ndarray) -> np.ndarray:
        """Centered coefficients c_n, n = -M/2 .. M/2-1."""
        c = np.fft.fft(values) * (np.sqrt(self.length) / self.points)
        return np.fft.fftshift(c)

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.fft.ifftshift(np.asarray(coeffs, dtype=complex))
        return np.fft.ifft(c) * (self.points / np.sqrt(self.length))

    def integrate(self, f: np.ndarray) -> complex:
        return np.sum(f) * self.spacing


def make_grid(length: float, points: int) -> TorusGrid:
    return TorusGrid(float(length), points)


@dataclass(frozen=True)
class SpectralField:
    """Complex wavefunction sampled on a :class:`TorusGrid`."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.points,):
            raise ValueError(f"expected {self.grid.points} node values, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, grid: TorusGrid, func) -> "SpectralField":
        return cls(grid, func(grid.x))

    @classmethod
    def from_coefficients(cls, grid: TorusGrid, coeffs) -> "SpectralField":
        return cls(grid, grid.to_values(coeffs))

    def coefficients(self) -> np.ndarray:
        return self.grid.to_coefficients(self.values)

    def mass(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.spacing)

    def norm(self) -> float:
        return np.sqrt(self.mass())

    def inner(self, other: "SpectralField") -> complex:
        """<self, other>, antilinear in the first slot."""
        _check_same_grid(self, other)
        return complex(np.vdot(self.values, other.values) * self.grid.spacing)

    def normalized(self) -> "SpectralField":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize a zero field")
        return SpectralField(self.grid, self.values / nrm)

    def lp_norm(self, p: float) -> float:
        a = np.abs(self.values)
        if np.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.grid.spacing) ** (1.0 / p))

    def gradient_norm(self) -> float:
        """||d/dx phi||_{L^2}, spectrally."""
        c = self.coefficients()
        return float(np.sqrt(np.sum(self.grid.k**2 * np.abs(c) ** 2)))

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.values * scalar)

    __rmul__ = __mul__


def _check_same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def lp_project(phi: SpectralField, cutoff: float) -> SpectralField:
    """Sharp frequency cutoff: zero every mode with |k_n| > cutoff."""
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    c = phi.coefficients()
    c[np.abs(phi.grid.k) > cutoff] = 0.0
    return SpectralField.from_coefficients(phi.grid, c)


def sobolev_norm(phi: SpectralField, s: float) -> float:
    """Discrete H^s norm, sqrt(sum (1 + k_n^2)^s |c_n|^2)."""
    c = phi.coefficients()
    weights = (1.0 + phi.grid.k**2) ** s
    return float(np.sqrt(np.sum(weights * np.abs(c) ** 2)))


def hoelder_half_seminorm(phi: SpectralField, chunk: int = 256) -> float:
    """Max over node pairs of |phi(x) - phi(y)| / d(x, y)^(1/2), d the torus distance."""
    g = phi.grid
    v = phi.values
    M = g.points
    # pair (j, j + s) depends only on the shift s; distance is min(s, M - s) * h
    best = 0.0
    shifts = np.arange(1, M // 2 + 1)
    for start in range(0, len(shifts), chunk):
        s = shifts[start:start + chunk]
        diffs = np.abs(v[None, :] - v[(np.arange(M)[None, :] + s[:, None]) % M])
        dist = np.minimum(s, M - s) * g.spacing
        best = max(best, float((diffs.max(axis=1) / np.sqrt(dist)).max()))
    return best
