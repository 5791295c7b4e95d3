"""Counting of particles outside the condensate state.

``P_k`` (exactly k particles not in phi) is the eigenprojector of the mode
number operator ``N_phi = a^dagger(phi) a(phi)`` at eigenvalue ``N - k``.
The weights ``w_k = <Phi, P_k Phi>`` come from the moments of ``N_phi``
(Vandermonde solve) with the Lagrange interpolation projectors as
fallback.

When ``phi`` has weight outside the mode window (``phi`` an NLS solution on
the full grid), ``p`` compressed to the window is ``s |c><c|`` with
``s = ||P_window phi||^2`` and ``c`` the normalized window part.  A
particle in ``c`` is then "in phi" with probability ``s``, and a particle
orthogonal to ``c`` never is, so the weights are a binomial thinning of
the in-window distribution.  Everything else requires a windowed phi.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import binom

from .fock import FockVector, number_operator, one_body_operator
from .grid import SpectralField
from .observables import reference_vector

log = logging.getLogger(__name__)

MAX_PARTICLES = 12
NEGATIVE_CLAMP = 1e-10
# negatives above this are plain round-off and are clamped without a warning
ROUNDOFF = 1e-14
SUM_TOL = 1e-8
# a Vandermonde solve is trusted only when cond * machine-eps stays below this
VANDERMONDE_ERROR_BUDGET = 1e-10


class CountingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class WeightFunction:
    """Tabulated f(0), ..., f(N) with a name tag."""

    values: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("weight function must be a finite 1D table")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_particles(self) -> int:
        return len(self.values) - 1

    def __call__(self, k):
        return self.values[k]

    def __mul__(self, other: "WeightFunction") -> "WeightFunction":
        if self.n_particles != other.n_particles:
            raise ValueError("weight functions for different N")
        return WeightFunction(self.values * other.values, f"{self.name}*{other.name}")

    @classmethod
    def m_N(cls, n_particles: int) -> "WeightFunction":
        return cls(np.arange(n_particles + 1) / n_particles, "m_N")

    @classmethod
    def n_N(cls, n_particles: int) -> "WeightFunction":
        return cls(np.sqrt(np.arange(n_particles + 1) / n_particles), "n_N")

    @classmethod
    def constant(cls, n_particles: int, value: float = 1.0) -> "WeightFunction":
        return cls(np.full(n_particles + 1, float(value)), "const")

    @classmethod
    def from_callable(cls, f: Callable[[int], float], n_particles: int, name: str = "custom") -> "WeightFunction":
        return cls(np.array([f(k) for k in range(n_particles + 1)], dtype=float), name)


@dataclass(frozen=True)
class CountingDistribution:
    """w_k = probability that exactly k particles are not in phi."""

    n_particles: int
    weights: np.ndarray
    method: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def expectation(self, f: WeightFunction) -> float:
        return float(f.values @ self.weights)

    @property
    def alpha(self) -> float:
        return self.expectation(WeightFunction.m_N(self.n_particles))

    @property
    def beta(self) -> float:
        return self.expectation(WeightFunction.n_N(self.n_particles))


def _check_n(N: int):
    if N > MAX_PARTICLES:
        raise ValueError(f"counting limited to N <= {MAX_PARTICLES}, got {N}")
    if N < 1:
        raise ValueError("counting needs N >= 1")


def _bad_count_order(by_occupation: np.ndarray) -> np.ndarray:
    """Map weights indexed by the eigenvalue j of N_phi to k = N - j bad particles."""
    return by_occupation[::-1]


def _validate(w: np.ndarray, where: str, noise: float = ROUNDOFF) -> np.ndarray:
    """Check weights; negatives above ``-noise`` are the solve's own round-off and are clamped silently."""
    if not np.all(np.isfinite(w)):
        raise CountingError(f"{where}: non-finite weights")
    low = w.min()
    if low < -NEGATIVE_CLAMP:
        raise CountingError(f"{where}: weight {low:.3e} below -{NEGATIVE_CLAMP}")
    if abs(w.sum() - 1) > SUM_TOL:
        raise CountingError(f"{where}: weights sum to {w.sum()!r}")
    if low < -max(noise, ROUNDOFF):
        log.warning("%s: clamping negative weights (min %.2e) to zero", where, low)
    return np.maximum(w, 0.0)


def _occupation_by_moments(vec: FockVector, Nop) -> tuple[np.ndarray, float]:
    """Weights by eigenvalue of N_phi, and the round-off level cond(V) * eps of the solve."""
    N = vec.basis.n_particles
    # scaled nodes j / N keep the Vandermonde system as well conditioned as possible
    nodes = np.arange(N + 1) / N
    V = np.vander(nodes, increasing=True).T
    cond = np.linalg.cond(V)
    if cond * np.finfo(float).eps > VANDERMONDE_ERROR_BUDGET:
        raise CountingError(f"Vandermonde condition number {cond:.2e} too large")
    mu = np.empty(N + 1)
    v = vec.amplitudes
    u = v
    for m in range(N + 1):
        mu[m] = np.vdot(v, u).real
        u = (Nop @ u) / N
    return np.linalg.solve(V, mu), float(cond * np.finfo(float).eps)


def _eigenprojections(vec: FockVector, Nop) -> np.ndarray:
    """Rows j = 0..N: prod_{i != j} (N_phi - i) / (j - i) applied to the amplitudes."""
    N = vec.basis.n_particles
    out = np.empty((N + 1, vec.basis.dim), dtype=complex)
    for j in range(N + 1):
        u = vec.amplitudes
        for i in range(N + 1):
            if i != j:
                u = (Nop @ u - i * u) / (j - i)
        out[j] = u
    return out


def _occupation_by_lagrange(vec: FockVector, Nop) -> np.ndarray:
    proj = _eigenprojections(vec, Nop)
    return np.array([np.vdot(vec.amplitudes, p).real for p in proj])


def _thin(u_occ: np.ndarray, s: float) -> np.ndarray:
    """Bad-particle distribution when each particle in c is good with probability s."""
    N = len(u_occ) - 1
    w = np.zeros(N + 1)
    for m, um in enumerate(u_occ):
        # N - m particles are orthogonal to c; of the m in c, Binomial(m, 1 - s) are bad
        j = np.arange(m + 1)
        w[N - m + j] += um * binom.pmf(j, m, 1 - s)
    return w


def pk_distribution(vec: FockVector, phi, method: str = "auto") -> CountingDistribution:
    """Distribution of the number of particles not in ``phi``.

    ``method`` is ``"moments"``, ``"lagrange"`` or ``"auto"`` (moments with
    automatic fallback).  ``phi`` is a grid field or a window coefficient
    vector; it is normalized here.
    """
    N = vec.basis.n_particles
    _check_n(N)
    c, tail = reference_vector(phi, vec.basis.modes)
    s = float(np.vdot(c, c).real)
    Nop = number_operator(c, vec.basis)
    vec = vec.normalized()
    used = method
    if method in ("auto", "moments"):
        try:
            u, noise = _occupation_by_moments(vec, Nop)
            u = _validate(u, "moments", noise)
            used = "moments"
        except CountingError as exc:
            if method == "moments":
                raise
            log.info("moment path rejected (%s); using Lagrange projectors", exc)
            used = "lagrange"
    elif method != "lagrange":
        raise ValueError(f"unknown method {method!r}")
    if used == "lagrange":
        u = _validate(_occupation_by_lagrange(vec, Nop), "lagrange")
    w = _bad_count_order(u)
    if tail > 1e-14:
        w = _thin(u, s)
    return CountingDistribution(N, w, used)


def method_agreement(vec: FockVector, phi) -> float:
    """Max difference between the moment and Lagrange weights (logged)."""
    a = pk_distribution(vec, phi, "moments").weights
    b = pk_distribution(vec, phi, "lagrange").weights
    diff = float(np.abs(a - b).max())
    log.debug("moment/Lagrange weight agreement %.3e", diff)
    return diff


def alpha(vec: FockVector, phi) -> float:
    """<Phi, m_N-hat Phi> = sum (k / N) w_k."""
    return pk_distribution(vec, phi).alpha


def beta(vec: FockVector, phi) -> float:
    """<Phi, n_N-hat Phi> = sum sqrt(k / N) w_k."""
    return pk_distribution(vec, phi).beta


def _require_windowed(phi, modes) -> np.ndarray:
    c, tail = reference_vector(phi, modes)
    if tail > 1e-10:
        raise ValueError(f"phi has norm {tail:.3e} outside the mode window")
    return c


def hat_apply(f, vec: FockVector, phi) -> FockVector:
    """f-hat Phi = sum_k f(k) P_k Phi via Lagrange eigenprojectors of N_phi.

    ``f`` is a :class:`WeightFunction` or a callable on 0..N.
    """
    N = vec.basis.n_particles
    _check_n(N)
    c = _require_windowed(phi, vec.basis.modes)
    if isinstance(f, WeightFunction):
        if f.n_particles != N:
            raise ValueError(f"weight function tabulated for N={f.n_particles}, state has N={N}")
        table = f.values
    else:
        table = np.array([f(k) for k in range(N + 1)], dtype=float)
    proj = _eigenprojections(vec, number_operator(c, vec.basis))
    # eigenvalue j carries k = N - j bad particles
    out = _bad_count_order(table) @ proj
    return FockVector(vec.basis, out)


def grad_q1_norm(vec: FockVector, phi) -> float:
    """||d/dx_1 q_1 Phi||^2 = (1/N) <Phi, dGamma(q T q) Phi>, T = -d^2/dx^2."""
    modes = vec.basis.modes
    if isinstance(phi, SpectralField):
        nrm = phi.norm()
        kin = (phi.gradient_norm() / nrm) ** 2
    else:
        kin = None
    c, _ = reference_vector(phi, modes)
    if kin is None:
        kin = float(np.sum(modes.k**2 * np.abs(c) ** 2))
    k2 = modes.k**2
    Tc = k2 * c
    A = np.diag(k2).astype(complex) - np.outer(Tc, c.conj()) - np.outer(c, Tc.conj()) + kin * np.outer(c, c.conj())
    val = vec.normalized().expectation(one_body_operator(vec.basis, A)) / vec.basis.n_particles
    if val < -1e-10:
        raise CountingError(f"negative kinetic expectation {val!r}")
    return max(val, 0.0)


COUNTING_COLUMNS = ("k", "w_k", "n_N", "m_N")


def write_counting_csv(dist: CountingDistribution, path) -> None:
    N = dist.n_particles
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COUNTING_COLUMNS)
        for k in range(N + 1):
            w.writerow([k, repr(float(dist.weights[k])), repr(math.sqrt(k / N)), repr(k / N)])
