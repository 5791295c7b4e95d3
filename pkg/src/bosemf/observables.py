"""Reduced density matrices and their distance to condensate projectors.

Density matrices live on the mode window.  A reference one-particle state
``phi`` given as a grid field may carry weight outside the window (an NLS
solution spreads into high modes); it is then represented as
``(c_window, tail)`` in a space with one extra direction orthogonal to the
window, and the density matrix is padded with zeros.  This keeps trace
norms and fidelities exact on the full one-particle space.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .fock import FockBasis, FockVector, ModeBasis, TwoBodyKernel, annihilate
from .grid import SpectralField

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10


@dataclass(frozen=True)
class DensityMatrix:
    """k-particle reduced density matrix on the window, k in {1, 2}.

    ``matrix`` is indexed by particle-ordered mode tuples: row ``a`` for
    k = 1, row ``a * K + b`` for k = 2.  :meth:`symmetric` gives the
    compressed form on the K(K+1)/2-dimensional symmetric pair space.
    """

    order: int
    modes: ModeBasis
    matrix: np.ndarray

    def __post_init__(self):
        K = self.modes.size
        m = np.asarray(self.matrix, dtype=complex)
        if self.order not in (1, 2) or m.shape != (K**self.order, K**self.order):
            raise ValueError("density matrix must be K^k x K^k with k in {1, 2}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def partial_trace(self) -> "DensityMatrix":
        """Trace out the last particle (k=2 -> k=1)."""
        if self.order != 2:
            raise ValueError("partial trace only defined for k = 2")
        K = self.modes.size
        g = self.matrix.reshape(K, K, K, K)
        return DensityMatrix(1, self.modes, np.einsum("abcb->ac", g))

    def symmetric(self) -> np.ndarray:
        """Matrix on the orthonormal symmetric pair basis (a <= b)."""
        if self.order == 1:
            return np.array(self.matrix)
        S = symmetric_pair_basis(self.modes.size)
        return S.conj().T @ self.matrix @ S

    def check(self) -> None:
        if self.hermiticity_error() > HERMITIAN_TOL:
            raise ValueError(f"not Hermitian (error {self.hermiticity_error():.3e})")
        if abs(self.trace() - 1) > TRACE_TOL:
            raise ValueError(f"trace {self.trace()!r} differs from 1")
        if self.eigenvalues().min() < -POSITIVITY_TOL:
            raise ValueError("negative eigenvalue below tolerance")


def symmetric_pair_basis(K: int) -> np.ndarray:
    """K^2 x K(K+1)/2 isometry onto symmetric two-particle states."""
    cols = []
    for a in range(K):
        for b in range(a, K):
            v = np.zeros(K * K)
            if a == b:
                v[a * K + a] = 1.0
            else:
                v[a * K + b] = v[b * K + a] = np.sqrt(0.5)
            cols.append(v)
    return np.column_stack(cols)


def _lowered(vec: FockVector):
    b = vec.basis
    lower = FockBasis(b.n_particles - 1, b.modes)
    rows = np.array([annihilate(vec.amplitudes, b, lower, p) for p in range(b.size)])
    return rows, lower


def rdm1(vec: FockVector) -> DensityMatrix:
    """gamma_pq = <a_q^dagger a_p> / N."""
    N = vec.basis.n_particles
    rows, _ = _lowered(vec)
    return DensityMatrix(1, vec.basis.modes, rows @ rows.conj().T / N)


def rdm2(vec: FockVector) -> DensityMatrix:
    """gamma_(ab),(cd) = <a_c^dagger a_d^dagger a_b a_a> / (N (N - 1))."""
    N = vec.basis.n_particles
    if N < 2:
        raise ValueError("two-particle density matrix needs N >= 2")
    K = vec.basis.size
    once, lower = _lowered(vec)
    lower2 = FockBasis(N - 2, vec.basis.modes)
    rows = np.empty((K * K, lower2.dim), dtype=complex)
    for a in range(K):
        for b in range(K):
            rows[a * K + b] = annihilate(once[a], lower, lower2, b)
    return DensityMatrix(2, vec.basis.modes, rows @ rows.conj().T / (N * (N - 1)))


# ---------------------------------------------------------------------------
# reference states
# ---------------------------------------------------------------------------

def reference_vector(phi, modes: ModeBasis) -> tuple[np.ndarray, float]:
    """Unit one-particle state as (window coefficients, norm outside the window)."""
    if isinstance(phi, SpectralField):
        c, tail = modes.split(phi)
    else:
        c, tail = np.asarray(phi, dtype=complex), 0.0
        if c.shape != (modes.size,):
            raise ValueError(f"expected {modes.size} window coefficients")
    total = np.sqrt(np.linalg.norm(c) ** 2 + tail**2)
    if total == 0:
        raise ValueError("zero reference state")
    return c / total, tail / total


def _extended(gamma: DensityMatrix, phi):
    """Density matrix and k-fold reference state in a common space."""
    c, tail = reference_vector(phi, gamma.modes)
    K = gamma.modes.size
    k = gamma.order
    if tail <= 1e-15:
        v = c if k == 1 else np.kron(c, c)
        return np.asarray(gamma.matrix), v
    ce = np.append(c, tail)
    if k == 1:
        G = np.zeros((K + 1, K + 1), dtype=complex)
        G[:K, :K] = gamma.matrix
        return G, ce
    G = np.zeros((K + 1,) * 4, dtype=complex)
    G[:K, :K, :K, :K] = gamma.matrix.reshape(K, K, K, K)
    return G.reshape((K + 1) ** 2, (K + 1) ** 2), np.kron(ce, ce)


def trace_norm(A: np.ndarray) -> float:
    """Sum of |eigenvalues| of a Hermitian matrix."""
    A = np.asarray(A)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (A + A.conj().T))).sum())


def trace_norm_gap(gamma: DensityMatrix, phi) -> float:
    """Tr |gamma - |phi^{(x)k}><phi^{(x)k}||."""
    G, v = _extended(gamma, phi)
    return trace_norm(G - np.outer(v, v.conj()))


def fidelity(gamma: DensityMatrix, phi) -> float:
    """<phi^{(x)k}, gamma phi^{(x)k}>, checked to lie in [0, 1] up to 1e-10."""
    G, v = _extended(gamma, phi)
    f = float(np.vdot(v, G @ v).real)
    if f < -1e-10 or f > 1 + 1e-10:
        raise ValueError(f"fidelity {f!r} outside [0, 1]; gamma is not a density matrix")
    return min(max(f, 0.0), 1.0)


def pure_state_trace_distance(phi: SpectralField, psi: SpectralField) -> float:
    """Tr ||phi><phi| - |psi><psi|| by diagonalizing on span{phi, psi}."""
    u = phi.values / phi.norm()
    w = psi.values / psi.norm()
    h = phi.grid.spacing
    ov = np.vdot(u, w) * h
    r = w - ov * u
    rn = np.sqrt(np.vdot(r, r).real * h)
    # coordinates in the orthonormal pair (u, r / |r|)
    a = np.array([1.0, 0.0])
    b = np.array([ov, rn])
    return trace_norm(np.outer(a, a.conj()) - np.outer(b, b.conj()))


@dataclass(frozen=True)
class SandwichReport:
    lower: float
    gap: float
    upper: float
    slack: float

    @property
    def holds(self) -> bool:
        return self.lower <= self.gap + self.slack and self.gap <= self.upper + self.slack

    @property
    def margin(self) -> float:
        return min(self.gap - self.lower, self.upper - self.gap)


def sandwich_check(gamma: DensityMatrix, phi, slack: float = 1e-10) -> SandwichReport:
    """1 - F <= Tr|gamma - |phi><phi|| <= sqrt(8 (1 - F)), F the fidelity."""
    f = fidelity(gamma, phi)
    return SandwichReport(1 - f, trace_norm_gap(gamma, phi), np.sqrt(8 * (1 - f)), slack)


@dataclass(frozen=True)
class KFromOneReport:
    hypothesis_error: float
    lhs: float
    rhs: float
    slack: float

    @property
    def hypothesis_holds(self) -> bool:
        return self.hypothesis_error <= self.slack

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.slack

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def k_from_one_check(gamma1: DensityMatrix, gammak: DensityMatrix, phi, k: int = 2,
                     slack: float = 1e-10) -> KFromOneReport:
    """1 - <phi^{(x)k}, gamma^(k) phi^{(x)k}> <= k (1 - <phi, gamma^(1) phi>), with k = 2."""
    if k != 2 or gammak.order != 2 or gamma1.order != 1:
        raise ValueError("only the k = 2 reduction is implemented")
    hyp = float(np.abs(gammak.partial_trace().matrix - gamma1.matrix).max())
    return KFromOneReport(hyp, 1 - fidelity(gammak, phi), k * (1 - fidelity(gamma1, phi)), slack)


def energy_per_particle(vec: FockVector, H) -> float:
    return vec.expectation(H) / vec.basis.n_particles


def pair_interaction_integral(phi: SpectralField, kernel: TwoBodyKernel) -> float:
    """integral |phi|^2 (V_eps * |phi|^2) on the torus, by direct position-space quadrature."""
    g = phi.grid
    rho = np.abs(phi.values) ** 2
    V = kernel.periodized(g.x[:, None] - g.x[None, :])
    return float(rho @ V @ rho * g.spacing**2)


def product_state_energy(phi: SpectralField, kernel: TwoBodyKernel, kappa: float, n_particles: int) -> float:
    """Energy per particle of phi^{(x)N}: ||phi'||^2 + kappa (N-1)/(2N) int |phi|^2 (V_eps * |phi|^2).

    ``phi`` must be band-limited to the window so the quadrature is exact.
    """
    N = n_particles
    return phi.gradient_norm() ** 2 + kappa * (N - 1) / (2 * N) * pair_interaction_integral(phi, kernel)


_RDM_MAGIC = b"BOSEMFDM"
_RDM_HEADER = struct.Struct("<8sqq16s")


def write_density_matrix(gamma: DensityMatrix, path) -> None:
    """Binary file: header (k, K, ordering) then row-major (re, im) float64 pairs."""
    header = _RDM_HEADER.pack(_RDM_MAGIC, gamma.order, gamma.modes.size, b"tensor-rowmajor".ljust(16, b"\0"))
    m = gamma.matrix
    pairs = np.empty(m.shape + (2,), dtype="<f8")
    pairs[..., 0] = m.real
    pairs[..., 1] = m.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pairs.tobytes())


def read_density_matrix(path, modes: ModeBasis) -> DensityMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, k, K, _ = _RDM_HEADER.unpack_from(raw)
    if magic != _RDM_MAGIC:
        raise ValueError(f"{path}: not a density matrix file")
    if K != modes.size:
        raise ValueError(f"{path}: file has K={K}, mode basis has K={modes.size}")
    d = K**k
    pairs = np.frombuffer(raw, dtype="<f8", offset=_RDM_HEADER.size).reshape(d, d, 2)
    return DensityMatrix(k, modes, pairs[..., 0] + 1j * pairs[..., 1])
