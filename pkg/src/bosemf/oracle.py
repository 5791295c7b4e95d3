"""Brute-force first-quantized reference for N <= 3 particles on small windows.

Everything here is dense and literal: states are K^N tensors, projectors are
built factor by factor, and P_k is the sum over all 0/1 patterns alpha with
|alpha| = k of prod_j p_j^(1 - alpha_j) q_j^alpha_j.  Pair potentials are
integrated in position space, so none of the transfer-coefficient or
ladder-operator code of :mod:`bosemf.fock` is reused.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .fock import FockBasis, FockVector, TwoBodyKernel

MAX_PROJECTOR_PARTICLES = 3
MAX_PROJECTOR_MODES = 6
MAX_DENSE_DIM = 10_000


@dataclass(frozen=True)
class TensorState:
    """Dense N-particle amplitude tensor of shape (K,) * N."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim < 1 or len(set(d.shape)) != 1:
            raise ValueError("tensor state must have shape (K,) * N")
        object.__setattr__(self, "data", d)

    @property
    def n_particles(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.shape[0]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def inner(self, other: "TensorState") -> complex:
        return complex(np.vdot(self.data, other.data))

    def asymmetry(self) -> float:
        return float(np.linalg.norm(self.data - symmetrize(self).data))


def product_tensor(coeffs, n_particles: int) -> TensorState:
    c = np.asarray(coeffs, dtype=complex)
    out = c
    for _ in range(n_particles - 1):
        out = np.multiply.outer(out, c)
    return TensorState(out)


def symmetrize(psi: TensorState) -> TensorState:
    N = psi.n_particles
    if math.factorial(N) > 720:
        raise ValueError("symmetrization limited to N! <= 720")
    acc = np.zeros_like(psi.data)
    for perm in itertools.permutations(range(N)):
        acc += np.transpose(psi.data, perm)
    return TensorState(acc / math.factorial(N))


def _guard_projectors(psi: TensorState):
    if psi.n_particles > MAX_PROJECTOR_PARTICLES or psi.size > MAX_PROJECTOR_MODES:
        raise ValueError(
            f"projector oracle limited to N <= {MAX_PROJECTOR_PARTICLES}, K <= {MAX_PROJECTOR_MODES}")


def apply_one_body(A, psi: TensorState, j: int) -> TensorState:
    """Apply a K x K matrix in the variable of particle j (1-based)."""
    N = psi.n_particles
    if not 1 <= j <= N:
        raise ValueError(f"particle label must be in 1..{N}")
    out = np.tensordot(np.asarray(A), psi.data, axes=([1], [j - 1]))
    return TensorState(np.moveaxis(out, 0, j - 1))


def _p(phi):
    c = np.asarray(phi, dtype=complex)
    return np.outer(c, c.conj())


def _q(phi):
    return np.eye(len(phi)) - _p(phi)


def apply_pj(psi: TensorState, phi, j: int) -> TensorState:
    _guard_projectors(psi)
    return apply_one_body(_p(phi), psi, j)


def apply_qj(psi: TensorState, phi, j: int) -> TensorState:
    _guard_projectors(psi)
    return apply_one_body(_q(phi), psi, j)


def apply_Pk(psi: TensorState, phi, k: int) -> TensorState:
    """Literal 2^N-term sum defining the 'exactly k particles not in phi' projector."""
    _guard_projectors(psi)
    N = psi.n_particles
    out = np.zeros_like(psi.data)
    if not 0 <= k <= N:
        return TensorState(out)
    p, q = _p(phi), _q(phi)
    for alpha in itertools.product((0, 1), repeat=N):
        if sum(alpha) != k:
            continue
        term = psi
        for j, a in enumerate(alpha, start=1):
            term = apply_one_body(q if a else p, term, j)
        out = out + term.data
    return TensorState(out)


def apply_hat(f, psi: TensorState, phi) -> TensorState:
    """sum_k f(k) P_k psi with f a callable on integers."""
    out = np.zeros_like(psi.data)
    for k in range(psi.n_particles + 1):
        out = out + f(k) * apply_Pk(psi, phi, k).data
    return TensorState(out)


def operator_matrix(apply, n_particles: int, size: int) -> np.ndarray:
    """Dense matrix of a linear map on tensor states, column by column."""
    dim = size**n_particles
    cols = []
    for m in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[m] = 1.0
        cols.append(apply(TensorState(e.reshape((size,) * n_particles))).flat())
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# occupation encoding
# ---------------------------------------------------------------------------

def _occupations_of_all(N: int, K: int) -> np.ndarray:
    idx = np.indices((K,) * N).reshape(N, -1).T
    occ = np.zeros((len(idx), K), dtype=np.int64)
    for col in range(N):
        np.add.at(occ, (np.arange(len(idx)), idx[:, col]), 1)
    return occ


def symmetric_isometry(basis: FockBasis) -> np.ndarray:
    """K^N x dim matrix whose columns are the normalized symmetrized occupation states."""
    N, K = basis.n_particles, basis.size
    if K**N > MAX_DENSE_DIM:
        raise ValueError("dense first-quantized space too large")
    occ = _occupations_of_all(N, K)
    lookup = {tuple(row): i for i, row in enumerate(basis.occupations.tolist())}
    cols = np.array([lookup[tuple(row)] for row in occ.tolist()])
    mult = np.array([math.factorial(N) / np.prod([math.factorial(n) for n in row]) for row in occ.tolist()])
    S = np.zeros((K**N, basis.dim))
    S[np.arange(K**N), cols] = 1.0 / np.sqrt(mult)
    return S


def firstq_to_fock(psi: TensorState, basis: FockBasis, tol: float = 1e-10) -> FockVector:
    if psi.n_particles != basis.n_particles or psi.size != basis.size:
        raise ValueError("tensor state and Fock basis disagree on N or K")
    asym = psi.asymmetry()
    if asym > tol * max(psi.norm(), 1.0):
        raise ValueError(f"input is not permutation symmetric (asymmetry {asym:.3e})")
    return FockVector(basis, symmetric_isometry(basis).T @ psi.flat())


def fock_to_firstq(vec: FockVector) -> TensorState:
    b = vec.basis
    S = symmetric_isometry(b)
    return TensorState((S @ vec.amplitudes).reshape((b.size,) * b.n_particles))


def random_symmetric_state(n_particles: int, size: int, rng: np.random.Generator) -> TensorState:
    raw = rng.normal(size=(size,) * n_particles) + 1j * rng.normal(size=(size,) * n_particles)
    s = symmetrize(TensorState(raw))
    return TensorState(s.data / s.norm())


# ---------------------------------------------------------------------------
# Hamiltonian and observables
# ---------------------------------------------------------------------------

def pair_matrix(kernel: TwoBodyKernel, points: int | None = None) -> np.ndarray:
    """<e_a e_b | V_eps(x - y) | e_c e_d> by position-space quadrature, shape (K^2, K^2)."""
    modes = kernel.modes
    L = modes.grid.length
    if points is None:
        # rectangle rule is exact for the band-limited mode products; the
        # only error is aliasing of V_eps, negligible once h << eps
        points = 256
        while L / points > kernel.eps / 8:
            points *= 2
    x = np.arange(points) * (L / points)
    h = L / points
    e = np.exp(1j * np.outer(modes.k, x)) / np.sqrt(L)
    F = (e.conj()[:, None, :] * e[None, :, :]).reshape(-1, points)  # (a, c) -> conj(e_a) e_c
    diff = x[:, None] - x[None, :]
    Vxy = kernel.periodized(diff)
    K = modes.size
    W = (F @ Vxy @ F.T) * h * h  # [(a,c), (b,d)]
    return W.reshape(K, K, K, K).transpose(0, 2, 1, 3).reshape(K * K, K * K)


def _embed_pair(W4: np.ndarray, N: int, i: int, j: int) -> np.ndarray:
    K = W4.shape[0]
    out_ax = list(range(N))
    in_ax = list(range(N, 2 * N))
    args = [W4, [out_ax[i], out_ax[j], in_ax[i], in_ax[j]]]
    eye = np.eye(K)
    for l in range(N):
        if l not in (i, j):
            args += [eye, [out_ax[l], in_ax[l]]]
    T = np.einsum(*args, out_ax + in_ax)
    return T.reshape(K**N, K**N)


def brute_hamiltonian(n_particles: int, kernel: TwoBodyKernel, kappa: float,
                      points: int | None = None) -> np.ndarray:
    """Dense H on (C^K)^{(x)N}: k^2 per particle plus (kappa/N) V_eps per pair."""
    K = kernel.modes.size
    N = n_particles
    if K**N > MAX_DENSE_DIM:
        raise ValueError(f"K^N = {K**N} exceeds the dense limit {MAX_DENSE_DIM}")
    k2 = kernel.modes.k**2
    diag = np.zeros((K,) * N)
    for l in range(N):
        shape = [1] * N
        shape[l] = K
        diag = diag + k2.reshape(shape)
    H = np.diag(diag.reshape(-1)).astype(complex)
    if N > 1 and kappa != 0:
        W4 = pair_matrix(kernel, points).reshape(K, K, K, K)
        for i, j in itertools.combinations(range(N), 2):
            H += (kappa / N) * _embed_pair(W4, N, i, j)
    return H


def rdm(psi: TensorState, k: int) -> np.ndarray:
    """k-particle reduced density matrix as a K^k x K^k matrix."""
    K = psi.size
    m = psi.data.reshape(K**k, -1)
    return m @ m.conj().T


def pk_weights(psi: TensorState, phi) -> np.ndarray:
    return np.array([psi.inner(apply_Pk(psi, phi, k)).real for k in range(psi.n_particles + 1)])


def alpha(psi: TensorState, phi) -> float:
    """<psi, q_1 psi>."""
    return float(psi.inner(apply_qj(psi, phi, 1)).real)


def beta(psi: TensorState, phi) -> float:
    N = psi.n_particles
    w = pk_weights(psi, phi)
    return float(sum(np.sqrt(k / N) * w[k] for k in range(N + 1)))


def energy_per_particle(psi: TensorState, H: np.ndarray) -> float:
    v = psi.flat()
    return float(np.vdot(v, H @ v).real / psi.n_particles)
