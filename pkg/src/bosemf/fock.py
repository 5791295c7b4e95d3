"""Fixed-N bosonic Fock space over a window of plane-wave modes.

Occupation vectors are ordered lexicographically *descending* (for N=2,
K=2: (2,0), (1,1), (0,2)); mode position p in the window holds the plane
wave with index n = p - K/2.  The position of an occupation vector is
computed in closed form with the combinatorial number system, so no
lookup table is stored.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .grid import SpectralField, TorusGrid

DEFAULT_MAX_DIM = 5_000_000
ORDERING_TAG = "lex-desc"


@dataclass(frozen=True)
class ModeBasis:
    """Plane waves e_n(x) = exp(i k_n x) / sqrt(L), n = -K/2 .. K/2-1."""

    grid: TorusGrid
    size: int
    n: np.ndarray = field(init=False, repr=False, compare=False)
    k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        K = self.size
        if int(K) != K or K < 2 or K % 2 or K > self.grid.points:
            raise ValueError(f"mode window size must be even with 2 <= K <= M, got {K}")
        n = np.arange(-K // 2, K // 2)
        n.setflags(write=False)
        k = 2 * np.pi * n / self.grid.length
        k.setflags(write=False)
        object.__setattr__(self, "size", int(K))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)

    @property
    def _slice(self) -> slice:
        c = self.grid.points // 2
        return slice(c - self.size // 2, c + self.size // 2)

    def split(self, phi: SpectralField) -> tuple[np.ndarray, float]:
        """Window coefficients of ``phi`` and the L^2 norm left outside the window."""
        if phi.grid != self.grid:
            raise ValueError("field and mode basis live on different grids")
        c = phi.coefficients()
        inside = c[self._slice].copy()
        outside = np.concatenate([c[:self._slice.start], c[self._slice.stop:]])
        return inside, float(np.linalg.norm(outside))

    def window(self, phi: SpectralField) -> np.ndarray:
        """Normalized window coefficients (the windowed datum phi_w)."""
        c, tail = self.split(phi)
        nrm = np.linalg.norm(c)
        if nrm <= 1e-13 * np.hypot(nrm, tail) or nrm <= 1e-300:
            raise ValueError("field has no weight inside the mode window")
        return c / nrm

    def field(self, coeffs) -> SpectralField:
        """Embed window coefficients as a grid field."""
        c = np.zeros(self.grid.points, dtype=complex)
        c[self._slice] = coeffs
        return SpectralField.from_coefficients(self.grid, c)

    def mode_values(self) -> np.ndarray:
        """(K, M) array of e_n at the grid nodes."""
        return np.exp(1j * np.outer(self.k, self.grid.x)) / np.sqrt(self.grid.length)


@lru_cache(maxsize=32)
def _compositions(N: int, K: int) -> np.ndarray:
    if K == 1:
        return np.array([[N]], dtype=np.int16)
    blocks = []
    for first in range(N, -1, -1):
        rest = _compositions(N - first, K - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int16), rest]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def fock_dimension(N: int, K: int) -> int:
    return math.comb(N + K - 1, K - 1)


class FockBasis:
    """Occupation-number basis for N bosons in a :class:`ModeBasis`."""

    def __init__(self, n_particles: int, modes: ModeBasis, max_dim: int = DEFAULT_MAX_DIM):
        if n_particles < 0:
            raise ValueError("particle number must be nonnegative")
        dim = fock_dimension(n_particles, modes.size)
        if dim > max_dim:
            raise ValueError(f"Fock dimension {dim} exceeds the cap {max_dim}")
        self.n_particles = int(n_particles)
        self.modes = modes
        self.dim = dim
        self.occupations = _compositions(self.n_particles, modes.size)
        # _table[d, b] = C(d + b, b): number of ways to put d particles in b + 1 modes
        K, N = modes.size, self.n_particles
        self._table = np.array([[math.comb(d + b, b) for b in range(K)] for d in range(max(N, 1))],
                               dtype=np.int64)

    @property
    def size(self) -> int:
        return self.modes.size

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other):
        return (isinstance(other, FockBasis) and self.n_particles == other.n_particles
                and self.modes == other.modes)

    def __hash__(self):
        return hash((self.n_particles, self.modes))

    def __repr__(self):
        return f"FockBasis(N={self.n_particles}, K={self.size}, dim={self.dim})"

    def index(self, occ) -> np.ndarray:
        """Basis positions of occupation rows (shape (..., K)); no validity check."""
        occ = np.asarray(occ, dtype=np.int64)
        K = self.size
        before = np.cumsum(occ, axis=-1) - occ
        remaining = self.n_particles - before
        excess = remaining[..., :K - 1] - occ[..., :K - 1]
        b = K - 1 - np.arange(K - 1)
        d = np.maximum(excess - 1, 0)
        terms = np.where(excess > 0, self._table[d, b], 0)
        return terms.sum(axis=-1)

    def index_of(self, occ) -> int:
        occ = np.asarray(occ)
        if occ.shape != (self.size,) or occ.min() < 0 or occ.sum() != self.n_particles:
            raise KeyError(f"{tuple(occ)} is not an occupation vector of this basis")
        return int(self.index(occ))


def enumerate_basis(n_particles: int, modes: ModeBasis, max_dim: int = DEFAULT_MAX_DIM) -> FockBasis:
    if n_particles < 1:
        raise ValueError("need at least one particle")
    return FockBasis(n_particles, modes, max_dim)


@dataclass(frozen=True)
class FockVector:
    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} amplitudes, got shape {a.shape}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockVector":
        return FockVector(self.basis, self.amplitudes / self.norm())

    def inner(self, other: "FockVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def expectation(self, op) -> float:
        return float(np.vdot(self.amplitudes, op @ self.amplitudes).real)

    def amplitude(self, occ) -> complex:
        return complex(self.amplitudes[self.basis.index_of(occ)])


def basis_state(basis: FockBasis, occ) -> FockVector:
    a = np.zeros(basis.dim, dtype=complex)
    a[basis.index_of(occ)] = 1.0
    return FockVector(basis, a)


def random_state(basis: FockBasis, rng: np.random.Generator) -> FockVector:
    a = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return FockVector(basis, a / np.linalg.norm(a))


# ---------------------------------------------------------------------------
# ladder-operator actions on whole bases
# ---------------------------------------------------------------------------

def hop_table(basis: FockBasis, p: int, q: int):
    """Sources, targets and amplitudes of a_p^dagger a_q (p != q) on ``basis``."""
    occ = basis.occupations
    src = np.nonzero(occ[:, q] > 0)[0]
    new = occ[src].astype(np.int64)
    amp = np.sqrt(new[:, q])
    new[:, q] -= 1
    amp = amp * np.sqrt(new[:, p] + 1)
    new[:, p] += 1
    return src, basis.index(new), amp


def annihilate(vec: np.ndarray, source: FockBasis, target: FockBasis, p: int) -> np.ndarray:
    """a_p applied to an amplitude vector over ``source`` (N) giving ``target`` (N-1)."""
    occ = source.occupations
    src = np.nonzero(occ[:, p] > 0)[0]
    new = occ[src].astype(np.int64)
    amp = np.sqrt(new[:, p])
    new[:, p] -= 1
    out = np.zeros(target.dim, dtype=complex)
    out[target.index(new)] = amp * vec[src]
    return out


def one_body_operator(basis: FockBasis, matrix) -> sp.csr_matrix:
    """Second quantization sum_{pq} A_pq a_p^dagger a_q of a K x K matrix."""
    A = np.asarray(matrix)
    K = basis.size
    if A.shape != (K, K):
        raise ValueError(f"one-body matrix must be {K}x{K}")
    occ = basis.occupations
    rows = [np.arange(basis.dim)]
    cols = [np.arange(basis.dim)]
    vals = [occ @ np.diag(A)]
    for p in range(K):
        for q in range(K):
            if p == q or A[p, q] == 0:
                continue
            src, tgt, amp = hop_table(basis, p, q)
            rows.append(tgt)
            cols.append(src)
            vals.append(A[p, q] * amp)
    dtype = complex if np.iscomplexobj(A) else float
    m = sp.coo_matrix((np.concatenate(vals).astype(dtype), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(basis.dim, basis.dim))
    return m.tocsr()


# ---------------------------------------------------------------------------
# regularized pair potential
# ---------------------------------------------------------------------------

def _gaussian_hat(u):
    return np.exp(-0.5 * u**2)


def _gaussian(x):
    return np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)


def _tophat_hat(u):
    return np.sinc(np.asarray(u) / np.pi)


def _tophat(x):
    return np.where(np.abs(x) < 1, 0.5, 0.0)


def _sech2_hat(u):
    u = np.asarray(u, dtype=float)
    z = 0.5 * np.pi * u
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.where(np.abs(z) < 1e-8, 1.0 - z**2 / 6, z / np.sinh(z))
    return np.nan_to_num(out, nan=0.0)


def _sech2(x):
    return 0.5 / np.cosh(x) ** 2


SHAPES = {
    "gaussian": (_gaussian, _gaussian_hat),
    "tophat": (_tophat, _tophat_hat),
    "sech2": (_sech2, _sech2_hat),
}


@dataclass(frozen=True)
class TwoBodyKernel:
    """Unit-integral pair potential V_eps(x) = V(x / eps) / eps on a mode window.

    ``coefficients[j]`` is the transfer coefficient for the index shift
    ``j - (K - 1)``, i.e. for momentum transfer 2 pi (j - K + 1) / L.
    """

    shape: str
    eps: float
    modes: ModeBasis
    coefficients: np.ndarray = field(repr=False, compare=False)

    def transfer(self, q) -> np.ndarray:
        """V_eps-hat(q) = integral V_eps(x) exp(-i q x) dx."""
        return SHAPES[self.shape][1](self.eps * np.asarray(q, dtype=float))

    def potential(self, x) -> np.ndarray:
        """V_eps on the line (not periodized)."""
        return SHAPES[self.shape][0](np.asarray(x, dtype=float) / self.eps) / self.eps

    def periodized(self, x, images: int = 3) -> np.ndarray:
        L = self.modes.grid.length
        return sum(self.potential(np.asarray(x) + m * L) for m in range(-images, images + 1))

    def coefficient(self, shift: int) -> float:
        return float(self.coefficients[shift + self.modes.size - 1])


def potential_coefficients(shape: str, eps: float, modes: ModeBasis) -> TwoBodyKernel:
    if shape not in SHAPES:
        raise ValueError(f"unknown potential shape {shape!r}; choose from {sorted(SHAPES)}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    h = modes.grid.spacing
    if eps < 2 * h * (1 - 1e-12):
        raise ValueError(f"eps = {eps} is below two grid spacings ({2 * h:.4g}); refine the grid")
    K = modes.size
    shifts = np.arange(-(K - 1), K)
    q = 2 * np.pi * shifts / modes.grid.length
    coeffs = SHAPES[shape][1](eps * q).astype(float)
    coeffs.setflags(write=False)
    return TwoBodyKernel(shape, float(eps), modes, coeffs)


def two_body_operator(basis: FockBasis, kernel: TwoBodyKernel) -> sp.csr_matrix:
    """(1/(2L)) sum V-hat(k_a - k_c) a_a^dagger a_b^dagger a_d a_c over a + b = c + d in the window."""
    if kernel.modes != basis.modes:
        raise ValueError("kernel and basis use different mode windows")
    K = basis.size
    L = basis.modes.grid.length
    occ0 = basis.occupations.astype(np.int64)
    rows, cols, vals = [], [], []
    for c in range(K):
        has_c = occ0[:, c] > 0
        for d in range(K):
            if c == d:
                mask = occ0[:, c] > 1
            else:
                mask = has_c & (occ0[:, d] > 0)
            src = np.nonzero(mask)[0]
            if src.size == 0:
                continue
            new = occ0[src].copy()
            base_amp = np.sqrt(new[:, c].astype(float))
            new[:, c] -= 1
            base_amp = base_amp * np.sqrt(new[:, d])
            new[:, d] -= 1
            for shift in range(max(-c, d - K + 1), min(K - 1 - c, d) + 1):
                a, b = c + shift, d - shift
                v = kernel.coefficient(shift)
                if v == 0:
                    continue
                fin = new.copy()
                amp = base_amp * np.sqrt(fin[:, b] + 1)
                fin[:, b] += 1
                amp = amp * np.sqrt(fin[:, a] + 1)
                fin[:, a] += 1
                rows.append(basis.index(fin))
                cols.append(src)
                vals.append(v * amp)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim))
    m = sp.coo_matrix((np.concatenate(vals) / (2 * L), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(basis.dim, basis.dim)).tocsr()
    return m


def kinetic_operator(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.occupations @ basis.modes.k**2, format="csr")


def momentum_operator(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.occupations @ basis.modes.k, format="csr")


def build_hamiltonian(basis: FockBasis, kernel: TwoBodyKernel, kappa: float) -> sp.csr_matrix:
    """H = sum_p k_p^2 n_p + (kappa / N) * pair interaction, exactly Hermitian."""
    H = kinetic_operator(basis)
    if kappa != 0 and basis.n_particles > 1:
        H = H + (kappa / basis.n_particles) * two_body_operator(basis, kernel)
    H = H.tocsr()
    H = ((H + H.conj().T) * 0.5).tocsr()
    H.sum_duplicates()
    H.sort_indices()
    return H


def product_state(phi, basis: FockBasis) -> FockVector:
    """phi_w^{(x)N} in the occupation basis, phi_w the windowed, renormalized datum.

    ``phi`` may be a :class:`SpectralField` or a length-K coefficient vector.
    """
    c = _window_vector(phi, basis.modes)
    occ = basis.occupations
    N = basis.n_particles
    log_mult = 0.5 * (gammaln(N + 1) - gammaln(occ + 1).sum(axis=1))
    amps = np.exp(log_mult) * np.prod(c[None, :] ** occ, axis=1)
    return FockVector(basis, amps)


def _window_vector(phi, modes: ModeBasis) -> np.ndarray:
    if isinstance(phi, SpectralField):
        return modes.window(phi)
    c = np.asarray(phi, dtype=complex)
    if c.shape != (modes.size,):
        raise ValueError(f"expected {modes.size} window coefficients")
    nrm = np.linalg.norm(c)
    if nrm <= 1e-300:
        raise ValueError("zero window coefficients")
    return c / nrm


def number_operator(phi, basis: FockBasis) -> sp.csr_matrix:
    """a^dagger(phi) a(phi) for the windowed, normalized phi."""
    c = _window_vector(phi, basis.modes)
    return one_body_operator(basis, np.outer(c, c.conj()))


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

_FV_MAGIC = b"BOSEMFFV"
_FV_HEADER = struct.Struct("<8sqqqd16s")


def write_fock_vector(vec: FockVector, path) -> None:
    """Binary snapshot: header (N, K, M, L, ordering tag) then (re, im) float64 pairs, little-endian."""
    b = vec.basis
    header = _FV_HEADER.pack(_FV_MAGIC, b.n_particles, b.size, b.modes.grid.points,
                             b.modes.grid.length, ORDERING_TAG.encode("ascii").ljust(16, b"\0"))
    pairs = np.empty((b.dim, 2), dtype="<f8")
    pairs[:, 0] = vec.amplitudes.real
    pairs[:, 1] = vec.amplitudes.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pairs.tobytes())


def read_fock_vector(path) -> FockVector:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, N, K, M, L, tag = _FV_HEADER.unpack_from(raw)
    if magic != _FV_MAGIC:
        raise ValueError(f"{path}: not a Fock vector snapshot")
    tag = tag.rstrip(b"\0").decode("ascii")
    if tag != ORDERING_TAG:
        raise ValueError(f"{path}: unsupported ordering {tag!r}")
    modes = ModeBasis(TorusGrid(L, M), K)
    basis = FockBasis(N, modes)
    pairs = np.frombuffer(raw, dtype="<f8", offset=_FV_HEADER.size).reshape(-1, 2)
    if len(pairs) != basis.dim:
        raise ValueError(f"{path}: expected {basis.dim} amplitudes, found {len(pairs)}")
    return FockVector(basis, pairs[:, 0] + 1j * pairs[:, 1])
