"""Krylov (Lanczos) approximation of exp(-i dt H) applied to a vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .fock import FockVector


class PropagatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.05
    krylov_dim: int = 30
    tol: float = 1e-10
    max_substeps: int = 10_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.tol <= 1e-4:
            raise ValueError("tolerance must lie in (0, 1e-4]")
        if self.krylov_dim < 2:
            raise ValueError("Krylov dimension must be at least 2")


def _lanczos(H, v, m_max):
    """Lanczos with full re-orthogonalization; returns (V, alpha, beta, residual)."""
    n = v.shape[0]
    m_max = min(m_max, n)
    V = np.zeros((m_max, n), dtype=complex)
    a = np.zeros(m_max)
    b = np.zeros(m_max)
    V[0] = v
    for j in range(m_max):
        w = H @ V[j]
        a[j] = np.vdot(V[j], w).real
        w = w - a[j] * V[j] - (b[j - 1] * V[j - 1] if j > 0 else 0)
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            w = w - V[:j + 1].T @ (V[:j + 1].conj() @ w)
        b[j] = np.linalg.norm(w)
        if j + 1 == m_max:
            return V, a, b[:m_max - 1], b[j]
        if b[j] <= 1e-13 * max(1.0, abs(a[j])):
            # invariant subspace reached: the projection is exact
            return V[:j + 1], a[:j + 1], b[:j], 0.0
        V[j + 1] = w / b[j]
    raise AssertionError("unreachable")


def _small_exp(a, b, tau):
    """exp(-i tau T) e_1 for the real symmetric tridiagonal T = tridiag(b, a, b)."""
    if len(a) == 1:
        return np.array([np.exp(-1j * tau * a[0])])
    evals, evecs = eigh_tridiagonal(a, b)
    return evecs @ (np.exp(-1j * tau * evals) * evecs[0])


def expm_apply_array(H, v: np.ndarray, dt: float, cfg: PropagatorConfig) -> np.ndarray:
    """exp(-i dt H) v with residual-controlled substepping (dt may be negative)."""
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("cannot propagate the zero vector")
    if dt == 0:
        return np.array(v, dtype=complex)
    sign = np.sign(dt)
    remaining = abs(dt)
    u = np.asarray(v, dtype=complex) / nrm
    tau = remaining
    substeps = 0
    while remaining > 0:
        V, a, b, resid = _lanczos(H, u, cfg.krylov_dim)
        tau = min(tau * 2, remaining) if substeps else remaining
        while True:
            y = _small_exp(a, b, sign * tau)
            # standard a-posteriori estimate: size of the neglected Krylov direction
            err = resid * abs(y[-1]) * tau
            if err <= cfg.tol * tau / abs(dt) or resid == 0.0:
                break
            tau *= 0.5
            if tau < abs(dt) * 1e-12:
                raise PropagatorError(f"step size underflow at remaining time {remaining:.3g}")
        u = V.T @ y
        u /= np.linalg.norm(u)
        remaining -= tau
        if remaining < abs(dt) * 1e-14:
            remaining = 0.0
        substeps += 1
        if substeps > cfg.max_substeps:
            raise PropagatorError(
                f"no convergence within {cfg.max_substeps} substeps (last substep {tau:.3g},"
                f" estimated error {err:.3g}, Krylov dimension {len(a)})")
    return u * nrm


def expm_apply(H, phi: FockVector, dt: float, cfg: PropagatorConfig) -> FockVector:
    if H.shape != (phi.basis.dim, phi.basis.dim):
        raise ValueError("Hamiltonian dimension does not match the state")
    return FockVector(phi.basis, expm_apply_array(H, phi.amplitudes, dt, cfg))


@dataclass(frozen=True)
class ManyBodyTrajectory:
    times: np.ndarray
    states: list
    norm_drift: np.ndarray
    energy_drift: np.ndarray

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.times[i], self.states[i]


def evolve(H, phi0: FockVector, t_final: float, cfg: PropagatorConfig,
           sample_every: int = 1) -> ManyBodyTrajectory:
    """Propagate in steps of ``cfg.dt``, sampling every ``sample_every`` steps.

    Norm drift is |‖Φ(t)‖ - ‖Φ0‖|; energy drift is
    |<H>_t - <H>_0| / |<H>_0 + 1|.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    nsteps = int(round(t_final / cfg.dt))
    e0 = phi0.expectation(H)
    n0 = phi0.norm()
    times, states = [0.0], [phi0]
    u = np.array(phi0.amplitudes)
    for step in range(1, nsteps + 1):
        u = expm_apply_array(H, u, cfg.dt, cfg)
        if step % sample_every == 0 or step == nsteps:
            times.append(step * cfg.dt)
            states.append(FockVector(phi0.basis, u))
    norms = np.array([abs(s.norm() - n0) for s in states])
    energies = np.array([abs(s.expectation(H) - e0) / abs(e0 + 1.0) for s in states])
    return ManyBodyTrajectory(np.array(times), states, norms, energies)
