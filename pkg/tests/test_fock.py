import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from scipy.integrate import quad
from hypothesis import given
from hypothesis import strategies as st

from bosemf.fock import (SHAPES, FockBasis, ModeBasis, annihilate, basis_state, build_hamiltonian,
                         enumerate_basis, fock_dimension, kinetic_operator, momentum_operator,
                         number_operator, one_body_operator, potential_coefficients, product_state,
                         random_state, read_fock_vector, two_body_operator, write_fock_vector)
from bosemf.grid import SpectralField, make_grid
from bosemf.oracle import brute_hamiltonian, symmetric_isometry

from conftest import unit_vector


def modes(K, L=2 * math.pi, M=32):
    return ModeBasis(make_grid(L, M), K)


class TestModeBasis:
    def test_window_indices(self):
        m = modes(4)
        np.testing.assert_array_equal(m.n, [-2, -1, 0, 1])
        np.testing.assert_allclose(m.k, [-2, -1, 0, 1])

    def test_split_plane_wave(self):
        m = modes(4)
        g = m.grid
        f = SpectralField.from_function(g, lambda x: np.exp(-1j * x) / np.sqrt(g.length))
        c, tail = m.split(f)
        np.testing.assert_allclose(c, [0, 1, 0, 0], atol=1e-14)
        assert tail < 1e-14

    def test_field_embeds(self, rng):
        m = modes(6)
        c = unit_vector(rng, 6)
        np.testing.assert_allclose(m.window(m.field(c)), c, atol=1e-14)

    def test_mode_values_orthonormal(self):
        m = modes(6)
        E = m.mode_values()
        G = E.conj() @ E.T * m.grid.spacing
        np.testing.assert_allclose(G, np.eye(6), atol=1e-13)

    @pytest.mark.parametrize("K", [0, 3, 34])
    def test_bad_size(self, K):
        with pytest.raises(ValueError):
            modes(K)

    def test_empty_window(self):
        m = modes(2)
        g = m.grid
        f = SpectralField.from_function(g, lambda x: np.exp(5j * x))
        with pytest.raises(ValueError):
            m.window(f)


class TestBasis:
    @pytest.mark.parametrize("N, K, dim", [(2, 2, 3), (3, 4, 20), (8, 10, 24310)])
    def test_dimension(self, N, K, dim):
        assert fock_dimension(N, K) == dim
        assert FockBasis(N, modes(K)).dim == dim

    def test_ordering(self):
        b = FockBasis(2, modes(2))
        np.testing.assert_array_equal(b.occupations, [[2, 0], [1, 1], [0, 2]])

    def test_ordering_descending(self):
        occ = FockBasis(3, modes(4)).occupations.tolist()
        assert occ == sorted(occ, reverse=True)

    @given(st.integers(1, 6), st.sampled_from([2, 4, 6]))
    def test_rank_is_bijection(self, N, K):
        b = FockBasis(N, modes(K))
        np.testing.assert_array_equal(b.index(b.occupations), np.arange(b.dim))
        assert np.all(b.occupations.sum(axis=1) == N)
        assert len({tuple(r) for r in b.occupations.tolist()}) == b.dim

    def test_index_of_rejects(self):
        b = FockBasis(2, modes(2))
        with pytest.raises(KeyError):
            b.index_of([1, 0])
        with pytest.raises(KeyError):
            b.index_of([3, -1])

    def test_dimension_cap(self):
        with pytest.raises(ValueError, match="exceeds"):
            FockBasis(8, modes(10), max_dim=1000)

    def test_enumerate_needs_particles(self):
        with pytest.raises(ValueError):
            enumerate_basis(0, modes(2))

    def test_equality(self):
        assert FockBasis(2, modes(4)) == FockBasis(2, modes(4))
        assert FockBasis(2, modes(4)) != FockBasis(3, modes(4))


class TestKernel:
    @pytest.mark.parametrize("shape", sorted(SHAPES))
    def test_invariants(self, shape):
        m = modes(8)
        ker = potential_coefficients(shape, 0.5, m)
        assert ker.coefficient(0) == pytest.approx(1.0)
        for j in range(1, 8):
            assert ker.coefficient(j) == ker.coefficient(-j)
            assert abs(ker.coefficient(j)) <= 1.0

    @pytest.mark.parametrize("shape", sorted(SHAPES))
    def test_unit_integral(self, shape):
        ker = potential_coefficients(shape, 0.5, modes(4))
        total = quad(lambda x: float(ker.potential(x)), -20, 20, points=[-0.5, 0.5], limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_gaussian_transfer(self):
        ker = potential_coefficients("gaussian", 0.4, modes(4))
        assert ker.coefficient(2) == pytest.approx(math.exp(-0.5 * 0.8**2))

    def test_resolvability_guard(self):
        m = modes(4, M=32)
        with pytest.raises(ValueError, match="grid spacings"):
            potential_coefficients("gaussian", 0.5 * m.grid.spacing, m)
        potential_coefficients("gaussian", 2 * m.grid.spacing, m)

    def test_unknown_shape(self):
        with pytest.raises(ValueError):
            potential_coefficients("square", 0.5, modes(4))


class TestHamiltonian:
    def test_two_particle_two_mode_by_hand(self):
        m = modes(2)
        ker = potential_coefficients("gaussian", 0.5, m)
        L = m.grid.length
        V0, V1 = ker.coefficient(0), ker.coefficient(1)
        b = FockBasis(2, m)
        H = build_hamiltonian(b, ker, 1.0).toarray()
        # modes k = -1, 0; basis (2,0), (1,1), (0,2); total momentum separates all three
        expected = np.diag([2.0, 1.0, 0.0]) + 0.5 * np.diag([V0, V0 + V1, V0]) / L
        np.testing.assert_allclose(H, expected, atol=1e-14)

    def test_hermitian(self):
        b = FockBasis(3, modes(6))
        H = build_hamiltonian(b, potential_coefficients("sech2", 0.5, b.modes), -1.0)
        assert abs(H - H.conj().T).max() == 0

    def test_momentum_conserved(self):
        b = FockBasis(3, modes(6))
        H = build_hamiltonian(b, potential_coefficients("gaussian", 0.5, b.modes), 1.0)
        P = momentum_operator(b)
        assert abs(H @ P - P @ H).max() < 1e-12

    def test_matches_first_quantization(self):
        b = FockBasis(2, modes(4))
        ker = potential_coefficients("gaussian", 0.5, b.modes)
        S = symmetric_isometry(b)
        H = build_hamiltonian(b, ker, 1.0).toarray()
        Hb = S.T @ brute_hamiltonian(2, ker, 1.0) @ S
        assert np.abs(H - Hb).max() < 1e-9

    def test_kappa_zero_is_kinetic(self):
        b = FockBasis(3, modes(4))
        H = build_hamiltonian(b, potential_coefficients("gaussian", 0.5, b.modes), 0.0)
        assert abs(H - kinetic_operator(b)).max() == 0

    def test_single_particle(self):
        b = FockBasis(1, modes(4))
        H = build_hamiltonian(b, potential_coefficients("gaussian", 0.5, b.modes), 1.0)
        np.testing.assert_allclose(H.diagonal(), b.modes.k**2)

    def test_ground_energy_nonnegative_defocusing(self):
        b = FockBasis(4, modes(6))
        H = build_hamiltonian(b, potential_coefficients("gaussian", 0.5, b.modes), 1.0)
        e0 = spla.eigsh(H, k=1, which="SA")[0][0]
        assert e0 > 0

    def test_kernel_on_other_window(self):
        b = FockBasis(2, modes(4))
        with pytest.raises(ValueError):
            two_body_operator(b, potential_coefficients("gaussian", 0.5, modes(6)))


class TestOneBody:
    def test_identity_counts_particles(self):
        b = FockBasis(3, modes(4))
        np.testing.assert_allclose(one_body_operator(b, np.eye(4)).toarray(), 3 * np.eye(b.dim))

    def test_hermitian_matrix_gives_hermitian_operator(self, rng):
        b = FockBasis(3, modes(4))
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        A = A + A.conj().T
        op = one_body_operator(b, A)
        assert abs(op - op.conj().T).max() < 1e-14

    def test_annihilate_norm(self, rng):
        m = modes(4)
        b3, b2 = FockBasis(3, m), FockBasis(2, m)
        v = random_state(b3, rng).amplitudes
        total = sum(np.linalg.norm(annihilate(v, b3, b2, p)) ** 2 for p in range(4))
        assert total == pytest.approx(3.0)


class TestProductState:
    def test_balanced_two_mode_n3(self):
        b = FockBasis(3, modes(2))
        v = product_state(np.array([1, 1]) / math.sqrt(2), b)
        np.testing.assert_allclose(v.amplitudes, np.array([1, math.sqrt(3), math.sqrt(3), 1]) / math.sqrt(8))

    def test_single_mode(self):
        b = FockBasis(4, modes(4))
        v = product_state(np.array([0, 0, 1, 0]), b)
        assert v.amplitude([0, 0, 4, 0]) == pytest.approx(1.0)
        assert v.norm() == pytest.approx(1.0)

    def test_from_field_normalizes_window(self):
        m = modes(4)
        g = m.grid
        f = SpectralField.from_function(g, lambda x: np.exp(-((x - np.pi) ** 2)))
        v = product_state(f, FockBasis(3, m))
        assert v.norm() == pytest.approx(1.0, abs=1e-13)

    @given(st.integers(1, 5))
    def test_normalized_and_number_eigenstate(self, N):
        rng = np.random.default_rng(N)
        b = FockBasis(N, modes(4))
        c = unit_vector(rng, 4)
        v = product_state(c, b)
        assert v.norm() == pytest.approx(1.0)
        Nop = number_operator(c, b)
        np.testing.assert_allclose(Nop @ v.amplitudes, N * v.amplitudes, atol=1e-12)

    def test_zero_coefficients(self):
        with pytest.raises(ValueError):
            product_state(np.zeros(4), FockBasis(2, modes(4)))


def test_basis_state():
    b = FockBasis(2, modes(2))
    assert basis_state(b, [1, 1]).amplitudes.tolist() == [0, 1, 0]


def test_snapshot_round_trip(tmp_path, rng):
    b = FockBasis(3, modes(6, L=5.0, M=16))
    v = random_state(b, rng)
    path = tmp_path / "psi.bin"
    write_fock_vector(v, path)
    back = read_fock_vector(path)
    assert back.basis == b
    np.testing.assert_array_equal(back.amplitudes, v.amplitudes)


def test_snapshot_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"\0" * 128)
    with pytest.raises(ValueError):
        read_fock_vector(path)
