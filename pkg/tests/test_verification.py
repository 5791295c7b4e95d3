import math

import numpy as np
import pytest

from bosemf import oracle as O
from bosemf import verification as V
from bosemf.verification import SUITES, SuiteResult, run_verification

from conftest import unit_vector


@pytest.fixture(scope="module")
def all_results():
    return run_verification(seed=0)


def test_every_suite_passes(all_results):
    assert [r.name for r in all_results] == list(SUITES)
    for r in all_results:
        assert r.passed, r.line()


def test_seeded_runs_repeat():
    a = run_verification(seed=7, only=["trace_norm_sandwich", "mN_inequality"])
    b = run_verification(seed=7, only=["trace_norm_sandwich", "mN_inequality"])
    assert [r.worst for r in a] == [r.worst for r in b]


def test_tolerance_override():
    res = run_verification(seed=0, tolerance=1e-15, only=["moments_vs_lagrange", "spectral_projectors"])
    assert all(r.tolerance == 1e-15 for r in res)
    assert not all(r.passed for r in res)


def test_crashing_suite_fails(monkeypatch):
    def boom(rng):
        raise RuntimeError("broken")
    monkeypatch.setitem(SUITES, "boom", boom)
    (r,) = run_verification(only=["boom"])
    assert not r.passed and math.isinf(r.worst) and "crash" in r.kind


def test_result_line():
    assert SuiteResult("x", 0.0, 1e-9, "error", 3).line().startswith("PASS")
    assert SuiteResult("x", 1.0, 1e-9, "error", 3).line().startswith("FAIL")
    assert not SuiteResult("x", math.nan, 1e-9, "error", 3).passed


def test_shift_lemma_sign_discriminates(rng):
    # the opposite shift direction must be visibly wrong, or the suite proves nothing
    K, N = 4, 3
    worst = 0.0
    for _ in range(5):
        psi = O.random_symmetric_state(N, K, rng)
        phi = unit_vector(rng, K)
        A = rng.normal(size=(K, K))
        A = A + A.T
        table = rng.random(N + 5)
        lhs = O.apply_pj(O.apply_one_body(A, O.apply_hat(lambda k: table[k + 2], O.apply_qj(psi, phi, 1), phi), 1),
                         phi, 1)
        wrong = O.apply_pj(O.apply_hat(lambda k: table[k + 2 - 1], O.apply_one_body(A, O.apply_qj(psi, phi, 1), 1),
                                       phi), phi, 1)
        worst = max(worst, np.abs(lhs.data - wrong.data).max())
    assert worst > 1e-3


def test_random_density_matrix(rng):
    for _ in range(10):
        G = V.random_density_matrix(rng, 5)
        assert np.trace(G).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(G).min() > -1e-14
