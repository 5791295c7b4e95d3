"""Acceptance criteria 1-10, each checked at its stated tolerance.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists
one PASS/FAIL line per criterion.
"""
import math
import time

import numpy as np
import pytest
import yaml

from bosemf.cli import main
from bosemf.config import ExperimentConfig
from bosemf.counting import pk_distribution
from bosemf.experiment import (fit_loglog, initial_datum, regularized_mean_field_energy, run_pair,
                               theorem_l_pipeline, windowed_datum)
from bosemf.fock import FockBasis, ModeBasis, build_hamiltonian, potential_coefficients, product_state
from bosemf.grid import SpectralField, make_grid
from bosemf.nls import nls_evolve, time_reverse
from bosemf.observables import energy_per_particle
from bosemf.verification import (mN_identity, mN_inequality, oracle_equivalence, projector_algebra,
                                 reduction_suite, sandwich_suite, shift_lemma)

SLACK = 1e-10

# smooth datum runs (criteria 3, 4, 7, 9, 10)
MEAN_FIELD = dict(box_length=2 * math.pi, grid_points=64, mode_window=8, n_list=(2, 3, 4, 5, 6), eps=0.2,
                  kappa=1, potential="gaussian", datum={"profile": "gaussian", "center": math.pi, "width": 0.8},
                  t_final=1.0, dt=1e-3, sample_every=50, probe_time=0.5, seed=0)

# rough datum runs (criteria 3, 8, 9)
ROUGH = dict(box_length=8 * math.pi, grid_points=256, mode_window=10, n_list=(2, 3, 4, 5, 6), eps=0.2,
             kappa=1, datum={"profile": "rough", "decay": 0.7, "seed": 3}, eta=0.2,
             t_final=0.25, dt=1e-3, sample_every=50, probe_time=0.25, seed=0)


@pytest.fixture(scope="module")
def mean_field_runs():
    cfg = ExperimentConfig(**MEAN_FIELD)
    return {N: run_pair(cfg, N) for N in cfg.n_list}


@pytest.fixture(scope="module")
def rough_run(tmp_path_factory):
    return theorem_l_pipeline(ExperimentConfig(**ROUGH), tmp_path_factory.mktemp("rough"))


def test_1_oracle_equivalence(rng, acceptance_report):
    start = time.perf_counter()
    r = oracle_equivalence(rng, n_states=50, tol=1e-9)
    elapsed = time.perf_counter() - start
    ok = r.passed and r.samples == 100 and elapsed <= 120
    assert acceptance_report(1, ok, f"worst error {r.worst:.2e} over {r.samples} states in {elapsed:.1f}s")


def test_2_projector_calculus(rng, acceptance_report):
    start = time.perf_counter()
    suites = [mN_identity(rng, tol=1e-9), mN_inequality(rng, slack=1e-10), shift_lemma(rng, tol=1e-9),
              projector_algebra(rng, tol=1e-12)]
    elapsed = time.perf_counter() - start
    ok = all(s.passed for s in suites) and elapsed <= 120
    detail = ", ".join(f"{s.name} {s.worst:.1e}" for s in suites)
    assert acceptance_report(2, ok, f"{detail} in {elapsed:.1f}s")


def test_3_sandwich_and_reduction(rng, mean_field_runs, acceptance_report):
    sand = sandwich_suite(rng, n_matrices=200, slack=SLACK)
    red = reduction_suite(rng, slack=SLACK)
    rows = [r for res in mean_field_runs.values() for r in res.rows]
    worst_sandwich = min(r.sandwich_margin for r in rows)
    worst_reduction = min(r.reduction_margin for r in rows)
    ok = sand.passed and red.passed and worst_sandwich >= -SLACK and worst_reduction >= -SLACK
    assert acceptance_report(
        3, ok, f"random: sandwich {sand.worst:.1e}, reduction {red.worst:.1e}; {len(rows)} trajectory states:"
               f" min margins {worst_sandwich:.2e}, {worst_reduction:.2e}")


def test_4_counting_chain_on_dynamics(mean_field_runs, acceptance_report):
    rows = mean_field_runs[4].rows
    assert rows[-1].t == pytest.approx(1.0)
    worst = 0.0
    for r in rows:
        a, b = math.sqrt(8 * r.alpha), math.sqrt(8 * r.beta)
        worst = max(worst, r.trace_gap_k1 - a, a - b)
    assert acceptance_report(4, worst <= SLACK, f"N=4 K=8, {len(rows)} samples on [0, 1], worst violation {worst:.2e}")


def test_5_product_energy_scaling(acceptance_report):
    modes = ModeBasis(make_grid(2 * math.pi, 64), 8)
    phi0 = initial_datum(ExperimentConfig(**MEAN_FIELD))
    phi = windowed_datum(phi0, modes)
    kernel = potential_coefficients("gaussian", 0.2, modes)
    E_ref = regularized_mean_field_energy(phi, kernel, 1.0)
    scaled, betas = [], []
    for N in (2, 4, 8):
        basis = FockBasis(N, modes)
        vec = product_state(phi, basis)
        E_N = energy_per_particle(vec, build_hamiltonian(basis, kernel, 1.0))
        scaled.append(N * abs(E_N - E_ref))
        betas.append(pk_distribution(vec, phi).beta)
    ratio = max(scaled) / min(scaled)
    ok = max(betas) <= 1e-12 and ratio < 4
    assert acceptance_report(
        5, ok, f"max beta(0) {max(betas):.1e}; N|E_N - E_eps| = {', '.join(f'{s:.5f}' for s in scaled)}"
               f" (ratio {ratio:.3f})")


def test_6_nls_golden(acceptance_report):
    start = time.perf_counter()
    g = make_grid(2 * math.pi, 32)
    A = 1 / math.sqrt(g.length)
    pw = SpectralField.from_function(g, lambda x: A * np.exp(3j * x))
    pw_err = np.abs(nls_evolve(pw, 1, 1.0, 1e-3).final().values - pw.values * np.exp(-1j * (9 + A**2))).max()
    pw_err *= math.sqrt(g.length)

    gs = make_grid(40.0, 512)
    sol = SpectralField.from_function(gs, lambda x: math.sqrt(2) / np.cosh(x - 20))
    traj = nls_evolve(sol, -1, 1.0, 1e-3, sample_every=100)
    sol_err = (traj.final() - sol * np.exp(1j)).norm()

    moving = SpectralField.from_function(gs, lambda x: np.exp(-0.5 * (x - 20) ** 2) * np.exp(1j * x)).normalized()
    mtraj = nls_evolve(moving, 1, 1.0, 1e-3, sample_every=50)
    mass, energy = max(traj.mass_drift(), mtraj.mass_drift()), max(traj.energy_drift(), mtraj.energy_drift())

    g64 = make_grid(2 * math.pi, 64)
    f0 = SpectralField.from_function(g64, lambda x: np.exp(-0.5 * ((x - math.pi) / 0.8) ** 2)).normalized()
    fwd = nls_evolve(f0, 1, 0.5, 1e-3).final()
    rev = (time_reverse(nls_evolve(time_reverse(fwd), 1, 0.5, 1e-3).final()) - f0).norm()
    elapsed = time.perf_counter() - start

    ok = pw_err <= 1e-9 and sol_err <= 1e-4 and mass <= 1e-8 and energy <= 1e-6 and rev <= 1e-7 and elapsed <= 60
    assert acceptance_report(
        6, ok, f"plane wave {pw_err:.1e}, soliton {sol_err:.1e}, mass {mass:.1e}, energy {energy:.1e},"
               f" reversal {rev:.1e} in {elapsed:.1f}s")


def test_7_mean_field_trend(mean_field_runs, acceptance_report):
    Ns = sorted(mean_field_runs)
    probe = [next(r for r in mean_field_runs[N].rows if abs(r.t - 0.5) < 1e-9) for N in Ns]
    parts, ok = [], True
    for name in ("beta", "trace_gap_k1"):
        vals = np.array([getattr(r, name) for r in probe])
        fit = fit_loglog(Ns, vals, name)
        ok &= bool(np.all(np.diff(vals) < 0)) and fit.slope is not None and fit.slope > 0
        parts.append(f"{name} {vals[0]:.4g} -> {vals[-1]:.4g} (order {fit.slope:.3f})")
    runtime = sum(res.runtime_seconds for res in mean_field_runs.values())
    ok &= runtime <= 1800
    assert acceptance_report(7, ok, "; ".join(parts) + f"; {runtime:.1f}s")


def test_8_rough_pipeline(rough_run, acceptance_report):
    rows = rough_run["rows"]
    t0 = [r for r in rows if r["t"] == 0]
    closed = max(abs(r["leg2"] - r["leg2_closed_form"]) for r in t0)
    tails = [r["tail_mass"] for r in t0]
    tail_ok = all(b <= a for a, b in zip(tails, tails[1:]))
    final = {r["N"]: r["total_gap"] for r in rows if abs(r["t"] - 0.25) < 1e-9}
    ok = closed <= 1e-10 and tail_ok and final[6] < final[2]
    assert acceptance_report(
        8, ok, f"leg2 closed-form error {closed:.1e}; tail mass {tails[0]:.5f} -> {tails[-1]:.5f};"
               f" total gap at 0.25: N=2 {final[2]:.5f}, N=6 {final[6]:.5f}")


def test_9_conservation(mean_field_runs, rough_run, acceptance_report):
    norm = max([r.norm_drift for r in mean_field_runs.values()] +
               [d["norm_drift"] for d in rough_run["drifts"].values()])
    energy = max([r.energy_drift for r in mean_field_runs.values()] +
                 [d["energy_drift"] for d in rough_run["drifts"].values()])
    ok = norm <= 1e-8 and energy <= 1e-8
    assert acceptance_report(9, ok, f"max norm drift {norm:.1e}, max energy-per-particle drift {energy:.1e}")


def test_10_determinism(tmp_path, acceptance_report):
    cfg = {**MEAN_FIELD, "n_list": list(MEAN_FIELD["n_list"]), "t_final": 0.5}
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    codes = [main(["sweep-n", "--config", str(path), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    a = (tmp_path / "a" / "sweep_n.csv").read_bytes()
    b = (tmp_path / "b" / "sweep_n.csv").read_bytes()
    ok = codes == [0, 0] and a == b
    assert acceptance_report(10, ok, f"two sweep-n runs, {len(a)} bytes each, identical: {a == b}")
