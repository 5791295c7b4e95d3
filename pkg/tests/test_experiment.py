import json
import math

import numpy as np
import pytest

from bosemf.config import ExperimentConfig
from bosemf.experiment import (RESULT_COLUMNS, NumericalFailure, ResultSink, fit_loglog, initial_datum,
                               read_table, regularized_mean_field_energy, run_pair, sweep_eps, sweep_n,
                               theorem_l_pipeline, windowed_datum)
from bosemf.fock import ModeBasis, potential_coefficients
from bosemf.nls import nls_energy
from bosemf.observables import product_state_energy

SMALL = dict(grid_points=64, mode_window=4, n_list=(2, 3, 4), t_final=0.1, dt=1e-3, sample_every=50,
             probe_time=0.1, datum={"profile": "gaussian", "center": math.pi, "width": 0.8})


def small(**changes):
    return ExperimentConfig(**{**SMALL, **changes})


class TestInitialDatum:
    @pytest.mark.parametrize("datum", [
        {"profile": "gaussian"}, {"profile": "sech", "width": 0.5, "momentum": 1.0},
        {"profile": "plane_wave", "mode": 2}, {"profile": "rough", "decay": 1.0, "seed": 4}])
    def test_unit_mass(self, datum):
        assert initial_datum(small(datum=datum)).mass() == pytest.approx(1.0)

    def test_rough_is_seeded(self):
        a = initial_datum(small(datum={"profile": "rough", "seed": 1}))
        b = initial_datum(small(datum={"profile": "rough", "seed": 1}))
        c = initial_datum(small(datum={"profile": "rough", "seed": 2}))
        assert np.array_equal(a.values, b.values) and not np.array_equal(a.values, c.values)

    def test_file(self, tmp_path):
        np.save(tmp_path / "f.npy", np.arange(64) + 1.0)
        phi = initial_datum(small(datum={"profile": "file", "path": str(tmp_path / "f.npy")}))
        assert phi.mass() == pytest.approx(1.0)
        np.save(tmp_path / "g.npy", np.ones(8))
        with pytest.raises(ValueError):
            initial_datum(small(datum={"profile": "file", "path": str(tmp_path / "g.npy")}))


class TestRunPair:
    def test_initial_row(self):
        cfg = small()
        res = run_pair(cfg, 3)
        r0 = res.rows[0]
        assert r0.t == 0
        assert r0.beta == pytest.approx(0, abs=1e-7) and r0.alpha == pytest.approx(0, abs=1e-12)
        assert r0.trace_gap_k1 < 1e-7 and r0.trace_gap_k2 < 1e-7
        assert r0.fidelity_k1 == pytest.approx(1.0)
        phi = windowed_datum(initial_datum(cfg), ModeBasis(initial_datum(cfg).grid, 4))
        ker = potential_coefficients("gaussian", 0.2, ModeBasis(phi.grid, 4))
        assert r0.E_N == pytest.approx(product_state_energy(phi, ker, 1.0, 3), rel=1e-10)
        assert r0.energy_gap == pytest.approx(r0.E_N - nls_energy(phi, 1.0), abs=1e-12)

    def test_sampling_and_drift(self):
        res = run_pair(small(), 2)
        assert [r.t for r in res.rows] == pytest.approx([0.0, 0.05, 0.1])
        assert res.norm_drift < 1e-12 and res.energy_drift < 1e-10
        assert res.final_state.basis.n_particles == 2

    def test_linear_control(self):
        res = run_pair(small(kappa=0), 3)
        for r in res.rows:
            assert r.beta < 1e-7 and r.trace_gap_k1 < 1e-7 and r.energy_gap == pytest.approx(0, abs=1e-10)

    def test_single_particle(self):
        res = run_pair(small(kappa=0), 1)
        assert all(r.alpha < 1e-12 for r in res.rows)

    def test_invariants_along_trajectory(self):
        for r in run_pair(small(t_final=0.3, probe_time=0.3), 3).rows:
            assert r.alpha <= r.beta + 1e-12 and r.beta <= math.sqrt(r.alpha) + 1e-12
            assert r.sandwich_margin >= -1e-10 and r.reduction_margin >= -1e-10

    def test_drift_guard(self):
        cfg = small(tolerances=ExperimentConfig().tolerances.__class__(drift=1e-30))
        with pytest.raises(NumericalFailure):
            run_pair(cfg, 3)

    def test_mean_field_energy_limit(self):
        cfg = small()
        phi = windowed_datum(initial_datum(cfg), ModeBasis(initial_datum(cfg).grid, 4))
        ker = potential_coefficients("gaussian", 0.2, ModeBasis(phi.grid, 4))
        gaps = [abs(product_state_energy(phi, ker, 1.0, N) - regularized_mean_field_energy(phi, ker, 1.0)) * N
                for N in (2, 5, 50)]
        np.testing.assert_allclose(gaps, gaps[0], rtol=1e-10)


class TestSweeps:
    def test_sweep_n(self, tmp_path):
        out = sweep_n(small(), tmp_path)
        header, rows = read_table(tmp_path / "sweep_n.csv")
        assert header[0].startswith("# bosemf") and header[1].startswith("# config")
        assert tuple(rows[0]) == RESULT_COLUMNS
        assert len(rows) == 9 and not out["failures"]
        assert [f.observable for f in out["fits"]] == ["beta", "alpha", "trace_gap_k1", "trace_gap_k2"]
        meta = json.loads((tmp_path / "sweep_n.json").read_text())
        assert set(meta["points"]) == {"N=2,eps=0.2", "N=3,eps=0.2", "N=4,eps=0.2"}

    def test_resume_skips_and_is_stable(self, tmp_path):
        sweep_n(small(), tmp_path)
        first = (tmp_path / "sweep_n.csv").read_bytes()
        again = sweep_n(small(), tmp_path)
        assert len(again["skipped"]) == 3 and not again["points"]
        assert (tmp_path / "sweep_n.csv").read_bytes() == first

    def test_resume_after_partial_run(self, tmp_path):
        sweep_n(small(n_list=(2, 3, 4)), tmp_path / "full")
        part = tmp_path / "part"
        part.mkdir()
        sink = ResultSink(part / "sweep_n.csv", small(), "sweep-n")
        sink.add(run_pair(small(), 3).rows)
        res = sweep_n(small(), part)
        assert res["skipped"] == [[3, 0.2]]
        assert (part / "sweep_n.csv").read_bytes() == (tmp_path / "full" / "sweep_n.csv").read_bytes()

    def test_refuses_foreign_table(self, tmp_path):
        sweep_n(small(), tmp_path)
        with pytest.raises(ValueError, match="different configuration"):
            sweep_n(small(seed=5), tmp_path)

    def test_parallel_matches_serial(self, tmp_path):
        sweep_n(small(), tmp_path / "a")
        sweep_n(small(), tmp_path / "b", workers=2)
        assert (tmp_path / "a" / "sweep_n.csv").read_bytes() == (tmp_path / "b" / "sweep_n.csv").read_bytes()

    def test_needs_three_n(self, tmp_path):
        with pytest.raises(ValueError):
            sweep_n(small(n_list=(2, 3)), tmp_path)

    def test_probe_time_on_sample_grid(self, tmp_path):
        with pytest.raises(ValueError, match="multiple"):
            sweep_n(small(probe_time=0.07), tmp_path)

    def test_failed_point_is_reported(self, tmp_path):
        cfg = small(tolerances=ExperimentConfig().tolerances.__class__(max_dim=10))
        out = sweep_n(cfg, tmp_path)
        # N = 2 (dim 10) runs; N = 3, 4 exceed the cap
        assert set(out["failures"]) == {"N=3,eps=0.2", "N=4,eps=0.2"}

    def test_sweep_eps(self, tmp_path):
        out = sweep_eps(small(n_list=(2,), eps_list=(0.4, 0.3, 0.2)), tmp_path)
        assert len(out["rows"]) == 9
        assert {s["observable"] for s in out["summary"]} == {"beta", "alpha", "trace_gap_k1", "trace_gap_k2"}
        assert all(len(s["differences"]) == 2 for s in out["summary"])
        with pytest.raises(ValueError):
            sweep_eps(small(eps_list=(0.2,)), tmp_path / "x")


    def test_sweep_eps_linear_control(self, tmp_path):
        out = sweep_eps(small(kappa=0, n_list=(2,), eps_list=(0.4, 0.2)), tmp_path)
        for s in out["summary"]:
            assert s["note"] == "identically zero"


class TestFit:
    def test_power_law(self):
        fit = fit_loglog([2, 4, 8], [1, 0.5, 0.25], "y")
        assert fit.slope == pytest.approx(1.0) and fit.residual < 1e-12 and fit.monotone_decreasing

    def test_zero(self):
        assert fit_loglog([2, 3], [0, 0], "y").note == "identically zero"

    def test_nonpositive(self):
        assert fit_loglog([2, 3], [1, -1], "y").slope is None


class TestRoughPipeline:
    CFG = dict(box_length=8 * math.pi, grid_points=256, mode_window=10, n_list=(2, 3), eta=0.2,
               t_final=0.1, probe_time=0.1, datum={"profile": "rough", "decay": 0.7, "seed": 3})

    def test_pipeline(self, tmp_path):
        out = theorem_l_pipeline(ExperimentConfig(**self.CFG), tmp_path)
        rows = out["rows"]
        assert len(rows) == 2 * 3
        for r in rows:
            assert r["leg2"] == pytest.approx(r["leg2_closed_form"], abs=1e-7)
            assert r["total_gap"] <= r["leg1"] + r["leg2"] + 1e-10
        r0 = [r for r in rows if r["t"] == 0]
        for r in r0:
            assert r["leg1"] < 1e-7
            # mass outside the cutoff is the distance of the unit-mass projection up to renormalization
            assert r["tail_mass"] > 0 and r["initial_distance"] > 0
        assert (tmp_path / "theorem_l.csv").exists() and (tmp_path / "theorem_l.json").exists()

    def test_leg2_bounded_by_datum_distance(self, tmp_path):
        rows = theorem_l_pipeline(ExperimentConfig(**self.CFG), tmp_path)["rows"]
        for r in rows:
            if r["t"] == 0:
                assert r["leg2"] <= 2 * r["initial_distance"] + 1e-12

    def test_band_limited_datum(self, tmp_path):
        cfg = ExperimentConfig(**{**self.CFG, "datum": {"profile": "plane_wave", "mode": 0}})
        for r in theorem_l_pipeline(cfg, tmp_path)["rows"]:
            assert r["leg2"] < 1e-7 and r["tail_mass"] < 1e-14
            assert r["total_gap"] == pytest.approx(r["leg1"], abs=1e-9)

    def test_needs_eta(self, tmp_path):
        with pytest.raises(ValueError, match="eta"):
            theorem_l_pipeline(ExperimentConfig(**{**self.CFG, "eta": None}), tmp_path)

    def test_cutoff_outside_window(self, tmp_path):
        with pytest.raises(ValueError, match="window"):
            theorem_l_pipeline(ExperimentConfig(**{**self.CFG, "mode_window": 2}), tmp_path)
