"""Side-by-side many-body and NLS runs, parameter sweeps and result files.

The many-body product state is built from the windowed, renormalized datum
``phi_w`` and the NLS is started from the same ``phi_w``, so every gap is
zero at t = 0 and all growth is dynamical.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .counting import grad_q1_norm, pk_distribution
from .fock import FockBasis, FockVector, ModeBasis, build_hamiltonian, potential_coefficients, product_state
from .grid import SpectralField, make_grid
from .nls import NlsDivergence, high_frequency_tail, mollification_cutoff, mollify_initial_datum, nls_energy, nls_evolve
from .observables import (fidelity, k_from_one_check, pair_interaction_integral, pure_state_trace_distance,
                          rdm1, rdm2, sandwich_check, trace_norm_gap)
from .propagator import PropagatorConfig, PropagatorError, expm_apply_array

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def initial_datum(cfg: ExperimentConfig) -> SpectralField:
    """Unit-mass initial datum on the configured grid."""
    g = make_grid(cfg.box_length, cfg.grid_points)
    d = dict(cfg.datum)
    profile = d.pop("profile")
    L = g.length
    if profile in ("gaussian", "sech"):
        x0 = float(d.get("center", L / 2))
        w = float(d.get("width", 1.0))
        p = float(d.get("momentum", 0.0))
        # distance on the torus keeps the profile periodic
        r = (g.x - x0 + L / 2) % L - L / 2
        env = np.exp(-0.5 * (r / w) ** 2) if profile == "gaussian" else 1 / np.cosh(r / w)
        f = SpectralField(g, env * np.exp(1j * p * g.x))
    elif profile == "plane_wave":
        f = SpectralField(g, np.exp(2j * np.pi * int(d.get("mode", 0)) * g.x / L))
    elif profile == "rough":
        rng = np.random.default_rng(int(d.get("seed", cfg.seed)))
        amp = (1.0 + np.abs(g.k)) ** (-float(d.get("decay", 0.7)))
        c = amp * np.exp(2j * np.pi * rng.random(g.points))
        f = SpectralField.from_coefficients(g, c)
    elif profile == "file":
        vals = np.load(d["path"])
        if vals.shape != (g.points,):
            raise ValueError(f"datum file holds {vals.shape}, grid has {g.points} points")
        f = SpectralField(g, vals.astype(complex))
    else:
        raise ValueError(f"unknown profile {profile!r}")
    return f.normalized()


def windowed_datum(phi0: SpectralField, modes: ModeBasis) -> SpectralField:
    """phi_w: the window part of phi0, renormalized, as a grid field."""
    return modes.field(modes.window(phi0))


def regularized_mean_field_energy(phi: SpectralField, kernel, kappa: float) -> float:
    """||phi'||^2 + (kappa / 2) int |phi|^2 (V_eps * |phi|^2): the N -> infinity energy at fixed eps."""
    return phi.gradient_norm() ** 2 + 0.5 * kappa * pair_interaction_integral(phi, kernel)


# ---------------------------------------------------------------------------
# result rows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    N: int
    eps: float
    t: float
    beta: float
    alpha: float
    trace_gap_k1: float
    trace_gap_k2: float
    fidelity_k1: float
    E_N: float
    E_phi: float
    energy_gap: float
    grad_q1: float
    sandwich_margin: float
    reduction_margin: float
    runtime_seconds: float = 0.0


# runtime is kept out of the table so that reruns are byte-identical
RESULT_COLUMNS = tuple(f.name for f in fields(ResultRow) if f.name != "runtime_seconds")


@dataclass
class PairResult:
    N: int
    eps: float
    rows: list
    norm_drift: float
    energy_drift: float
    nls_mass_drift: float
    runtime_seconds: float
    final_state: FockVector | None = None

    def __iter__(self):
        return iter(self.rows)


def _propagator_config(cfg: ExperimentConfig) -> PropagatorConfig:
    t = cfg.tolerances
    return PropagatorConfig(dt=cfg.sample_interval, krylov_dim=t.krylov_dim, tol=t.krylov_tol,
                            max_substeps=t.max_substeps)


def _setup(cfg: ExperimentConfig, N: int, eps: float, phi_mb: SpectralField):
    modes = ModeBasis(phi_mb.grid, cfg.mode_window)
    basis = FockBasis(N, modes, max_dim=cfg.tolerances.max_dim)
    kernel = potential_coefficients(cfg.potential, eps, modes)
    H = build_hamiltonian(basis, kernel, cfg.kappa)
    return modes, basis, kernel, H


def _many_body_samples(H, state0, n_samples, pcfg):
    u = np.array(state0.amplitudes)
    out = [u]
    for _ in range(n_samples - 1):
        u = expm_apply_array(H, u, pcfg.dt, pcfg)
        out.append(u)
    return out


def run_pair(cfg: ExperimentConfig, N: int, eps: float | None = None) -> PairResult:
    """Evolve Phi_N under H_{N,eps} and phi under NLS from matched data and compare."""
    start = time.perf_counter()
    eps = cfg.eps_for(N) if eps is None else float(eps)
    phi0 = initial_datum(cfg)
    modes = ModeBasis(phi0.grid, cfg.mode_window)
    phi_w = windowed_datum(phi0, modes)
    modes, basis, kernel, H = _setup(cfg, N, eps, phi_w)
    Phi0 = product_state(phi_w, basis)
    traj = nls_evolve(phi_w, cfg.kappa, cfg.t_final, cfg.dt, cfg.sample_every)
    states = _many_body_samples(H, Phi0, len(traj.times), _propagator_config(cfg))
    rows = []
    e0 = Phi0.expectation(H) / N
    norm_drift = energy_drift = 0.0
    for t, phi_t, amp in zip(traj.times, traj.fields, states):
        vec = FockVector(basis, amp)
        norm_drift = max(norm_drift, abs(vec.norm() - 1.0))
        E_N = vec.expectation(H) / N
        energy_drift = max(energy_drift, abs(E_N - e0))
        rows.append(_row(cfg, vec, phi_t, N, eps, float(t), E_N))
    drift_tol = cfg.tolerances.drift
    if norm_drift > drift_tol or energy_drift > drift_tol:
        raise NumericalFailure(
            f"N={N}, eps={eps}: norm drift {norm_drift:.2e}, energy drift {energy_drift:.2e} exceed {drift_tol}")
    return PairResult(N, eps, rows, norm_drift, energy_drift, traj.mass_drift(),
                      time.perf_counter() - start, FockVector(basis, states[-1]))


def _row(cfg, vec, phi_t, N, eps, t, E_N) -> ResultRow:
    dist = pk_distribution(vec, phi_t)
    g1 = rdm1(vec)
    E_phi = nls_energy(phi_t, cfg.kappa)
    if N >= 2:
        g2 = rdm2(vec)
        gap2 = trace_norm_gap(g2, phi_t)
        red = k_from_one_check(g1, g2, phi_t).margin
    else:
        gap2 = trace_norm_gap(g1, phi_t)
        red = 0.0
    return ResultRow(
        N=N, eps=eps, t=t, beta=dist.beta, alpha=dist.alpha,
        trace_gap_k1=trace_norm_gap(g1, phi_t), trace_gap_k2=gap2,
        fidelity_k1=fidelity(g1, phi_t), E_N=E_N, E_phi=E_phi, energy_gap=E_N - E_phi,
        grad_q1=grad_q1_norm(vec, phi_t), sandwich_margin=sandwich_check(g1, phi_t).margin,
        reduction_margin=red)


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _header_lines(cfg: ExperimentConfig, kind: str) -> list[str]:
    return [f"# bosemf {__version__} {kind}", f"# config {cfg.fingerprint()}"]


def write_table(path: Path, header: list[str], columns, rows) -> None:
    """Atomically (re)write a CSV file with comment header lines."""
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)


def read_table(path: Path) -> tuple[list[str], list[dict]]:
    text = path.read_text(encoding="utf-8").splitlines()
    header = [ln for ln in text if ln.startswith("#")]
    body = [ln for ln in text if not ln.startswith("#")]
    return header, list(csv.DictReader(body))


def _parse_row(raw: dict) -> dict:
    out = {}
    for k, v in raw.items():
        out[k] = int(v) if k == "N" else float(v)
    return out


class ResultSink:
    """Single writer for a sweep table.  Rows are kept sorted by (N, eps, t)."""

    def __init__(self, path: Path, cfg: ExperimentConfig, kind: str):
        self.path = path
        self.header = _header_lines(cfg, kind)
        self.rows: list[dict] = []
        if path.exists():
            header, rows = read_table(path)
            if header != self.header:
                raise ValueError(f"{path} was produced by a different configuration; refusing to resume")
            self.rows = [_parse_row(r) for r in rows]

    def completed(self) -> set:
        return {(r["N"], r["eps"]) for r in self.rows}

    def add(self, rows) -> None:
        self.rows.extend(asdict(r) if isinstance(r, ResultRow) else r for r in rows)
        self.rows.sort(key=lambda r: (r["N"], r["eps"], r["t"]))
        write_table(self.path, self.header, RESULT_COLUMNS, self.rows)


def write_metadata(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    meta = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": cfg.as_dict(),
        **payload,
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _run_point(args):
    cfg, N, eps = args
    try:
        return run_pair(cfg, N, eps), None
    except (PropagatorError, NlsDivergence, NumericalFailure, ValueError, ArithmeticError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_points(cfg, points, sink: ResultSink, workers: int = 1, on_result=None) -> dict:
    """Run (N, eps) points not yet in ``sink``; results are recorded in the calling process."""
    done = sink.completed()
    todo = [(N, e) for N, e in points if (N, e) not in done]
    status = {"skipped": [[N, e] for N, e in points if (N, e) in done], "failures": {}, "points": {}}
    jobs = [(cfg, N, e) for N, e in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for job, res in zip(jobs, pool.map(_run_point, jobs)):
                _record(sink, status, job, res, on_result)
    else:
        for job in jobs:
            _record(sink, status, job, _run_point(job), on_result)
    return status


def _record(sink, status, job, res, on_result):
    _, N, eps = job
    result, err = res
    key = f"N={N},eps={eps!r}"
    if err is not None:
        log.error("point %s failed: %s", key, err)
        status["failures"][key] = err
        return
    sink.add(result.rows)
    status["points"][key] = {"norm_drift": result.norm_drift, "energy_drift": result.energy_drift,
                             "nls_mass_drift": result.nls_mass_drift,
                             "runtime_seconds": result.runtime_seconds}
    if on_result is not None:
        on_result(result)


@dataclass(frozen=True)
class SlopeFit:
    observable: str
    slope: float | None
    residual: float | None
    monotone_decreasing: bool
    note: str = ""


def fit_loglog(x, y, name: str) -> SlopeFit:
    """Least-squares p in y ~ x^(-p); positive p means decay."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(np.abs(y) < 1e-14):
        return SlopeFit(name, None, None, False, "identically zero")
    if np.any(y <= 0):
        return SlopeFit(name, None, None, False, "nonpositive values")
    coef, res, *_ = np.polyfit(np.log(x), np.log(y), 1, full=True)
    resid = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    order = np.argsort(x)
    mono = bool(np.all(np.diff(y[order]) < 0))
    return SlopeFit(name, float(-coef[0]), resid, mono)


def rows_at(rows, t: float, tol: float = 1e-9) -> list[dict]:
    return [r for r in rows if abs(r["t"] - t) <= tol]


def _probe_time(cfg: ExperimentConfig) -> float:
    h = cfg.sample_interval
    j = round(cfg.probe_time / h)
    if abs(j * h - cfg.probe_time) > 1e-9 * max(1.0, cfg.probe_time):
        raise ValueError("probe_time must be a multiple of dt * sample_every")
    return j * h


FIT_OBSERVABLES = ("beta", "alpha", "trace_gap_k1", "trace_gap_k2")


def sweep_n(cfg: ExperimentConfig, out_dir: Path | None = None, workers: int = 1) -> dict:
    """Run every N of ``n_list`` and fit log(observable) against log N at the probe time."""
    if len(cfg.n_list) < 3:
        raise ValueError("sweep_n needs at least three values in n_list")
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    sink = ResultSink(out_dir / "sweep_n.csv", cfg, "sweep-n")
    points = [(int(N), cfg.eps_for(int(N))) for N in sorted(cfg.n_list)]
    status = run_points(cfg, points, sink, workers)
    t_star = _probe_time(cfg)
    probe = sorted(rows_at(sink.rows, t_star), key=lambda r: r["N"])
    fits = [fit_loglog([r["N"] for r in probe], [r[c] for r in probe], c) for c in FIT_OBSERVABLES]
    write_table(out_dir / "sweep_n_fits.csv", _header_lines(cfg, "sweep-n fits"),
                ("observable", "slope", "residual", "monotone_decreasing", "note"),
                [asdict(f) for f in fits])
    payload = {"kind": "sweep-n", "probe_time": t_star, "fits": [asdict(f) for f in fits],
               "wall_seconds": time.perf_counter() - start, **status}
    write_metadata(out_dir / "sweep_n.json", cfg, payload)
    return {"rows": sink.rows, "fits": fits, **status}


def sweep_eps(cfg: ExperimentConfig, out_dir: Path | None = None, workers: int = 1) -> dict:
    """For each N, run every eps of ``eps_list`` and report successive differences and eps-orders."""
    if len(cfg.eps_list) < 2:
        raise ValueError("sweep_eps needs at least two values in eps_list")
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    sink = ResultSink(out_dir / "sweep_eps.csv", cfg, "sweep-eps")
    eps_desc = sorted(cfg.eps_list, reverse=True)
    points = [(int(N), float(e)) for N in sorted(cfg.n_list) for e in eps_desc]
    status = run_points(cfg, points, sink, workers)
    t_star = _probe_time(cfg)
    summary = []
    for N in sorted(cfg.n_list):
        probe = sorted((r for r in rows_at(sink.rows, t_star) if r["N"] == N), key=lambda r: -r["eps"])
        if len(probe) < 2:
            continue
        for c in FIT_OBSERVABLES:
            vals = np.array([r[c] for r in probe])
            diffs = np.abs(np.diff(vals))
            # order of the eps-dependence from the successive differences (Cauchy rate)
            fit = fit_loglog([r["eps"] for r in probe[1:]], diffs, c)
            summary.append({"N": N, "observable": c, "eps_order": None if fit.slope is None else -fit.slope,
                            "differences": diffs.tolist(), "note": fit.note})
    payload = {"kind": "sweep-eps", "probe_time": t_star, "summary": summary,
               "wall_seconds": time.perf_counter() - start, **status}
    write_metadata(out_dir / "sweep_eps.json", cfg, payload)
    return {"rows": sink.rows, "summary": summary, **status}


# ---------------------------------------------------------------------------
# rough data with mollification
# ---------------------------------------------------------------------------

THEOREM_L_COLUMNS = ("N", "eps", "t", "cutoff", "tail_mass", "leg1", "leg2", "leg2_closed_form", "total_gap",
                     "beta_mollified", "initial_distance")


def theorem_l_pipeline(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Many-body from the mollified datum against both the mollified and the rough NLS solutions.

    Per N and sample time: ``leg1`` = Tr|gamma1 - |phi_N><phi_N||,
    ``leg2`` = Tr||phi_N><phi_N| - |phi><phi||, ``total_gap`` =
    Tr|gamma1 - |phi><phi||, ``tail_mass`` = ||P_{>cutoff} phi0||.
    """
    if cfg.eta is None:
        raise ValueError("theorem-l needs eta in (0, 1/4)")
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    phi0 = initial_datum(cfg)
    rough = nls_evolve(phi0, cfg.kappa, cfg.t_final, cfg.dt, cfg.sample_every)
    pcfg = _propagator_config(cfg)
    rows, drifts = [], {}
    for N in sorted(int(n) for n in cfg.n_list):
        eps = cfg.eps_for(N)
        cutoff = mollification_cutoff(N, cfg.eta)
        if cutoff >= (cfg.mode_window // 2) * 2 * math.pi / cfg.box_length:
            raise ValueError(f"cutoff {cutoff:.3g} for N={N} is not inside the mode window")
        phiN0 = mollify_initial_datum(phi0, N, cfg.eta)
        tail = high_frequency_tail(phi0, cutoff)
        modes, basis, kernel, H = _setup(cfg, N, eps, phiN0)
        Phi0 = product_state(phiN0, basis)
        moll = nls_evolve(phiN0, cfg.kappa, cfg.t_final, cfg.dt, cfg.sample_every)
        states = _many_body_samples(H, Phi0, len(moll.times), pcfg)
        e0 = Phi0.expectation(H)
        nd = ed = 0.0
        for t, phiN, phi, amp in zip(moll.times, moll.fields, rough.fields, states):
            vec = FockVector(basis, amp)
            nd = max(nd, abs(vec.norm() - 1))
            ed = max(ed, abs(vec.expectation(H) - e0) / N)
            g1 = rdm1(vec)
            ov = abs(np.vdot(phiN.values, phi.values) * phi0.grid.spacing) / (phiN.norm() * phi.norm())
            rows.append({
                "N": N, "eps": eps, "t": float(t), "cutoff": cutoff, "tail_mass": float(tail),
                "leg1": trace_norm_gap(g1, phiN), "leg2": pure_state_trace_distance(phiN, phi),
                "leg2_closed_form": 2 * math.sqrt(max(0.0, 1 - ov**2)),
                "total_gap": trace_norm_gap(g1, phi),
                "beta_mollified": pk_distribution(vec, phiN).beta,
                "initial_distance": float((phiN0 - phi0).norm()),
            })
        drifts[N] = {"norm_drift": nd, "energy_drift": ed}
        if nd > cfg.tolerances.drift or ed > cfg.tolerances.drift:
            raise NumericalFailure(f"N={N}: norm drift {nd:.2e}, energy drift {ed:.2e}")
    write_table(out_dir / "theorem_l.csv", _header_lines(cfg, "theorem-l"), THEOREM_L_COLUMNS, rows)
    write_metadata(out_dir / "theorem_l.json", cfg, {"kind": "theorem-l", "drifts": drifts,
                                                      "wall_seconds": time.perf_counter() - start})
    return {"rows": rows, "drifts": drifts}
