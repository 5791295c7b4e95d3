"""Experiment configuration: YAML file with a fixed key set."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .fock import SHAPES


class ConfigError(ValueError):
    pass


DATUM_PROFILES = {
    "gaussian": {"center", "width", "momentum"},
    "sech": {"center", "width", "momentum"},
    "plane_wave": {"mode"},
    "rough": {"decay", "seed"},
    "file": {"path"},
}


@dataclass(frozen=True)
class Tolerances:
    krylov_tol: float = 1e-10
    krylov_dim: int = 30
    max_substeps: int = 10_000
    drift: float = 1e-8
    max_dim: int = 5_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    """All fields of a run.  Exactly one of ``eps`` and ``eps_beta`` is set.

    ``dt`` is the NLS step; samples are taken every ``sample_every`` steps
    and the many-body state is propagated across each sample interval.
    """

    box_length: float = 2 * math.pi
    grid_points: int = 64
    mode_window: int = 8
    n_list: tuple = (2, 3, 4)
    eps: float | None = 0.2
    eps_beta: float | None = None
    eps_list: tuple = ()
    kappa: float = 1.0
    potential: str = "gaussian"
    datum: dict = field(default_factory=lambda: {"profile": "gaussian"})
    t_final: float = 1.0
    dt: float = 1e-3
    sample_every: int = 50
    probe_time: float = 0.5
    eta: float | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if not self.box_length > 0:
            raise ConfigError("box_length must be positive")
        if self.grid_points < 8 or self.grid_points % 2:
            raise ConfigError("grid_points must be even and >= 8")
        if self.mode_window < 2 or self.mode_window % 2 or self.mode_window > self.grid_points:
            raise ConfigError("mode_window must be even with 2 <= K <= grid_points")
        if not self.n_list or any(int(n) != n or n < 1 for n in self.n_list):
            raise ConfigError("n_list must be a nonempty list of integers >= 1")
        if (self.eps is None) == (self.eps_beta is None):
            raise ConfigError("set exactly one of eps and eps_beta")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.eps_beta is not None and not self.eps_beta > 0:
            raise ConfigError("eps_beta must be positive")
        if any(not e > 0 for e in self.eps_list):
            raise ConfigError("eps_list entries must be positive")
        if self.kappa not in (-1, 0, 1):
            raise ConfigError("kappa must be -1, 0 or 1")
        if self.potential not in SHAPES:
            raise ConfigError(f"potential must be one of {sorted(SHAPES)}")
        if not self.dt > 0 or self.t_final < 0 or self.sample_every < 1:
            raise ConfigError("need dt > 0, t_final >= 0 and sample_every >= 1")
        if not 0 <= self.probe_time <= self.t_final + 1e-12:
            raise ConfigError("probe_time must lie in [0, t_final]")
        if self.eta is not None and not 0 < self.eta < 0.25:
            raise ConfigError("eta must lie in (0, 1/4)")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        _check_datum(self.datum)

    @property
    def sample_interval(self) -> float:
        return self.dt * self.sample_every

    def eps_for(self, n_particles: int) -> float:
        """Fixed eps, or eps = N^(-beta)."""
        if self.eps is not None:
            return float(self.eps)
        return float(n_particles ** (-self.eps_beta))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_list"] = list(self.n_list)
        d["eps_list"] = list(self.eps_list)
        return d

    def fingerprint(self) -> str:
        """Canonical JSON of everything that affects numerical results."""
        d = self.as_dict()
        d.pop("output_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _check_datum(datum: dict):
    if not isinstance(datum, dict) or "profile" not in datum:
        raise ConfigError("datum must be a mapping with a 'profile' key")
    profile = datum["profile"]
    if profile not in DATUM_PROFILES:
        raise ConfigError(f"unknown datum profile {profile!r}; choose from {sorted(DATUM_PROFILES)}")
    extra = set(datum) - {"profile"} - DATUM_PROFILES[profile]
    if extra:
        raise ConfigError(f"unknown keys for datum profile {profile!r}: {sorted(extra)}")
    if profile == "file":
        if "path" not in datum:
            raise ConfigError("datum profile 'file' needs a 'path'")
        if not Path(datum["path"]).is_file():
            raise ConfigError(f"datum file {datum['path']!r} does not exist")


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
_TOL_FIELDS = {f.name for f in dataclasses.fields(Tolerances)}


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    d = dict(raw)
    tol = d.pop("tolerances", None) or {}
    if not isinstance(tol, dict):
        raise ConfigError("tolerances must be a mapping")
    bad = set(tol) - _TOL_FIELDS
    if bad:
        raise ConfigError(f"unknown tolerance keys: {sorted(bad)}")
    if "n_list" in d:
        d["n_list"] = tuple(d["n_list"])
    if "eps_list" in d:
        d["eps_list"] = tuple(float(e) for e in d["eps_list"])
    if "eps_beta" in d and d["eps_beta"] is not None and "eps" not in d:
        d["eps"] = None
    datum = d.get("datum")
    if isinstance(datum, dict) and datum.get("profile") == "file" and base_dir is not None:
        p = Path(datum.get("path", ""))
        if not p.is_absolute():
            d["datum"] = {**datum, "path": str(base_dir / p)}
    try:
        return ExperimentConfig(tolerances=Tolerances(**tol), **d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return config_from_dict(raw or {}, path.parent)
