"""Experiment configuration.

A config is a YAML mapping with a top-level ``version`` key (currently 1)
and four blocks::

    version: 1
    experiment: srm-convergence
    geometry:  {layers: 2, n1: 8, n2: 8, frequency_hz: 3.0e10,
                thickness_wavelengths: 5.0, pitch_wavelengths: 0.5}
    scenario:  {num_users: 3, rate_threshold: 0.1, p_max_dbm: [30.0],
                noise_dbm: -80.0, distance_m: [5.0, 10.0], snr_db: [10.0],
                users: [], layers: [1, 2, 4], num_paths: 3}
    solver:    {pdmm: {...PdmmParams fields}, ipdd: {...IpddParams fields}}
    run:       {seed: 0, trials: 200, threads: 1, out: results.csv,
                codebook_dir: build/codebooks}

Omitted fields take the defaults below.  Unknown keys and out-of-range
values raise :class:`ConfigError` naming the offending path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .geometry import SPEED_OF_LIGHT, SimGeometry
from .srm import IpddParams
from .tscc import PdmmParams

CONFIG_VERSION = 1

EXPERIMENTS = (
    "codebook-convergence",
    "beam-pattern",
    "training-accuracy",
    "training-mse",
    "rate-vs-overhead",
    "multipath",
    "srm-convergence",
    "fairness",
    "sumrate-vs-layers",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryConfig:
    layers: int = 2
    n1: int = 16
    n2: int = 16
    frequency_hz: float = 30e9
    thickness_wavelengths: float = 5.0
    pitch_wavelengths: float = 0.5

    def build(self, num_antennas: int = 1, layers: int | None = None) -> SimGeometry:
        lam = SPEED_OF_LIGHT / self.frequency_hz
        return SimGeometry(
            self.layers if layers is None else layers, self.n1, self.n2, wavelength=lam,
            sim_thickness=self.thickness_wavelengths * lam,
            element_dx=self.pitch_wavelengths * lam, element_dy=self.pitch_wavelengths * lam,
            num_antennas=num_antennas,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    num_users: int = 3
    rate_threshold: float = 0.1
    p_max_dbm: tuple = (30.0,)
    noise_dbm: float = -80.0
    distance_m: tuple = (5.0, 10.0)
    snr_db: tuple = (10.0,)
    users: tuple = ()
    layers: tuple = (1, 2, 4)
    num_paths: int = 3


@dataclass(frozen=True)
class SolverConfig:
    pdmm: PdmmParams = field(default_factory=PdmmParams)
    ipdd: IpddParams = field(default_factory=IpddParams)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    trials: int = 200
    threads: int = 1
    out: str = "results.csv"
    codebook_dir: str = "build/codebooks"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "srm-convergence"
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        for block in ("scenario",):
            for k, v in d[block].items():
                if isinstance(v, tuple):
                    d[block][k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return {"version": CONFIG_VERSION, **d}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        """Short hash of the canonical form, stamped on every output row.

        ``run.threads`` and ``run.out`` do not change results and are left out.
        """
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("threads", "out")}
        text = json.dumps(d, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, seed=int(seed)))


PROFILES = {
    "small": {
        "geometry": {"layers": 2, "n1": 8, "n2": 8},
        "scenario": {"num_users": 3, "layers": [1, 2]},
        "run": {"trials": 200},
    },
    "paper-ish": {
        "geometry": {"layers": 4, "n1": 16, "n2": 16},
        "scenario": {"layers": [1, 2, 4]},
        "run": {"trials": 500},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if isinstance(default, (tuple, list)):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path}.{name}: expected a list")
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _positive(path, value, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0
    if integer:
        ok = ok and float(value).is_integer()
    if not ok:
        raise ConfigError(f"{path}: expected a positive {'integer' if integer else 'number'}, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown kind {cfg.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
    g = cfg.geometry
    for name in ("layers", "n1", "n2"):
        _positive(f"geometry.{name}", getattr(g, name), integer=True)
    for name in ("frequency_hz", "thickness_wavelengths", "pitch_wavelengths"):
        _positive(f"geometry.{name}", getattr(g, name))
    s = cfg.scenario
    _positive("scenario.num_users", s.num_users, integer=True)
    _positive("scenario.num_paths", s.num_paths, integer=True)
    if s.rate_threshold < 0:
        raise ConfigError(f"scenario.rate_threshold: must be >= 0, got {s.rate_threshold}")
    for name in ("p_max_dbm", "snr_db", "layers"):
        if len(getattr(s, name)) == 0:
            raise ConfigError(f"scenario.{name}: sweep must be nonempty")
    for i, layers in enumerate(s.layers):
        _positive(f"scenario.layers[{i}]", layers, integer=True)
    if len(s.distance_m) != 2 or not 0 < s.distance_m[0] <= s.distance_m[1]:
        raise ConfigError(f"scenario.distance_m: expected [min, max] with 0 < min <= max, got {list(s.distance_m)}")
    for i, u in enumerate(s.users):
        if len(u) != 2 or not all(-1 <= x <= 1 for x in u):
            raise ConfigError(f"scenario.users[{i}]: expected [vartheta, nu] in [-1, 1], got {u}")
    r = cfg.run
    if not isinstance(r.seed, int) or isinstance(r.seed, bool) or r.seed < 0:
        raise ConfigError(f"run.seed: expected a non-negative integer, got {r.seed!r}")
    _positive("run.trials", r.trials, integer=True)
    _positive("run.threads", r.threads, integer=True)
    return cfg


def from_dict(data: dict, profile: str | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    data = dict(data)
    version = data.pop("version", None)
    if version is None:
        raise ConfigError("version: missing (expected 1)")
    if version != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported value {version!r} (expected {CONFIG_VERSION})")
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"profile: unknown {profile!r}; expected one of {', '.join(PROFILES)}")
        data = _merge(PROFILES[profile], data)
    unknown = sorted(set(data) - {"experiment", "geometry", "scenario", "solver", "run"})
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    solver = data.get("solver") or {}
    if not isinstance(solver, dict):
        raise ConfigError("solver: expected a mapping")
    extra = sorted(set(solver) - {"pdmm", "ipdd"})
    if extra:
        raise ConfigError(f"solver: unknown key(s) {', '.join(extra)}")
    ipdd = dict(solver.get("ipdd") or {})
    if "pdmm" in ipdd:
        ipdd["pdmm"] = _build(PdmmParams, ipdd["pdmm"], "solver.ipdd.pdmm")
    cfg = ExperimentConfig(
        experiment=data.get("experiment", "srm-convergence"),
        geometry=_build(GeometryConfig, data.get("geometry"), "geometry"),
        scenario=_build(ScenarioConfig, data.get("scenario"), "scenario"),
        solver=SolverConfig(
            pdmm=_build(PdmmParams, solver.get("pdmm"), "solver.pdmm"),
            ipdd=_build(IpddParams, ipdd, "solver.ipdd"),
        ),
        run=_build(RunConfig, data.get("run"), "run"),
    )
    return validate(cfg)


def loads(text: str, profile: str | None = None) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML ({exc})") from exc
    return from_dict(data, profile)


def load_config(path, profile: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    return loads(path.read_text(), profile)
