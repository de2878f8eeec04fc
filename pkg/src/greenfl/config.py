"""Run, population and accounting configuration, loaded from TOML.

A run file looks like::

    [run]           # RunConfig fields
    [stopping]      # StoppingCriterion fields
    [population]    # PopulationSpec fields
    [task]          # kind = "synthetic" | "reference", plus task parameters
    [accounting]    # data files and server/network settings

Relative paths inside a file resolve against the file's directory.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .fl_core import STALENESS_SCHEMES, WEIGHTINGS, ClientTrainConfig, StoppingCriterion

MODES = ("sync", "async")
EVAL_CADENCES = ("steps", "seconds")

# value grid of the hyperparameter study
STUDY_GRID: dict[str, tuple] = {
    "server_lr": (0.0001, 0.001, 0.005, 0.01, 0.1, 1.0),
    "client_lr": (0.0001, 0.001, 0.01, 0.1, 0.5, 1.0),
    "local_epochs": (1, 3, 5, 10, 15, 20),
    "batch_size": (8, 16, 32),
    "beta1": (0.1, 0.5, 0.7, 0.9),
    "beta2": (0.9, 0.99, 0.999),
    "concurrency": (50, 100, 200, 300, 800, 1000, 1300, 1500),
    "aggregation_goal_pct": (8, 10, 25, 50, 65, 77, 80, 85, 100),
}


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None


_COERCE = {
    "concurrency": int,
    "aggregation_goal_pct": float,
    "server_lr": float,
    "client_lr": float,
    "local_epochs": int,
    "batch_size": int,
    "beta1": float,
    "beta2": float,
    "model_size_bytes": int,
    "round_timeout_s": float,
    "eval_period": float,
    "seed": int,
}


@dataclass(frozen=True)
class RunConfig:
    mode: str = "sync"
    concurrency: int = 100
    aggregation_goal_pct: float = 100.0
    server_lr: float = 0.01
    client_lr: float = 0.1
    local_epochs: int = 1
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.99
    model_size_bytes: int = 20_000_000
    round_timeout_s: float = 3600.0
    eval_period: float = 20
    eval_cadence: str = "steps"
    staleness: str = "polynomial"
    weighting: str = "uniform"
    seed: int = 0
    stopping: StoppingCriterion = field(default_factory=StoppingCriterion)

    def __post_init__(self):
        # TOML gives 80 and 80.0 different types; normalise so rows and hashes agree
        for name, kind in _COERCE.items():
            try:
                value = kind(getattr(self, name))
            except (TypeError, ValueError):
                raise ConfigError(f"run.{name}", f"expected {kind.__name__}") from None
            if kind is int and value != getattr(self, name):
                raise ConfigError(f"run.{name}", "expected an integer")
            object.__setattr__(self, name, value)
        checks = [
            ("mode", self.mode in MODES, f"must be one of {MODES}"),
            ("concurrency", self.concurrency >= 1, "must be >= 1"),
            ("aggregation_goal_pct", 0 < self.aggregation_goal_pct <= 100, "must lie in (0, 100]"),
            ("server_lr", self.server_lr > 0, "must be > 0"),
            ("client_lr", self.client_lr >= 0, "must be >= 0"),
            ("local_epochs", self.local_epochs >= 1, "must be >= 1"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("beta1", 0 <= self.beta1 < 1, "must lie in [0, 1)"),
            ("beta2", 0 <= self.beta2 < 1, "must lie in [0, 1)"),
            ("model_size_bytes", self.model_size_bytes > 0, "must be > 0"),
            ("round_timeout_s", self.round_timeout_s > 0, "must be > 0"),
            ("eval_period", self.eval_period > 0, "must be > 0"),
            ("eval_cadence", self.eval_cadence in EVAL_CADENCES, f"must be one of {EVAL_CADENCES}"),
            ("staleness", self.staleness in STALENESS_SCHEMES, f"must be one of {STALENESS_SCHEMES}"),
            ("weighting", self.weighting in WEIGHTINGS, f"must be one of {WEIGHTINGS}"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"run.{key}", msg)

    @property
    def goal_count(self) -> int:
        """Responses needed per server step: ceil(concurrency * pct / 100)."""
        return max(1, math.ceil(self.concurrency * Fraction(str(self.aggregation_goal_pct)) / 100))

    @property
    def client_cfg(self) -> ClientTrainConfig:
        return ClientTrainConfig(self.client_lr, self.local_epochs, self.batch_size)

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def as_row(self) -> dict:
        return {
            "mode": self.mode,
            "concurrency": self.concurrency,
            "aggregation_goal_pct": self.aggregation_goal_pct,
            "server_lr": self.server_lr,
            "client_lr": self.client_lr,
            "local_epochs": self.local_epochs,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class LogNormal:
    median: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.median > 0 or self.sigma < 0:
            raise ValueError("log-normal needs median > 0 and sigma >= 0")


@dataclass(frozen=True)
class PopulationSpec:
    num_devices: int = 2000
    countries: dict = field(default_factory=lambda: {"US": 1.0})
    device_models: dict = field(default_factory=lambda: {"generic": 1.0})
    bandwidth_down_bps: LogNormal = LogNormal(20e6, 0.6)
    bandwidth_up_bps: LogNormal = LogNormal(8e6, 0.6)
    throughput_samples_per_s: LogNormal = LogNormal(0.5, 0.5)
    samples_mean: float = 34.0
    samples_max: int = 1000
    samples_min: int = 1
    dropout_prob: float = 0.0
    dropout_beta: tuple | None = None
    seed: int = 0


def _build(cls, raw: dict, where: str, converters: dict | None = None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}", "unknown key")
    kw = dict(raw)
    for key, conv in (converters or {}).items():
        if key in kw:
            try:
                kw[key] = conv(kw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}.{key}", str(exc)) from None
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None


def _lognormal(v):
    if isinstance(v, dict):
        return LogNormal(float(v["median"]), float(v.get("sigma", 0.0)))
    return LogNormal(float(v), 0.0)


def parse_run_config(raw: dict, stopping_raw: dict | None = None) -> RunConfig:
    stopping = _build(StoppingCriterion, stopping_raw or {}, "stopping")
    return _build(RunConfig, {**raw, "stopping": stopping}, "run")


def parse_population(raw: dict) -> PopulationSpec:
    conv = {
        "bandwidth_down_bps": _lognormal,
        "bandwidth_up_bps": _lognormal,
        "throughput_samples_per_s": _lognormal,
        "dropout_beta": lambda v: tuple(float(x) for x in v),
    }
    return _build(PopulationSpec, raw, "population", conv)


def parse_task(raw: dict):
    from .tasks import ReferenceSoftmaxLM, SyntheticTask

    raw = dict(raw)
    kind = raw.pop("kind", "synthetic")
    if kind == "synthetic":
        return _build(SyntheticTask, raw, "task")
    if kind == "reference":
        return _build(ReferenceSoftmaxLM, raw, "task")
    raise ConfigError("task.kind", "must be 'synthetic' or 'reference'")


@dataclass
class LoadedConfig:
    run: RunConfig
    population: PopulationSpec
    task: Any
    accounting: Any
    source: Path | None = None


SECTIONS = ("run", "stopping", "population", "task", "accounting")


def load_run_dict(raw: dict, base: str | Path = ".", seed: int | None = None, source: Path | None = None) -> LoadedConfig:
    """Build a run from an already-parsed run document; relative paths resolve against ``base``."""
    from .sim.accounting import load_accounting

    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    run = parse_run_config(raw.get("run", {}), raw.get("stopping"))
    if seed is not None:
        run = run.with_overrides(seed=seed)
    return LoadedConfig(
        run=run,
        population=parse_population(raw.get("population", {})),
        task=parse_task(raw.get("task", {})),
        accounting=load_accounting(raw.get("accounting", {}), base=base),
        source=source,
    )


def load_run_file(path: str | Path, seed: int | None = None) -> LoadedConfig:
    path = Path(path)
    return load_run_dict(load_toml(path), path.parent, seed, source=path)
