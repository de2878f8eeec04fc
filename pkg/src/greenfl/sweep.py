"""Grid sweeps over run hyperparameters, executed on a process pool.

A sweep file is TOML::

    [sweep]
    base = "run_sync.toml"      # or put [run]/[population]/... sections inline
    seeds = [0, 1, 2]           # or: replications = 3, seed_start = 0
    out = "results.csv"

    [grid]
    concurrency = [50, 100, 200]
    server_lr = "study"        # the study's value list for this key

Runs are independent; rows are sorted canonically before writing, so the
output bytes do not depend on the worker count or completion order.
"""
from __future__ import annotations

import itertools
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .config import SECTIONS, STUDY_GRID, LoadedConfig, RunConfig, load_run_dict, load_toml
from .errors import ConfigError, GreenFLError
from .results import result_row, run_id, session_rows
from .sim import generate_population, run

GRID_KEYS = tuple(f.name for f in fields(RunConfig) if f.name not in ("seed", "stopping"))


@dataclass
class SweepSpec:
    base: dict
    base_dir: Path
    grid: dict[str, tuple]
    seeds: tuple[int, ...] = (0,)
    out: Path | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("sweep.seeds", "at least one seed is required")
        for key, values in self.grid.items():
            if key not in GRID_KEYS:
                raise ConfigError(f"grid.{key}", "not a run hyperparameter")
            if not values:
                raise ConfigError(f"grid.{key}", "empty value list")
        base_run = load_run_dict(self.base, self.base_dir).run
        for key, values in self.grid.items():
            for v in values:
                try:
                    base_run.with_overrides(**{key: v})
                except ConfigError as exc:
                    raise ConfigError(f"grid.{key}", f"value {v!r}: {exc.message}") from None

    def combinations(self) -> list[tuple[tuple[str, object], ...]]:
        keys = list(self.grid)
        return [tuple(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]

    def jobs(self) -> list[tuple]:
        doc = json.dumps(self.base, sort_keys=True)
        return [(doc, str(self.base_dir), combo, seed) for combo in self.combinations() for seed in self.seeds]


def load_sweep(path: str | Path) -> SweepSpec:
    path = Path(path)
    raw = load_toml(path)
    unknown = sorted(set(raw) - {"sweep", "grid", *SECTIONS})
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    sw = dict(raw.get("sweep", {}))
    extra = sorted(set(sw) - {"base", "seeds", "replications", "seed_start", "out"})
    if extra:
        raise ConfigError(f"sweep.{extra[0]}", "unknown key")
    if "base" in sw:
        base_path = path.parent / sw["base"]
        base, base_dir = load_toml(base_path), base_path.parent
        if any(s in raw for s in SECTIONS):
            raise ConfigError("sweep.base", "give either a base file or inline sections, not both")
    else:
        base, base_dir = {k: raw[k] for k in SECTIONS if k in raw}, path.parent
    if "seeds" in sw:
        seeds = tuple(int(s) for s in sw["seeds"])
    else:
        start = int(sw.get("seed_start", 0))
        seeds = tuple(range(start, start + int(sw.get("replications", 1))))
    grid = {}
    for key, values in raw.get("grid", {}).items():
        if values == "study":
            if key not in STUDY_GRID:
                raise ConfigError(f"grid.{key}", "no study value list for this key")
            values = STUDY_GRID[key]
        if not isinstance(values, (list, tuple)):
            values = [values]
        grid[key] = tuple(values)
    out = path.parent / sw["out"] if "out" in sw else None
    return SweepSpec(base=base, base_dir=base_dir, grid=grid, seeds=seeds, out=out)


# per-process cache of prepared bases: loading data files and building the
# population is the expensive part and is identical for every job
_PREPARED: dict = {}


def _prepare(doc: str, base_dir: str):
    key = (doc, base_dir)
    if key not in _PREPARED:
        loaded = load_run_dict(json.loads(doc), base_dir)
        _PREPARED.clear()
        _PREPARED[key] = (loaded, generate_population(loaded.population))
    return _PREPARED[key]


def execute(loaded: LoadedConfig, population=None, overrides=(), seed: int | None = None, **run_kw):
    """Run one configuration; returns ``(RunResult, run_id)``."""
    cfg = loaded.run.with_overrides(**dict(overrides))
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    if population is None:
        population = generate_population(loaded.population)
    result = run(cfg, population, loaded.task, loaded.accounting, **run_kw)
    return result, run_id(cfg, loaded.population, loaded.task)


def _run_job(job) -> tuple[str, object]:
    doc, base_dir, combo, seed = job
    try:
        loaded, population = _prepare(doc, base_dir)
        result, rid = execute(loaded, population, combo, seed)
        return "ok", result_row(result, rid)
    except GreenFLError as exc:
        return "error", (dict(combo), seed, f"{type(exc).__name__}: {exc}")
    except Exception:
        return "error", (dict(combo), seed, traceback.format_exc(limit=3))


@dataclass
class SweepOutcome:
    rows: list[dict] = field(default_factory=list)
    failures: list[tuple[dict, int, str]] = field(default_factory=list)


def run_sweep(spec: SweepSpec, parallelism: int = 1) -> SweepOutcome:
    jobs = spec.jobs()
    if parallelism <= 1:
        outcomes = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(parallelism, len(jobs)) or 1) as pool:
            outcomes = list(pool.map(_run_job, jobs, chunksize=1))
    res = SweepOutcome()
    for status, payload in outcomes:
        (res.rows if status == "ok" else res.failures).append(payload)
    return res


def default_workers() -> int:
    return os.cpu_count() or 1


__all__ = ["SweepSpec", "SweepOutcome", "load_sweep", "run_sweep", "execute", "session_rows", "default_workers"]
