"""Discrete-event execution of synchronous and asynchronous FL.

One binary heap keyed by ``(sim_time, sequence_number)`` drives both
protocols, so simultaneous events always resolve in scheduling order and a
run is a pure function of its inputs.
"""
from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..carbon import EmissionsReport
from ..energy import EnergyBreakdown, SessionTiming
from ..errors import InsufficientPopulation
from ..fl_core import ClientUpdate, Decision, ModelParams, client_local_train
from ..config import RunConfig
from .accounting import Accounting, account
from .population import ClientDevice, simulate_session, truncate_timing

OUTCOMES = ("completed", "dropped", "discarded_late", "discarded_stale_round")

# event kinds; the numeric value never orders events, only (time, seq) does
_END, _DISPATCH, _TIMEOUT, _EVAL, _DEADLINE = range(5)


@dataclass
class SessionRecord:
    session_id: int
    client_id: int
    device_model_key: str
    country_code: str
    assigned_version: int
    start_s: float
    end_s: float
    timing: SessionTiming
    outcome: str = "completed"
    round_index: int | None = None
    energy: EnergyBreakdown | None = None

    @property
    def completed(self) -> bool:
        return self.timing.completed


@dataclass
class EvalPoint:
    time_s: float
    server_steps: int
    raw: float
    smoothed: float


@dataclass
class RunResult:
    config: RunConfig
    rounds: int
    server_steps: int
    wall_seconds: float
    stop_reason: str
    trajectory: list[EvalPoint]
    records: list[SessionRecord]
    aggregated_staleness: list[tuple[int, ...]] = field(default_factory=list)
    model_versions: list[ModelParams] = field(default_factory=list)
    inflight_trace: list[tuple[float, int]] = field(default_factory=list)
    energy: EnergyBreakdown | None = None
    emissions: EmissionsReport | None = None

    @property
    def hours(self) -> float:
        return self.wall_seconds / 3600.0

    @property
    def final_perplexity(self) -> float:
        return self.trajectory[-1].smoothed if self.trajectory else math.nan

    @property
    def x_rounds(self) -> float:
        """Rounds for sync runs (all started rounds), server steps for async."""
        return self.rounds if self.config.mode == "sync" else self.server_steps


class EventQueue:
    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, time: float, kind: int, payload: Any = None) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def pop(self):
        time, _, kind, payload = heapq.heappop(self._heap)
        return time, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class _Live:
    record: SessionRecord
    device: ClientDevice
    model: ModelParams


class _Engine:
    def __init__(self, cfg: RunConfig, population: Sequence[ClientDevice], task, keep_models=False, trace=False):
        if len(population) < cfg.concurrency:
            raise InsufficientPopulation(
                f"population of {len(population)} cannot sustain concurrency {cfg.concurrency}"
            )
        self.cfg = cfg
        self.population = population
        self.task = task.for_run(cfg.seed)
        self.server = self.task.make_server(cfg)
        self.model = self.task.init_model()
        self.stopping = cfg.stopping.fresh()
        self.rng = np.random.default_rng([cfg.seed, 1])
        self.q = EventQueue()
        self.idle = list(range(len(population)))
        self.live: dict[int, _Live] = {}
        self.records: list[SessionRecord] = []
        self.trajectory: list[EvalPoint] = []
        self.staleness: list[tuple[int, ...]] = []
        self.models = [self.model] if keep_models else None
        self.trace = [] if trace else None
        self.now = 0.0
        self.rounds = 0
        self.steps = 0
        self.evals = 0
        self.stop_reason: str | None = None

    # -- devices and sessions

    def dispatch(self, round_index=None) -> None:
        dev = self.population[self.idle.pop(int(self.rng.integers(len(self.idle))))]
        timing = simulate_session(dev, self.cfg.model_size_bytes, self.cfg, self.rng)
        sid = len(self.records)
        rec = SessionRecord(
            session_id=sid,
            client_id=dev.id,
            device_model_key=dev.device_model_key,
            country_code=dev.country_code,
            assigned_version=self.model.version,
            start_s=self.now,
            end_s=self.now + timing.duration_s,
            timing=timing,
            outcome="completed" if timing.completed else "dropped",
            round_index=round_index,
        )
        self.records.append(rec)
        self.live[sid] = _Live(rec, dev, self.model)
        self.q.push(rec.end_s, _END, sid)

    def finish(self, sid: int) -> _Live:
        live = self.live.pop(sid)
        bisect.insort(self.idle, live.device.id)
        return live

    def train(self, live: _Live) -> ClientUpdate:
        data = self.task.client_data(live.device.data_seed, live.device.num_samples)
        rng = np.random.default_rng([self.cfg.seed, 2, live.record.session_id])
        return client_local_train(self.task, live.model, data, self.cfg.client_cfg, rng)

    # -- server

    def server_step(self, updates: list[ClientUpdate]) -> None:
        self.staleness.append(tuple(self.model.version - u.assigned_version for u in updates))
        self.model = self.server.step(self.model, updates)
        self.steps += 1
        if self.models is not None:
            self.models.append(self.model)

    def evaluate(self) -> None:
        raw = self.task.evaluate(self.model, self.evals)
        self.evals += 1
        decision = self.stopping.update(raw, self.now)
        if decision is Decision.TIME_LIMIT:
            self.stop_reason = decision.value
            return
        self.trajectory.append(EvalPoint(self.now, self.steps, raw, self.stopping.smoothed))
        if decision is Decision.TARGET_REACHED:
            self.stop_reason = decision.value

    # -- main loop

    def run(self) -> RunResult:
        deadline = self.cfg.stopping.max_wall_seconds
        self.q.push(deadline, _DEADLINE)
        self.start()
        while self.stop_reason is None:
            self.now, kind, payload = self.q.pop()
            if kind == _DEADLINE:
                self.stop_reason = Decision.TIME_LIMIT.value
                break
            self.handle(kind, payload)
            if self.trace is not None:
                self.trace.append((self.now, len(self.live)))
        self.drain()
        return RunResult(
            config=self.cfg,
            rounds=self.rounds,
            server_steps=self.steps,
            wall_seconds=self.now,
            stop_reason=self.stop_reason,
            trajectory=self.trajectory,
            records=self.records,
            aggregated_staleness=self.staleness,
            model_versions=self.models or [],
            inflight_trace=self.trace or [],
        )

    def drain(self) -> None:
        # sessions still running when the task stops are cut at the stop time
        for sid in sorted(self.live):
            rec = self.live[sid].record
            rec.timing = truncate_timing(rec.timing, self.now - rec.start_s)
            rec.end_s = self.now
            if rec.outcome == "completed":
                rec.outcome = "discarded_late"
        self.live.clear()


class _SyncEngine(_Engine):
    """Rounds of ``concurrency`` clients; the round closes at the aggregation goal."""

    def start(self) -> None:
        self.responses: list[ClientUpdate] = []
        self.round_sessions: list[SessionRecord] = []
        self.round_state: dict[int, str] = {}
        self.start_round()

    def start_round(self) -> None:
        self.rounds += 1
        r = self.rounds
        self.round_state[r] = "open"
        self.responses, self.round_sessions = [], []
        for _ in range(min(self.cfg.concurrency, len(self.idle))):
            self.dispatch(round_index=r)
        self.q.push(self.now + self.cfg.round_timeout_s, _TIMEOUT, r)

    def handle(self, kind, payload) -> None:
        if kind == _END:
            live = self.finish(payload)
            rec = live.record
            if not rec.completed:
                return
            state = self.round_state[rec.round_index]
            if state == "closed":
                rec.outcome = "discarded_late"
            elif state == "aborted":
                rec.outcome = "discarded_stale_round"
            else:
                self.responses.append(self.train(live))
                self.round_sessions.append(rec)
                if len(self.responses) >= self.cfg.goal_count:
                    self.round_state[rec.round_index] = "closed"
                    self.server_step(self.responses)
                    self.evaluate()
                    if self.stop_reason is None:
                        self.start_round()
        elif kind == _TIMEOUT:
            if self.round_state[payload] == "open":
                self.round_state[payload] = "aborted"
                for rec in self.round_sessions:
                    rec.outcome = "discarded_stale_round"
                self.start_round()


class _AsyncEngine(_Engine):
    """``concurrency`` sessions always in flight; a buffer of ``goal`` updates triggers a server step."""

    def start(self) -> None:
        self.buffer: list[ClientUpdate] = []
        for _ in range(self.cfg.concurrency):
            self.q.push(0.0, _DISPATCH)
        if self.cfg.eval_cadence == "seconds":
            self.q.push(float(self.cfg.eval_period), _EVAL)

    def handle(self, kind, payload) -> None:
        if kind == _DISPATCH:
            self.dispatch()
        elif kind == _END:
            live = self.finish(payload)
            # replacement is its own event at the same instant, so every
            # completion already queued for this instant is handled first
            self.q.push(self.now, _DISPATCH)
            if not live.record.completed:
                return
            self.buffer.append(self.train(live))
            if len(self.buffer) >= self.cfg.goal_count:
                self.server_step(self.buffer)
                self.buffer = []
                if self.cfg.eval_cadence == "steps" and self.steps % int(self.cfg.eval_period) == 0:
                    self.evaluate()
        elif kind == _EVAL:
            if self.steps > 0:
                self.evaluate()
            self.q.push(self.now + float(self.cfg.eval_period), _EVAL)


def _finish(result: RunResult, accounting: Accounting | None) -> RunResult:
    if accounting is not None:
        result.energy, result.emissions = account(result.records, result.wall_seconds, accounting)
    return result


def run_sync(cfg: RunConfig, population, task, accounting: Accounting | None = None, *, keep_models=False, trace=False) -> RunResult:
    if cfg.mode != "sync":
        cfg = cfg.with_overrides(mode="sync")
    return _finish(_SyncEngine(cfg, population, task, keep_models, trace).run(), accounting)


def run_async(cfg: RunConfig, population, task, accounting: Accounting | None = None, *, keep_models=False, trace=False) -> RunResult:
    if cfg.mode != "async":
        cfg = cfg.with_overrides(mode="async")
    return _finish(_AsyncEngine(cfg, population, task, keep_models, trace).run(), accounting)


def run(cfg: RunConfig, population, task, accounting: Accounting | None = None, **kw) -> RunResult:
    return (run_sync if cfg.mode == "sync" else run_async)(cfg, population, task, accounting, **kw)
