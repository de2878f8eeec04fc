"""Client SGD, buffered aggregation, server Adam, perplexity and the stopping rule."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .errors import EmptyBuffer, EmptyClientData, EmptyHeldout, ZeroProbability

STALENESS_SCHEMES = ("none", "polynomial")
WEIGHTINGS = ("uniform", "samples")


@dataclass(frozen=True)
class ModelParams:
    vector: np.ndarray
    version: int = 0

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        if self.version < 0:
            raise ValueError("version must be >= 0")
        if not np.all(np.isfinite(vec)):
            raise ValueError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class ClientUpdate:
    delta: np.ndarray
    num_samples: int
    assigned_version: int

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


@dataclass(frozen=True)
class ClientTrainConfig:
    client_lr: float
    local_epochs: int = 1
    batch_size: int = 8

    def __post_init__(self):
        if self.client_lr < 0:
            raise ValueError("client_lr must be >= 0")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be >= 1")


@dataclass
class ServerOptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    server_lr: float = 0.01
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, dim: int, **kw) -> "ServerOptimizerState":
        return cls(np.zeros(dim), np.zeros(dim), **kw)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


class TrainingTask(Protocol):
    """What the simulator needs from a learning task."""

    dim: int

    def init_model(self) -> ModelParams: ...

    def client_data(self, data_seed: int, num_samples: int) -> Any: ...

    def train(self, vector: np.ndarray, data: Any, cfg: ClientTrainConfig, rng: np.random.Generator) -> np.ndarray: ...

    def make_server(self, run_cfg: Any) -> "ServerUpdater": ...

    def evaluate(self, model: ModelParams, eval_index: int) -> float: ...


class ServerUpdater(Protocol):
    def step(self, model: ModelParams, updates: Sequence[ClientUpdate]) -> ModelParams: ...


def client_local_train(
    task: TrainingTask,
    start: ModelParams,
    client_data: Any,
    cfg: ClientTrainConfig,
    rng: np.random.Generator | None = None,
) -> ClientUpdate:
    """Plain mini-batch SGD (no momentum) from ``start``; returns the model delta."""
    n = len(client_data)
    if n == 0:
        raise EmptyClientData("client has no training samples")
    rng = rng if rng is not None else np.random.default_rng(0)
    final = task.train(np.array(start.vector), client_data, cfg, rng)
    return ClientUpdate(delta=final - start.vector, num_samples=n, assigned_version=start.version)


def staleness_weight(s: int, scheme: str = "polynomial") -> float:
    if s < 0:
        raise ValueError("staleness must be >= 0")
    if scheme == "none":
        return 1.0
    if scheme == "polynomial":
        return 1.0 / math.sqrt(1.0 + s)
    raise ValueError(f"unknown staleness scheme {scheme!r}")


def aggregate_updates(
    updates: Sequence[ClientUpdate],
    current_version: int,
    scheme: str = "polynomial",
    weighting: str = "uniform",
) -> np.ndarray:
    """Staleness-weighted mean delta, negated into a pseudo-gradient for the server."""
    if not updates:
        raise EmptyBuffer("no client updates to aggregate")
    dim = updates[0].delta.shape[0]
    acc = np.zeros(dim)
    total_w = 0.0
    for u in updates:
        if u.delta.shape[0] != dim:
            raise ValueError("update dimensions disagree")
        w = staleness_weight(current_version - u.assigned_version, scheme)
        if weighting == "samples":
            w *= u.num_samples
        elif weighting != "uniform":
            raise ValueError(f"unknown weighting {weighting!r}")
        acc += w * u.delta
        total_w += w
    return -(acc / total_w)


def server_adam_step(state: ServerOptimizerState, g: np.ndarray, model: ModelParams) -> ModelParams:
    """One bias-corrected Adam step on the pseudo-gradient; mutates ``state``."""
    if g.shape != model.vector.shape or state.m.shape != g.shape:
        raise ValueError("dimension mismatch between gradient, state and model")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    new = model.vector - state.server_lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return ModelParams(new, model.version + 1)


class FedAdamServer:
    """Aggregates a buffer of updates and applies server Adam."""

    def __init__(self, dim, server_lr, beta1, beta2, epsilon=1e-8, scheme="polynomial", weighting="uniform"):
        self.state = ServerOptimizerState.fresh(dim, beta1=beta1, beta2=beta2, server_lr=server_lr, epsilon=epsilon)
        self.scheme = scheme
        self.weighting = weighting

    def step(self, model: ModelParams, updates: Sequence[ClientUpdate]) -> ModelParams:
        g = aggregate_updates(updates, model.version, self.scheme, self.weighting)
        return server_adam_step(self.state, g, model)


def perplexity_from_log_probs(log_probs) -> float:
    log_probs = [float(x) for x in log_probs]
    if not log_probs:
        raise ValueError("perplexity needs at least one predicted token")
    if any(x == -math.inf for x in log_probs):
        raise ZeroProbability("a token has probability 0")
    n = len(log_probs)
    mean = math.fsum(log_probs) / n
    # one correction pass so n equal values give back exactly that value
    mean += math.fsum(x - mean for x in log_probs) / n
    return math.exp(-mean)


def perplexity(token_probs) -> float:
    """exp of the mean negative log-probability over the predicted tokens."""
    probs = [float(p) for p in token_probs]
    for p in probs:
        if p <= 0:
            raise ZeroProbability(f"token probability {p} is not positive")
        if p > 1:
            raise ValueError(f"token probability {p} exceeds 1")
    return perplexity_from_log_probs(math.log(p) for p in probs)


def evaluate_heldout(task, model: ModelParams, heldout_clients: Sequence | None = None) -> float:
    """Perplexity over the concatenated tokens of the held-out clients."""
    if heldout_clients is None:
        heldout_clients = task.heldout
    if len(heldout_clients) == 0:
        raise EmptyHeldout("no held-out clients")
    log_probs = np.concatenate([task.log_probs(model.vector, data) for data in heldout_clients])
    return perplexity_from_log_probs(log_probs)


class Decision(str, enum.Enum):
    CONTINUE = "continue"
    TARGET_REACHED = "target_reached"
    TIME_LIMIT = "time_limit"


@dataclass
class StoppingCriterion:
    target_perplexity: float = 175.0
    patience: int = 5
    ewma_alpha: float = 0.3
    max_wall_seconds: float = 172_800.0
    smoothed: float | None = field(default=None, compare=False)
    hits: int = field(default=0, compare=False)

    def __post_init__(self):
        if not 0 < self.ewma_alpha <= 1:
            raise ValueError("ewma_alpha must lie in (0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def fresh(self) -> "StoppingCriterion":
        return StoppingCriterion(self.target_perplexity, self.patience, self.ewma_alpha, self.max_wall_seconds)

    def update(self, raw_ppl: float, wall_seconds: float) -> Decision:
        if wall_seconds >= self.max_wall_seconds:
            return Decision.TIME_LIMIT
        if not raw_ppl > 0:
            raise ValueError("perplexity must be > 0")
        if self.smoothed is None:
            self.smoothed = raw_ppl
        else:
            self.smoothed = self.ewma_alpha * raw_ppl + (1.0 - self.ewma_alpha) * self.smoothed
        self.hits = self.hits + 1 if self.smoothed <= self.target_perplexity else 0
        return Decision.TARGET_REACHED if self.hits >= self.patience else Decision.CONTINUE


def stopping_update(c: StoppingCriterion, raw_ppl: float, wall_seconds: float) -> Decision:
    return c.update(raw_ppl, wall_seconds)
