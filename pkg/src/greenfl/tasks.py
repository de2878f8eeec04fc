"""Training tasks the simulator can drive.

``ReferenceSoftmaxLM`` is a real (small) next-token language model trained
with SGD and FedAdam. ``SyntheticTask`` replaces learning with a parametric
perplexity curve so that large systems-level sweeps stay cheap; it must not
be used to check optimizer behaviour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .fl_core import ClientTrainConfig, ClientUpdate, FedAdamServer, ModelParams, evaluate_heldout

TRAIN_DOMAIN = 0
HELDOUT_DOMAIN = 1


@dataclass(frozen=True)
class TokenPairs:
    """A client's (previous token, next token) training pairs."""

    prev: np.ndarray
    nxt: np.ndarray

    def __len__(self) -> int:
        return len(self.prev)


@dataclass
class ReferenceSoftmaxLM:
    """Bigram softmax language model over a ``vocab``-token alphabet.

    Each client draws a token chain from a shared sparse transition matrix
    reweighted by its own unigram preferences, which gives non-IID clients.
    """

    vocab: int = 32
    seed: int = 0
    transition_concentration: float = 0.1
    skew_concentration: float = 0.5
    skew_strength: float = 1.0
    heldout_clients: int = 20
    heldout_samples: int = 34
    backend: str | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 7919])
        self.transitions = rng.dirichlet(np.full(self.vocab, self.transition_concentration), size=self.vocab)
        self.heldout = [
            self._generate(HELDOUT_DOMAIN, k, self.heldout_samples) for k in range(self.heldout_clients)
        ]

    @property
    def dim(self) -> int:
        return self.vocab * self.vocab + self.vocab

    def init_model(self) -> ModelParams:
        return ModelParams(np.zeros(self.dim), 0)

    def _generate(self, domain: int, data_seed: int, n: int) -> TokenPairs:
        rng = np.random.default_rng([self.seed, domain, data_seed])
        pref = rng.dirichlet(np.full(self.vocab, self.skew_concentration))
        rows = self.transitions * pref**self.skew_strength
        rows /= rows.sum(axis=1, keepdims=True)
        cum = np.cumsum(rows, axis=1)
        draws = rng.random(n + 1)
        tokens = np.empty(n + 1, dtype=np.int64)
        tokens[0] = min(np.searchsorted(np.cumsum(pref), draws[0]), self.vocab - 1)
        for k in range(1, n + 1):
            tokens[k] = min(np.searchsorted(cum[tokens[k - 1]], draws[k]), self.vocab - 1)
        return TokenPairs(tokens[:-1].copy(), tokens[1:].copy())

    def client_data(self, data_seed: int, num_samples: int) -> TokenPairs:
        key = (data_seed, num_samples)
        if key not in self._cache:
            self._cache[key] = self._generate(TRAIN_DOMAIN, data_seed, num_samples)
        return self._cache[key]

    def train(self, vector, data: TokenPairs, cfg: ClientTrainConfig, rng) -> np.ndarray:
        n = len(data)
        order = np.concatenate([rng.permutation(n) for _ in range(cfg.local_epochs)])
        return kernels.local_sgd(
            np.array(vector), data.prev, data.nxt, order, self.vocab, cfg.client_lr, cfg.batch_size, cfg.local_epochs,
            backend=self.backend,
        )

    def loss_and_grad(self, vector, data: TokenPairs):
        return kernels.loss_and_grad(np.asarray(vector, dtype=np.float64), data.prev, data.nxt, self.vocab)

    def log_probs(self, vector, data: TokenPairs) -> np.ndarray:
        return kernels.token_log_probs(vector, data.prev, data.nxt, self.vocab, backend=self.backend)

    def make_server(self, run_cfg) -> FedAdamServer:
        return FedAdamServer(
            self.dim,
            server_lr=run_cfg.server_lr,
            beta1=run_cfg.beta1,
            beta2=run_cfg.beta2,
            scheme=run_cfg.staleness,
            weighting=run_cfg.weighting,
        )

    def evaluate(self, model: ModelParams, eval_index: int) -> float:
        return evaluate_heldout(self, model, self.heldout)

    def for_run(self, run_seed: int) -> "ReferenceSoftmaxLM":
        return self


@dataclass(frozen=True)
class SyntheticSamples:
    n: int

    def __len__(self) -> int:
        return self.n


@dataclass
class SyntheticTask:
    """Parametric perplexity curve driven by server steps.

    The model vector holds ``[progress, staleness_sum, aggregated_count]``.
    Each server step aggregating ``K`` updates adds
    ``quality * min(K, knee) / (min(K, knee) + k_half)`` to progress, so
    bigger buffers help with diminishing returns and stop helping past
    ``knee_updates``. Perplexity is

        ppl_min + (ppl_initial - ppl_min) * exp(-progress / tau_steps) * (1 + staleness_coef * mean_staleness)

    times log-normal evaluation noise seeded by (seed, eval index).
    """

    ppl_initial: float = 1000.0
    ppl_min: float = 100.0
    tau_steps: float = 15.0
    k_half: float = 100.0
    knee_updates: float = 800.0
    staleness_coef: float = 0.1
    noise_sigma: float = 0.03
    best_server_lr: float = 0.01
    best_client_lr: float = 0.1
    lr_width_decades: float = 1.5
    epoch_gain: float = 0.15
    seed: int = 0
    dim: int = 3

    def init_model(self) -> ModelParams:
        return ModelParams(np.zeros(3), 0)

    def client_data(self, data_seed: int, num_samples: int) -> SyntheticSamples:
        return SyntheticSamples(num_samples)

    def train(self, vector, data, cfg, rng) -> np.ndarray:
        return np.array(vector)

    def quality(self, run_cfg) -> float:
        ds = math.log10(run_cfg.server_lr / self.best_server_lr)
        dc = math.log10(run_cfg.client_lr / self.best_client_lr)
        lr_q = math.exp(-(ds * ds + dc * dc) / (2 * self.lr_width_decades**2))
        return lr_q * (1.0 + self.epoch_gain * math.log(run_cfg.local_epochs))

    def make_server(self, run_cfg) -> "SyntheticServer":
        return SyntheticServer(self, self.quality(run_cfg))

    def true_perplexity(self, model: ModelParams) -> float:
        progress, stale_sum, count = model.vector
        mean_stale = stale_sum / count if count else 0.0
        gap = (self.ppl_initial - self.ppl_min) * math.exp(-progress / self.tau_steps)
        return self.ppl_min + gap * (1.0 + self.staleness_coef * mean_stale)

    def evaluate(self, model: ModelParams, eval_index: int) -> float:
        z = np.random.default_rng([self.seed, 104729, eval_index]).standard_normal()
        return self.true_perplexity(model) * math.exp(self.noise_sigma * z)

    def for_run(self, run_seed: int) -> "SyntheticTask":
        return replace(self, seed=self.seed * 1_000_003 + run_seed)


@dataclass
class SyntheticServer:
    task: SyntheticTask
    quality: float

    def step(self, model: ModelParams, updates: Sequence[ClientUpdate]) -> ModelParams:
        k = min(len(updates), self.task.knee_updates)
        gain = self.quality * k / (k + self.task.k_half)
        stale = sum(model.version - u.assigned_version for u in updates)
        progress, stale_sum, count = model.vector
        return ModelParams(np.array([progress + gain, stale_sum + stale, count + len(updates)]), model.version + 1)
