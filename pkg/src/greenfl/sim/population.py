"""Synthetic device populations and per-session timing."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from ..config import PopulationSpec
from ..energy import SessionTiming
from ..errors import InvalidSpec


@dataclass(frozen=True)
class ClientDevice:
    id: int
    device_model_key: str
    country_code: str
    bandwidth_down_bps: float
    bandwidth_up_bps: float
    train_throughput_samples_per_s: float
    dropout_prob: float
    num_samples: int
    data_seed: int

    def __post_init__(self):
        if not (self.bandwidth_down_bps > 0 and self.bandwidth_up_bps > 0):
            raise ValueError("bandwidths must be > 0")
        if not self.train_throughput_samples_per_s > 0:
            raise ValueError("throughput must be > 0")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not 0 <= self.dropout_prob <= 1:
            raise ValueError("dropout_prob must lie in [0, 1]")


def _zipf_mean(a: float, lo: int, hi: int) -> float:
    k = np.arange(lo, hi + 1, dtype=np.float64)
    w = k**-a
    return float((k * w).sum() / w.sum())


@lru_cache(maxsize=64)
def zipf_exponent_for_mean(mean: float, lo: int, hi: int) -> float:
    """Exponent of a Zipf law bounded to [lo, hi] whose mean equals ``mean``."""
    if not lo < mean < (lo + hi) / 2:
        raise InvalidSpec(f"samples_mean {mean} not reachable with a decreasing power law on [{lo}, {hi}]")
    return brentq(lambda a: _zipf_mean(a, lo, hi) - mean, 1e-6, 20.0, xtol=1e-12)


def sample_bounded_zipf(rng: np.random.Generator, n: int, mean: float, lo: int, hi: int) -> np.ndarray:
    a = zipf_exponent_for_mean(mean, lo, hi)
    k = np.arange(lo, hi + 1)
    cdf = np.cumsum(k.astype(np.float64) ** -a)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return k[np.minimum(idx, len(k) - 1)]


def _check_mix(mix: dict, name: str) -> tuple[list, np.ndarray]:
    if not mix:
        raise InvalidSpec(f"{name} mix is empty")
    keys = sorted(mix)
    p = np.array([float(mix[k]) for k in keys])
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidSpec(f"{name} mix must be non-negative and sum to 1")
    return keys, p


def generate_population(spec: PopulationSpec) -> list[ClientDevice]:
    """Deterministic population for ``spec.seed``; samples per user follow a bounded power law."""
    if spec.num_devices < 1:
        raise InvalidSpec("num_devices must be >= 1")
    if not 0 <= spec.dropout_prob <= 1:
        raise InvalidSpec("dropout_prob must lie in [0, 1]")
    countries, pc = _check_mix(spec.countries, "country")
    models, pm = _check_mix(spec.device_models, "device-model")
    n = spec.num_devices
    rng = np.random.default_rng(spec.seed)

    country_idx = rng.choice(len(countries), size=n, p=pc)
    model_idx = rng.choice(len(models), size=n, p=pm)

    def lognormal(d):
        return np.exp(math.log(d.median) + d.sigma * rng.standard_normal(n))

    bw_down = lognormal(spec.bandwidth_down_bps)
    bw_up = lognormal(spec.bandwidth_up_bps)
    throughput = lognormal(spec.throughput_samples_per_s)
    if spec.samples_min == spec.samples_max:
        samples = np.full(n, spec.samples_min)
    else:
        samples = sample_bounded_zipf(rng, n, spec.samples_mean, spec.samples_min, spec.samples_max)
    if spec.dropout_beta is not None:
        dropout = rng.beta(*spec.dropout_beta, size=n)
    else:
        dropout = np.full(n, spec.dropout_prob)
    data_seeds = rng.integers(0, 2**62, size=n)
    return [
        ClientDevice(
            id=i,
            device_model_key=models[model_idx[i]],
            country_code=countries[country_idx[i]],
            bandwidth_down_bps=float(bw_down[i]),
            bandwidth_up_bps=float(bw_up[i]),
            train_throughput_samples_per_s=float(throughput[i]),
            dropout_prob=float(dropout[i]),
            num_samples=int(samples[i]),
            data_seed=int(data_seeds[i]),
        )
        for i in range(n)
    ]


def truncate_timing(t: SessionTiming, elapsed: float) -> SessionTiming:
    """Cut a session ``elapsed`` seconds after it began; bytes scale with the time spent per phase."""
    down = min(t.t_download_s, max(elapsed, 0.0))
    train = min(t.t_train_s, max(elapsed - t.t_download_s, 0.0))
    up = min(t.t_upload_s, max(elapsed - t.t_download_s - t.t_train_s, 0.0))

    def part(nbytes, full, done):
        return nbytes if done >= full else int(round(nbytes * done / full))

    return SessionTiming(
        t_download_s=down,
        t_train_s=train,
        t_upload_s=up,
        bytes_down=part(t.bytes_down, t.t_download_s, down),
        bytes_up=part(t.bytes_up, t.t_upload_s, up),
        completed=False,
    )


def simulate_session(device: ClientDevice, model_size_bytes: int, cfg, rng: np.random.Generator) -> SessionTiming:
    """Download, train, upload; a Bernoulli dropout cuts the session at a uniform point.

    ``cfg`` is anything with a ``local_epochs`` attribute. Exactly two
    uniforms are drawn per call whatever the outcome, so the random stream
    does not depend on which sessions drop.
    """
    u_drop, u_cut = (float(u) for u in rng.random(2))
    bits = model_size_bytes * 8
    full = SessionTiming(
        t_download_s=bits / device.bandwidth_down_bps,
        t_train_s=cfg.local_epochs * device.num_samples / device.train_throughput_samples_per_s,
        t_upload_s=bits / device.bandwidth_up_bps,
        bytes_down=model_size_bytes,
        bytes_up=model_size_bytes,
        completed=True,
    )
    if u_drop < device.dropout_prob:
        return truncate_timing(full, u_cut * full.duration_s)
    return full
