"""Joules for client compute, client radio, network infrastructure and servers."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .power_profile import DevicePowerModel


@dataclass(frozen=True)
class SessionTiming:
    t_download_s: float
    t_train_s: float
    t_upload_s: float
    bytes_down: int
    bytes_up: int
    completed: bool = True

    def __post_init__(self):
        if min(self.t_download_s, self.t_train_s, self.t_upload_s, self.bytes_down, self.bytes_up) < 0:
            raise ValueError("session times and byte counts must be >= 0")

    @property
    def duration_s(self) -> float:
        return self.t_download_s + self.t_train_s + self.t_upload_s


NETWORK_KEYS = (
    "e_access_j_per_bit",
    "e_edge_switch_j_per_bit",
    "e_bng_j_per_bit",
    "e_edge_router_j_per_bit",
    "e_core_router_j_per_bit",
    "e_dc_switch_j_per_bit",
    "n_edge",
    "n_core",
)


@dataclass(frozen=True)
class NetworkEnergyParams:
    """Per-bit energies (J/bit) of each hop between phone and datacenter."""

    e_access: float
    e_edge_switch: float
    e_bng: float
    e_edge_router: float
    e_core_router: float
    e_dc_switch: float
    n_edge: int
    n_core: int

    def __post_init__(self):
        energies = (self.e_access, self.e_edge_switch, self.e_bng, self.e_edge_router, self.e_core_router, self.e_dc_switch)
        if min(energies) < 0:
            raise ValueError("per-bit energies must be >= 0")
        for n in (self.n_edge, self.n_core):
            if n < 0 or int(n) != n:
                raise ValueError("router counts must be non-negative integers")

    @property
    def joules_per_bit(self) -> float:
        return (
            self.e_access
            + self.e_edge_switch
            + self.e_bng
            + self.n_edge * self.e_edge_router
            + self.n_core * self.e_core_router
            + self.e_dc_switch
        )

    @classmethod
    def from_mapping(cls, raw: dict, where: str = "network") -> "NetworkEnergyParams":
        missing = [k for k in NETWORK_KEYS if k not in raw]
        if missing:
            raise ConfigError(f"{where}.{missing[0]}", "required key missing")
        extra = sorted(set(raw) - set(NETWORK_KEYS))
        if extra:
            raise ConfigError(f"{where}.{extra[0]}", "unknown key")
        try:
            return cls(
                e_access=float(raw["e_access_j_per_bit"]),
                e_edge_switch=float(raw["e_edge_switch_j_per_bit"]),
                e_bng=float(raw["e_bng_j_per_bit"]),
                e_edge_router=float(raw["e_edge_router_j_per_bit"]),
                e_core_router=float(raw["e_core_router_j_per_bit"]),
                e_dc_switch=float(raw["e_dc_switch_j_per_bit"]),
                n_edge=int(raw["n_edge"]),
                n_core=int(raw["n_core"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(where, str(exc)) from None


def load_network_params(path: str | Path) -> NetworkEnergyParams:
    from .config import load_toml

    raw = load_toml(path)
    return NetworkEnergyParams.from_mapping(raw.get("network", raw), where=str(path))


@dataclass(frozen=True)
class ServerEnergyParams:
    p_aggregator_w: float = 45.0
    p_selector_w: float = 45.0
    pue: float = 1.09
    utilization_fraction: float = 0.01  # informational; 45 W is already the 1%-utilization draw

    def __post_init__(self):
        if self.p_aggregator_w < 0 or self.p_selector_w < 0:
            raise ValueError("server powers must be >= 0")
        if self.pue < 1:
            raise ValueError("PUE must be >= 1")


@dataclass(frozen=True)
class EnergyBreakdown:
    """Joules by component. Device radio is kept split by phase."""

    e_client_compute_j: float = 0.0
    e_client_radio_down_j: float = 0.0
    e_client_radio_up_j: float = 0.0
    e_network_infra_up_j: float = 0.0
    e_network_infra_down_j: float = 0.0
    e_server_j: float = 0.0

    @property
    def e_client_radio_j(self) -> float:
        return self.e_client_radio_down_j + self.e_client_radio_up_j

    def total(self) -> float:
        return math.fsum(getattr(self, f.name) for f in fields(self))

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    @classmethod
    def fsum(cls, parts) -> "EnergyBreakdown":
        """Exactly rounded component-wise sum, independent of ordering."""
        parts = list(parts)
        return cls(*(math.fsum(getattr(p, f.name) for p in parts) for f in fields(cls)))


def client_phase_energy(model: DevicePowerModel, t: SessionTiming) -> tuple[float, float, float]:
    """(compute, radio receive, radio transmit) joules for one session."""
    return (
        model.p_cpu_w * t.t_train_s,
        model.p_rx_w * t.t_download_s,
        model.p_tx_w * t.t_upload_s,
    )


def client_session_energy(model: DevicePowerModel, t: SessionTiming) -> tuple[float, float]:
    compute, rx, tx = client_phase_energy(model, t)
    return compute, rx + tx


def network_transfer_energy(p: NetworkEnergyParams, nbytes: int | float) -> float:
    return p.joules_per_bit * nbytes * 8


def server_energy(p: ServerEnergyParams, wall_seconds: float) -> float:
    if wall_seconds < 0:
        raise ValueError("wall_seconds must be >= 0")
    return (p.p_aggregator_w + p.p_selector_w) * p.pue * wall_seconds


def session_breakdown(model: DevicePowerModel, t: SessionTiming, net: NetworkEnergyParams) -> EnergyBreakdown:
    compute, rx, tx = client_phase_energy(model, t)
    return EnergyBreakdown(
        e_client_compute_j=compute,
        e_client_radio_down_j=rx,
        e_client_radio_up_j=tx,
        e_network_infra_up_j=network_transfer_energy(net, t.bytes_up),
        e_network_infra_down_j=network_transfer_energy(net, t.bytes_down),
    )
