"""Join simulated sessions to device power, network and server energy, then carbon."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..carbon import (
    NETWORK_ATTRIBUTIONS,
    CarbonIntensityTable,
    DatacenterFleet,
    EmissionsReport,
    build_report,
    read_fleet_csv,
    read_intensity_csv,
)
from ..energy import (
    EnergyBreakdown,
    NetworkEnergyParams,
    ServerEnergyParams,
    load_network_params,
    server_energy,
    session_breakdown,
)
from ..errors import ConfigError
from ..power_profile import (
    DevicePowerModel,
    impute_device_model,
    load_profile_dir,
    read_device_table,
    read_similarity_csv,
)


@dataclass
class Accounting:
    device_models: Mapping[str, DevicePowerModel]
    network: NetworkEnergyParams
    intensity: CarbonIntensityTable
    fleet: DatacenterFleet
    server: ServerEnergyParams = field(default_factory=ServerEnergyParams)
    similarity: Mapping[str, str] = field(default_factory=dict)
    network_attribution: str = "client"
    include_dropped: bool = True

    def __post_init__(self):
        if self.network_attribution not in NETWORK_ATTRIBUTIONS:
            raise ConfigError("accounting.network_attribution", f"must be one of {NETWORK_ATTRIBUTIONS}")


def resolve_models(keys: Iterable[str], device_models: Mapping[str, DevicePowerModel], similarity: Mapping[str, str]) -> dict[str, DevicePowerModel]:
    return {k: impute_device_model(k, device_models, similarity) for k in sorted(set(keys))}


def attach_energy(
    records,
    device_models: Mapping[str, DevicePowerModel],
    network: NetworkEnergyParams,
    server: ServerEnergyParams,
    wall_seconds: float,
    similarity: Mapping[str, str] | None = None,
    include_dropped: bool = True,
) -> EnergyBreakdown:
    """Set ``record.energy`` on every session and return the run total, server included."""
    models = resolve_models((r.device_model_key for r in records), device_models, similarity or {})
    for r in records:
        r.energy = session_breakdown(models[r.device_model_key], r.timing, network)
    counted = [r.energy for r in records if include_dropped or r.completed]
    sessions = EnergyBreakdown.fsum(counted)
    return EnergyBreakdown(
        e_client_compute_j=sessions.e_client_compute_j,
        e_client_radio_down_j=sessions.e_client_radio_down_j,
        e_client_radio_up_j=sessions.e_client_radio_up_j,
        e_network_infra_up_j=sessions.e_network_infra_up_j,
        e_network_infra_down_j=sessions.e_network_infra_down_j,
        e_server_j=server_energy(server, wall_seconds),
    )


def account(records, wall_seconds: float, acc: Accounting) -> tuple[EnergyBreakdown, EmissionsReport]:
    energy = attach_energy(
        records, acc.device_models, acc.network, acc.server, wall_seconds, acc.similarity, acc.include_dropped
    )
    report = build_report(
        records, energy.e_server_j, acc.intensity, acc.fleet, acc.network_attribution, acc.include_dropped
    )
    return energy, report


_KEYS = {
    "device_table",
    "profiles_dir",
    "similarity_csv",
    "allow_default_voltage",
    "network",
    "intensity_csv",
    "fleet_csv",
    "network_attribution",
    "include_dropped",
    "server",
}


def load_accounting(raw: dict, base: str | Path = ".") -> Accounting | None:
    """Build an ``Accounting`` from the ``[accounting]`` table; ``None`` when the table is empty."""
    if not raw:
        return None
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(f"accounting.{unknown[0]}", "unknown key")
    base = Path(base)

    def path(key):
        if key not in raw:
            raise ConfigError(f"accounting.{key}", "required key missing")
        p = Path(raw[key])
        return p if p.is_absolute() else base / p

    similarity = read_similarity_csv(path("similarity_csv")) if "similarity_csv" in raw else {}
    if "device_table" in raw:
        models = read_device_table(path("device_table"))
    elif "profiles_dir" in raw:
        scan = load_profile_dir(path("profiles_dir"), similarity, allow_default_voltage=raw.get("allow_default_voltage", False))
        models = scan.models
    else:
        raise ConfigError("accounting.device_table", "one of device_table or profiles_dir is required")
    try:
        server = ServerEnergyParams(**raw.get("server", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError("accounting.server", str(exc)) from None
    return Accounting(
        device_models=models,
        network=load_network_params(path("network")),
        intensity=read_intensity_csv(path("intensity_csv")),
        fleet=read_fleet_csv(path("fleet_csv")),
        server=server,
        similarity=similarity,
        network_attribution=raw.get("network_attribution", "client"),
        include_dropped=raw.get("include_dropped", True),
    )
