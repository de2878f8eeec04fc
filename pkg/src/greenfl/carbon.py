"""Energy to kg CO2e, and four-way emission reports."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from .energy import EnergyBreakdown
from .errors import ConfigError, UnknownCountry

J_PER_KWH = 3.6e6
NETWORK_ATTRIBUTIONS = ("client", "split")
COMPONENTS = ("client_compute", "upload", "download", "server")


@dataclass(frozen=True)
class CarbonIntensityTable:
    intensities: Mapping[str, float]  # kg CO2e per kWh
    source_year: int | None = None

    def __post_init__(self):
        for code, value in self.intensities.items():
            if not value > 0:
                raise ValueError(f"intensity for {code} must be > 0")

    def __getitem__(self, code: str) -> float:
        try:
            return self.intensities[code]
        except KeyError:
            raise UnknownCountry(code) from None

    def __contains__(self, code: str) -> bool:
        return code in self.intensities


@dataclass(frozen=True)
class DatacenterFleet:
    sites: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.sites:
            raise ValueError("datacenter fleet is empty")
        if any(n < 1 for _, n in self.sites):
            raise ValueError("datacenter counts must be >= 1")


def emissions_from_energy(joules: float, intensity_kg_per_kwh: float) -> float:
    return joules / J_PER_KWH * intensity_kg_per_kwh


def datacenter_weighted_intensity(fleet: DatacenterFleet, table: CarbonIntensityTable) -> float:
    num = math.fsum(n * table[code] for code, n in fleet.sites)
    return num / sum(n for _, n in fleet.sites)


@dataclass(frozen=True)
class EmissionsReport:
    co2e_client_compute_kg: float = 0.0
    co2e_upload_kg: float = 0.0
    co2e_download_kg: float = 0.0
    co2e_server_kg: float = 0.0
    dropped_sessions_included: bool = True

    @property
    def total_kg(self) -> float:
        return math.fsum(self.components().values())

    def components(self) -> dict[str, float]:
        return {
            "client_compute": self.co2e_client_compute_kg,
            "upload": self.co2e_upload_kg,
            "download": self.co2e_download_kg,
            "server": self.co2e_server_kg,
        }

    @property
    def shares(self) -> dict[str, float]:
        total = self.total_kg
        if total <= 0:
            return {k: 0.0 for k in COMPONENTS}
        return {k: v / total for k, v in self.components().items()}


class SessionLike(Protocol):
    country_code: str
    energy: EnergyBreakdown
    completed: bool


def _network_terms(joules: float, client_i: float, dc_i: float, policy: str) -> list[float]:
    if policy == "client":
        return [emissions_from_energy(joules, client_i)]
    return [emissions_from_energy(0.5 * joules, client_i), emissions_from_energy(0.5 * joules, dc_i)]


def build_report(
    sessions: Iterable[SessionLike],
    server_j: float,
    table: CarbonIntensityTable,
    fleet: DatacenterFleet,
    network_attribution: str = "client",
    include_dropped: bool = True,
) -> EmissionsReport:
    """Fold session energies into kg CO2e by component.

    Device energy is charged at the session's country intensity, server
    energy at the fleet-weighted intensity. Network-infrastructure energy is
    charged per ``network_attribution``: ``"client"`` (all at the client's
    country) or ``"split"`` (half client country, half datacenter mix).
    Sums use ``math.fsum`` so the result does not depend on session order.
    """
    if network_attribution not in NETWORK_ATTRIBUTIONS:
        raise ValueError(f"network_attribution must be one of {NETWORK_ATTRIBUTIONS}")
    dc_i = datacenter_weighted_intensity(fleet, table)
    compute, up, down = [], [], []
    for s in sessions:
        if not include_dropped and not s.completed:
            continue
        ci = table[s.country_code]
        e = s.energy
        compute.append(emissions_from_energy(e.e_client_compute_j, ci))
        up.append(emissions_from_energy(e.e_client_radio_up_j, ci))
        up.extend(_network_terms(e.e_network_infra_up_j, ci, dc_i, network_attribution))
        down.append(emissions_from_energy(e.e_client_radio_down_j, ci))
        down.extend(_network_terms(e.e_network_infra_down_j, ci, dc_i, network_attribution))
    return EmissionsReport(
        co2e_client_compute_kg=math.fsum(compute),
        co2e_upload_kg=math.fsum(up),
        co2e_download_kg=math.fsum(down),
        co2e_server_kg=emissions_from_energy(server_j, dc_i),
        dropped_sessions_included=include_dropped,
    )


def read_intensity_csv(path: str | Path) -> CarbonIntensityTable:
    intensities: dict[str, float] = {}
    years = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"country_code", "kg_co2e_per_kwh"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(str(path), "expected header country_code,kg_co2e_per_kwh,year")
        for row in reader:
            code = row["country_code"].strip()
            if code in intensities:
                raise ConfigError(f"{path}:{code}", "duplicate country code")
            intensities[code] = float(row["kg_co2e_per_kwh"])
            if row.get("year"):
                years.add(int(row["year"]))
    return CarbonIntensityTable(intensities, max(years) if years else None)


def read_fleet_csv(path: str | Path) -> DatacenterFleet:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"country_code", "datacenter_count"} <= set(reader.fieldnames):
            raise ConfigError(str(path), "expected header country_code,datacenter_count")
        return DatacenterFleet(tuple((r["country_code"].strip(), int(r["datacenter_count"])) for r in reader))
