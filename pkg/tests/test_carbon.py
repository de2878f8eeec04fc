import math
from dataclasses import dataclass

import pytest

from greenfl.carbon import (
    CarbonIntensityTable,
    DatacenterFleet,
    EmissionsReport,
    build_report,
    datacenter_weighted_intensity,
    emissions_from_energy,
    read_fleet_csv,
    read_intensity_csv,
)
from greenfl.energy import EnergyBreakdown
from greenfl.errors import ConfigError, UnknownCountry

TABLE = CarbonIntensityTable({"A": 0.2, "B": 0.6, "C": 1.0})


@dataclass
class S:
    country_code: str
    energy: EnergyBreakdown
    completed: bool = True


def test_emissions_hand_values():
    assert emissions_from_energy(0.0, 0.4) == 0.0
    assert emissions_from_energy(3.6e6, 0.5) == 0.5
    assert abs(emissions_from_energy(353_160.0, 0.4) - 0.03924) < 1e-15


def test_weighted_intensity():
    assert datacenter_weighted_intensity(DatacenterFleet((("A", 4),)), TABLE) == 0.2
    assert abs(datacenter_weighted_intensity(DatacenterFleet((("A", 1), ("B", 3))), TABLE) - 0.5) < 1e-15
    with pytest.raises(UnknownCountry):
        datacenter_weighted_intensity(DatacenterFleet((("Q", 1),)), TABLE)


def test_empty_report():
    r = build_report([], 0.0, TABLE, DatacenterFleet((("A", 1),)))
    assert r.total_kg == 0.0
    assert r.shares == {"client_compute": 0.0, "upload": 0.0, "download": 0.0, "server": 0.0}


def test_single_compute_session():
    table = CarbonIntensityTable({"U": 1.0})
    r = build_report([S("U", EnergyBreakdown(e_client_compute_j=7.2e6))], 0.0, table, DatacenterFleet((("U", 1),)))
    assert r.total_kg == 2.0 and r.co2e_client_compute_kg == 2.0


def oracle(sessions, server_j, table, fleet, split=False):
    """Spreadsheet-style fold: one row per session and component, then column sums."""
    dc = sum(n * table.intensities[c] for c, n in fleet.sites) / sum(n for _, n in fleet.sites)
    cols = {"client_compute": [], "upload": [], "download": [], "server": [server_j / 3.6e6 * dc]}
    for s in sessions:
        ci = table.intensities[s.country_code]
        e = s.energy
        cols["client_compute"].append(e.e_client_compute_j / 3.6e6 * ci)
        cols["upload"].append(e.e_client_radio_up_j / 3.6e6 * ci)
        cols["download"].append(e.e_client_radio_down_j / 3.6e6 * ci)
        for key, j in (("upload", e.e_network_infra_up_j), ("download", e.e_network_infra_down_j)):
            if split:
                cols[key] += [0.5 * j / 3.6e6 * ci, 0.5 * j / 3.6e6 * dc]
            else:
                cols[key].append(j / 3.6e6 * ci)
    return {k: math.fsum(v) for k, v in cols.items()}


SESSIONS = [
    S("A", EnergyBreakdown(500.0, 20.0, 45.0, 60.0, 55.0)),
    S("B", EnergyBreakdown(800.0, 12.5, 31.0, 60.0, 55.0)),
    S("A", EnergyBreakdown(120.0, 4.0, 0.0, 0.0, 55.0), completed=False),
]
FLEET = DatacenterFleet((("B", 2), ("C", 1)))


@pytest.mark.parametrize("policy", ["client", "split"])
def test_three_session_oracle(policy):
    r = build_report(SESSIONS, 9000.0, TABLE, FLEET, network_attribution=policy)
    assert r.components() == oracle(SESSIONS, 9000.0, TABLE, FLEET, split=policy == "split")
    assert abs(math.fsum(r.shares.values()) - 1) < 1e-9


def test_exclude_dropped():
    r = build_report(SESSIONS, 0.0, TABLE, FLEET, include_dropped=False)
    assert r.components() == oracle(SESSIONS[:2], 0.0, TABLE, FLEET)
    assert not r.dropped_sessions_included


def test_unknown_country_in_session():
    with pytest.raises(UnknownCountry):
        build_report([S("Q", EnergyBreakdown(1.0))], 0.0, TABLE, FLEET)


def test_report_invariants():
    with pytest.raises(ValueError):
        CarbonIntensityTable({"A": 0.0})
    with pytest.raises(ValueError):
        DatacenterFleet(())
    with pytest.raises(ValueError):
        build_report([], 0.0, TABLE, FLEET, network_attribution="nowhere")
    assert EmissionsReport(1.0, 1.0, 1.0, 1.0).total_kg == 4.0


def test_csv_readers(tmp_path, data_dir):
    t = read_intensity_csv(data_dir / "intensity_example.csv")
    f = read_fleet_csv(data_dir / "fleet_example.csv")
    lo, hi = min(t[c] for c, _ in f.sites), max(t[c] for c, _ in f.sites)
    assert lo <= datacenter_weighted_intensity(f, t) <= hi
    bad = tmp_path / "i.csv"
    bad.write_text("code,value\nUS,0.4\n")
    with pytest.raises(ConfigError):
        read_intensity_csv(bad)
    bad.write_text("country_code,kg_co2e_per_kwh,year\nUS,0.4,2022\nUS,0.5,2022\n")
    with pytest.raises(ConfigError):
        read_intensity_csv(bad)
