import re

import pytest

from greenfl.errors import EmptyProfile, MalformedDocument, MissingField, NoSimilarDevice, NonNumericValue
from greenfl.power_profile import (
    CpuPowerParams,
    DevicePowerModel,
    WifiPowerParams,
    build_device_model,
    cpu_train_power,
    format_power_profile,
    impute_device_model,
    load_profile_dir,
    parse_power_profile,
    read_device_table,
    select_big_cluster,
    wifi_rx_power,
    wifi_tx_power,
    write_device_table,
)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def doc(items="", arrays=""):
    return f'<?xml version="1.0"?><device name="Android">{items}{arrays}</device>'


def item(name, value):
    return f'<item name="{name}">{value}</item>'


def array(name, values):
    return f'<array name="{name}">' + "".join(f"<value>{v}</value>" for v in values) + "</array>"


WIFI = item("wifi.active", 120) + item("wifi.controller.rx", 250) + item("wifi.controller.tx", 300)
VOLT = item("wifi.controller.voltage", 3700)


def two_cluster(extra=""):
    return doc(
        WIFI + VOLT + extra + item("cpu.active", 50)
        + item("cpu.cluster_power.cluster0", 10) + item("cpu.cluster_power.cluster1", 100),
        array("cpu.core_speeds.cluster0", [300000, 1800000])
        + array("cpu.core_power.cluster0", [20, 80])
        + array("cpu.core_speeds.cluster1", [500000, 2800000])
        + array("cpu.core_power.cluster1", [90, 150]),
    )


# -- parsing


def test_pixel7_snippet_values(data_dir):
    d = parse_power_profile((data_dir / "profiles" / "pixel7.xml").read_text())
    assert d.items["modem.controller.rx"] == 169
    assert d.items["screen.on"] == 98
    assert d.items["modem.controller.sleep"] == 2.5


def test_zero_value_round_trips():
    assert parse_power_profile(doc(item("screen.on", 0))).items == {"screen.on": 0.0}


def test_parse_matches_independent_scan():
    text = doc(item("wifi.active", 120) + item("wifi.controller.rx", 250) + item("wifi.controller.voltage", 3700))
    # second parser: a plain regex over the text, no XML library involved
    scanned = {m[0]: float(m[1]) for m in re.findall(r'<item name="([^"]+)">\s*([^<]+?)\s*</item>', text)}
    assert parse_power_profile(text).items == scanned
    assert scanned == {"wifi.active": 120.0, "wifi.controller.rx": 250.0, "wifi.controller.voltage": 3700.0}


def test_unknown_items_and_arrays_kept_in_order():
    d = parse_power_profile(doc(item("vendor.new.thing", 7), array("foo", [3, 1, 2])))
    assert d.items["vendor.new.thing"] == 7
    assert d.arrays["foo"] == (3.0, 1.0, 2.0)


@pytest.mark.parametrize(
    "text, exc",
    [
        ("<device><item name='a'>1</item>", MalformedDocument),
        ("<profile><item name='a'>1</item></profile>", MalformedDocument),
        (doc(item("a", 1) + item("a", 2)), MalformedDocument),
        (doc(item("a", "abc")), NonNumericValue),
        (doc(item("a", -1)), NonNumericValue),
        (doc(array("only.arrays", [1])), EmptyProfile),
        (doc(), EmptyProfile),
    ],
)
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_power_profile(text)


def test_format_parse_round_trip(data_dir):
    for path in sorted((data_dir / "profiles").glob("*.xml")):
        d = parse_power_profile(path.read_text())
        assert parse_power_profile(format_power_profile(d)) == d


# -- power formulas


def test_wifi_power_hand_values():
    assert wifi_rx_power(WifiPowerParams(0, 0, 0, 3700)) == 0.0
    assert rel(wifi_rx_power(WifiPowerParams(100, 200, 0, 3700)), 1.11) < 1e-12
    assert rel(wifi_tx_power(WifiPowerParams(120, 0, 300, 3700)), 1.554) < 1e-12


def test_cpu_power_hand_values():
    assert cpu_train_power(CpuPowerParams(0, 0, 0)) == 0.0
    assert rel(cpu_train_power(CpuPowerParams(100, 50, 150)), 1.14) < 1e-12
    assert rel(cpu_train_power(CpuPowerParams(200, 100, 400)), 2.66) < 1e-12


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        WifiPowerParams(1, 1, 1, 0)
    with pytest.raises(ValueError):
        CpuPowerParams(-1, 0, 0)


# -- device models


def test_two_cluster_picks_faster_cluster():
    d = parse_power_profile(two_cluster())
    assert select_big_cluster(d).index == 1
    m = build_device_model(d, "fix")
    assert rel(m.p_cpu_w, (100 + 50 + 150) / 1000 * 3.8) < 1e-12
    assert rel(m.p_rx_w, (120 + 250) / 1000 * 3.7) < 1e-12
    assert rel(m.p_tx_w, (120 + 300) / 1000 * 3.7) < 1e-12
    assert m.provenance == "measured" and m.usable


def test_single_cluster_is_big():
    d = parse_power_profile(
        doc(WIFI + VOLT + item("cpu.active", 5) + item("cpu.cluster_power.cluster0", 7), array("cpu.core_power.cluster0", [1, 9]))
    )
    assert select_big_cluster(d).index == 0
    assert rel(build_device_model(d).p_cpu_w, (7 + 5 + 9) / 1000 * 3.8) < 1e-12


def test_frequency_tie_broken_by_current():
    d = parse_power_profile(
        doc(
            WIFI + VOLT + item("cpu.active", 1) + item("cpu.cluster_power.cluster0", 1) + item("cpu.cluster_power.cluster1", 2),
            array("cpu.core_speeds.cluster0", [2000000]) + array("cpu.core_power.cluster0", [100])
            + array("cpu.core_speeds.cluster1", [2000000]) + array("cpu.core_power.cluster1", [300]),
        )
    )
    assert select_big_cluster(d).index == 1


def test_pixel_fixtures_match_hand_sums(data_dir):
    p7 = build_device_model(parse_power_profile((data_dir / "profiles" / "pixel7.xml").read_text()), "pixel7")
    assert rel(p7.p_cpu_w, (45 + 25 + 620) / 1000 * 3.8) < 1e-12
    assert rel(p7.p_rx_w, (31 + 120) / 1000 * 3.7) < 1e-12
    assert rel(p7.p_tx_w, (31 + 260) / 1000 * 3.7) < 1e-12
    p3 = build_device_model(parse_power_profile((data_dir / "profiles" / "pixel3.xml").read_text()), "pixel3")
    assert rel(p3.p_cpu_w, (30 + 18 + 680) / 1000 * 3.8) < 1e-12


def test_missing_voltage():
    d = parse_power_profile(two_cluster().replace(VOLT, ""))
    with pytest.raises(MissingField) as info:
        build_device_model(d)
    assert info.value.name == "wifi.controller.voltage"
    m = build_device_model(d, allow_default_voltage=True)
    assert rel(m.p_rx_w, 370 / 1000 * 3.7) < 1e-12
    assert m.warnings


def test_missing_cpu_arrays():
    with pytest.raises(MissingField):
        build_device_model(parse_power_profile(doc(WIFI + VOLT + item("cpu.active", 1))))


# -- imputation

KNOWN = {"Y": DevicePowerModel("Y", 1.5, 0.25, 0.75), "Z": DevicePowerModel("Z", 2.5, 0.5, 1.25)}


def test_impute_direct():
    m = impute_device_model("X", KNOWN, {"X": "Y"})
    assert (m.p_cpu_w, m.p_rx_w, m.p_tx_w) == (1.5, 0.25, 0.75)
    assert m.provenance == "imputed" and m.imputed_from == "Y" and m.provenance_label == "imputed:Y"


def test_impute_chain():
    m = impute_device_model("X", {"Z": KNOWN["Z"]}, {"X": "Y", "Y": "Z"})
    assert (m.p_cpu_w, m.imputed_from) == (2.5, "Z")


def test_impute_failures():
    with pytest.raises(NoSimilarDevice):
        impute_device_model("X", KNOWN, {})
    with pytest.raises(NoSimilarDevice):
        impute_device_model("A", KNOWN, {"A": "B", "B": "A"})
    chain = {"A": "B", "B": "C", "C": "D", "D": "E", "E": "Z"}
    with pytest.raises(NoSimilarDevice):
        impute_device_model("A", KNOWN, chain)  # five hops, depth bound is four
    assert impute_device_model("B", KNOWN, chain).imputed_from == "Z"


def test_profile_dir_and_table(tmp_path, data_dir):
    (tmp_path / "good.xml").write_text(two_cluster())
    (tmp_path / "also.xml").write_text(two_cluster())
    (tmp_path / "broken.xml").write_text("<device><item")
    scan = load_profile_dir(tmp_path, {"clone": "good", "orphan": "nobody"})
    assert sorted(scan.models) == ["also", "clone", "good"]
    assert set(scan.errors) == {"broken.xml", "orphan"}
    out = tmp_path / "table.csv"
    write_device_table(scan.models.values(), out)
    back = read_device_table(out)
    assert back["clone"].imputed_from == "good"
    assert back["good"].p_cpu_w == scan.models["good"].p_cpu_w
    assert out.read_text().splitlines()[0] == "device_key,p_cpu_w,p_rx_w,p_tx_w,provenance"
