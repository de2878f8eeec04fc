"""Android ``power_profile.xml`` parsing and per-device power models.

Profiles report currents in mA and voltages in mV. Everything leaving this
module is in SI watts.
"""
from __future__ import annotations

import csv
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import EmptyProfile, MalformedDocument, MissingField, NoSimilarDevice, NonNumericValue

log = logging.getLogger(__name__)

DEFAULT_WIFI_VOLTAGE_MV = 3700.0
DEFAULT_CPU_VOLTAGE_V = 3.8
MAX_IMPUTATION_DEPTH = 4

WIFI_FIELDS = ("wifi.active", "wifi.controller.rx", "wifi.controller.tx", "wifi.controller.voltage")

_CLUSTER_RE = re.compile(r"^cpu\.core_power\.cluster(\d+)$")


@dataclass(frozen=True)
class PowerProfileDoc:
    device_name: str
    items: dict[str, float]
    arrays: dict[str, tuple[float, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class WifiPowerParams:
    i_active_ma: float
    i_rx_ma: float
    i_tx_ma: float
    voltage_mv: float

    def __post_init__(self):
        if min(self.i_active_ma, self.i_rx_ma, self.i_tx_ma) < 0:
            raise ValueError("Wi-Fi currents must be >= 0")
        if not self.voltage_mv > 0:
            raise ValueError("Wi-Fi voltage must be > 0")


@dataclass(frozen=True)
class CpuPowerParams:
    i_cluster_ma: float
    i_active_ma: float
    i_core_ma: float
    assumed_voltage_v: float = DEFAULT_CPU_VOLTAGE_V

    def __post_init__(self):
        if min(self.i_cluster_ma, self.i_active_ma, self.i_core_ma) < 0:
            raise ValueError("CPU currents must be >= 0")
        if not self.assumed_voltage_v > 0:
            raise ValueError("assumed voltage must be > 0")


@dataclass(frozen=True)
class DevicePowerModel:
    device_key: str
    p_cpu_w: float
    p_rx_w: float
    p_tx_w: float
    provenance: str = "measured"
    imputed_from: str | None = None
    warnings: tuple[str, ...] = ()

    @property
    def usable(self) -> bool:
        return self.p_cpu_w > 0 and self.p_rx_w > 0 and self.p_tx_w > 0

    @property
    def provenance_label(self) -> str:
        if self.imputed_from is None:
            return self.provenance
        return f"imputed:{self.imputed_from}"


def _number(name: str, text: str | None) -> float:
    try:
        value = float((text or "").strip())
    except ValueError:
        raise NonNumericValue(f"{name}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise NonNumericValue(f"{name}: {text!r} is not finite")
    if value < 0:
        raise NonNumericValue(f"{name}: negative value {value}")
    return value


def parse_power_profile(document_text: str) -> PowerProfileDoc:
    """Parse the text of a ``power_profile.xml`` document.

    Unknown item names are kept so newer profile keys survive a round trip.
    """
    try:
        root = ET.fromstring(document_text)
    except ET.ParseError as exc:
        raise MalformedDocument(str(exc)) from None
    if root.tag != "device":
        raise MalformedDocument(f"root element is <{root.tag}>, expected <device>")

    items: dict[str, float] = {}
    arrays: dict[str, tuple[float, ...]] = {}
    for child in root:
        name = child.get("name")
        if child.tag not in ("item", "array"):
            continue
        if not name:
            raise MalformedDocument(f"<{child.tag}> without a name attribute")
        if name in items or name in arrays:
            raise MalformedDocument(f"duplicate entry {name!r}")
        if child.tag == "item":
            items[name] = _number(name, child.text)
        else:
            arrays[name] = tuple(_number(name, v.text) for v in child.iter("value"))
    if not items:
        raise EmptyProfile("profile has no <item> entries")
    return PowerProfileDoc(device_name=root.get("name", ""), items=items, arrays=arrays)


def format_power_profile(doc: PowerProfileDoc) -> str:
    """Serialize a profile back to ``power_profile.xml`` markup."""
    root = ET.Element("device", name=doc.device_name)
    for name, value in doc.items.items():
        ET.SubElement(root, "item", name=name).text = repr(value)
    for name, values in doc.arrays.items():
        arr = ET.SubElement(root, "array", name=name)
        for v in values:
            ET.SubElement(arr, "value").text = repr(v)
    ET.indent(root)
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def wifi_rx_power(p: WifiPowerParams) -> float:
    return (p.i_active_ma + p.i_rx_ma) / 1000.0 * (p.voltage_mv / 1000.0)


def wifi_tx_power(p: WifiPowerParams) -> float:
    return (p.i_active_ma + p.i_tx_ma) / 1000.0 * (p.voltage_mv / 1000.0)


def cpu_train_power(p: CpuPowerParams) -> float:
    return (p.i_cluster_ma + p.i_active_ma + p.i_core_ma) / 1000.0 * p.assumed_voltage_v


@dataclass(frozen=True)
class _Cluster:
    index: int
    max_freq: float | None
    i_cluster_ma: float
    i_core_ma: float


def _scalar(doc: PowerProfileDoc, name: str) -> float:
    # some vendors ship per-frequency arrays where newer profiles use a single item
    if name in doc.items:
        return doc.items[name]
    if doc.arrays.get(name):
        return doc.arrays[name][-1]
    raise MissingField(name)


def _clusters(doc: PowerProfileDoc) -> list[_Cluster]:
    clusters = []
    for name, currents in doc.arrays.items():
        m = _CLUSTER_RE.match(name)
        if not m or not currents:
            continue
        idx = int(m.group(1))
        speeds = doc.arrays.get(f"cpu.core_speeds.cluster{idx}")
        if speeds and len(speeds) == len(currents):
            at = max(range(len(speeds)), key=lambda k: (speeds[k], k))
            max_freq = speeds[at]
        else:
            at, max_freq = len(currents) - 1, None
        clusters.append(
            _Cluster(idx, max_freq, _scalar(doc, f"cpu.cluster_power.cluster{idx}"), currents[at])
        )
    return sorted(clusters, key=lambda c: c.index)


def select_big_cluster(doc: PowerProfileDoc) -> _Cluster:
    """Highest max frequency wins; ties (or missing speed tables) go to the higher draw."""
    clusters = _clusters(doc)
    if not clusters:
        raise MissingField("cpu.core_power.cluster0")
    return max(
        clusters,
        key=lambda c: (c.max_freq if c.max_freq is not None else -1.0, c.i_cluster_ma + c.i_core_ma),
    )


def wifi_params(doc: PowerProfileDoc, allow_default_voltage: bool = False) -> tuple[WifiPowerParams, tuple[str, ...]]:
    warnings: tuple[str, ...] = ()
    for name in WIFI_FIELDS[:3]:
        if name not in doc.items:
            raise MissingField(name)
    voltage = doc.items.get("wifi.controller.voltage")
    if voltage is None:
        if not allow_default_voltage:
            raise MissingField("wifi.controller.voltage")
        voltage = DEFAULT_WIFI_VOLTAGE_MV
        warnings = ("wifi.controller.voltage defaulted to 3700 mV",)
    params = WifiPowerParams(
        doc.items["wifi.active"], doc.items["wifi.controller.rx"], doc.items["wifi.controller.tx"], voltage
    )
    return params, warnings


def cpu_params(doc: PowerProfileDoc, voltage_v: float = DEFAULT_CPU_VOLTAGE_V) -> CpuPowerParams:
    big = select_big_cluster(doc)
    return CpuPowerParams(big.i_cluster_ma, _scalar(doc, "cpu.active"), big.i_core_ma, voltage_v)


def build_device_model(
    profile: PowerProfileDoc,
    device_key: str | None = None,
    *,
    allow_default_voltage: bool = False,
    cpu_voltage_v: float = DEFAULT_CPU_VOLTAGE_V,
) -> DevicePowerModel:
    """Assemble CPU/Wi-Fi powers from a parsed profile, running on the big cluster at max frequency."""
    wifi, warnings = wifi_params(profile, allow_default_voltage)
    cpu = cpu_params(profile, cpu_voltage_v)
    return DevicePowerModel(
        device_key=device_key or profile.device_name,
        p_cpu_w=cpu_train_power(cpu),
        p_rx_w=wifi_rx_power(wifi),
        p_tx_w=wifi_tx_power(wifi),
        warnings=warnings,
    )


def impute_device_model(
    target: str,
    known: Mapping[str, DevicePowerModel] | Iterable[DevicePowerModel],
    similarity: Mapping[str, str],
) -> DevicePowerModel:
    """Borrow powers from the nearest known device along the similarity chain."""
    if not isinstance(known, Mapping):
        known = {m.device_key: m for m in known}
    if target in known:
        return known[target]
    key, seen = target, {target}
    for _ in range(MAX_IMPUTATION_DEPTH):
        key = similarity.get(key)
        if key is None or key in seen:
            break
        seen.add(key)
        if key in known:
            src = known[key]
            return DevicePowerModel(
                device_key=target,
                p_cpu_w=src.p_cpu_w,
                p_rx_w=src.p_rx_w,
                p_tx_w=src.p_tx_w,
                provenance="imputed",
                imputed_from=src.device_key,
                warnings=src.warnings,
            )
    raise NoSimilarDevice(f"no known device reachable from {target!r}")


def read_similarity_csv(path: str | Path) -> dict[str, str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"target_model", "source_model"} <= set(reader.fieldnames):
            raise MalformedDocument(f"{path}: expected header target_model,source_model")
        return {row["target_model"].strip(): row["source_model"].strip() for row in reader}


@dataclass
class ProfileScan:
    models: dict[str, DevicePowerModel]
    errors: dict[str, str]


def load_profile_dir(
    directory: str | Path,
    similarity: Mapping[str, str] | None = None,
    *,
    allow_default_voltage: bool = False,
) -> ProfileScan:
    """Build models for every ``*.xml`` in ``directory``, keyed by file stem.

    Per-file failures are collected in ``errors`` rather than raised. Targets
    named in ``similarity`` that have no profile are imputed.
    """
    models: dict[str, DevicePowerModel] = {}
    errors: dict[str, str] = {}
    for path in sorted(Path(directory).glob("*.xml")):
        try:
            doc = parse_power_profile(path.read_text(encoding="utf-8"))
            models[path.stem] = build_device_model(doc, path.stem, allow_default_voltage=allow_default_voltage)
        except (MalformedDocument, NonNumericValue, EmptyProfile, MissingField, ValueError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            errors[path.name] = f"{type(exc).__name__}: {exc}"
    measured = dict(models)
    for target in sorted(similarity or {}):
        if target in models:
            continue
        try:
            models[target] = impute_device_model(target, measured, similarity)
        except NoSimilarDevice as exc:
            errors[target] = f"NoSimilarDevice: {exc}"
    return ProfileScan(models, errors)


DEVICE_TABLE_HEADER = ("device_key", "p_cpu_w", "p_rx_w", "p_tx_w", "provenance")


def write_device_table(models: Iterable[DevicePowerModel], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DEVICE_TABLE_HEADER)
        for m in sorted(models, key=lambda m: m.device_key):
            w.writerow([m.device_key, repr(m.p_cpu_w), repr(m.p_rx_w), repr(m.p_tx_w), m.provenance_label])


def read_device_table(path: str | Path) -> dict[str, DevicePowerModel]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            prov = row.get("provenance", "measured")
            src = prov.split(":", 1)[1] if prov.startswith("imputed:") else None
            out[row["device_key"]] = DevicePowerModel(
                device_key=row["device_key"],
                p_cpu_w=float(row["p_cpu_w"]),
                p_rx_w=float(row["p_rx_w"]),
                p_tx_w=float(row["p_tx_w"]),
                provenance="imputed" if src else "measured",
                imputed_from=src,
            )
    return out
