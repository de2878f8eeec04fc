"""Fixed-header CSV files for run results and session records."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

RESULTS_HEADER = (
    "run_id",
    "mode",
    "concurrency",
    "aggregation_goal_pct",
    "server_lr",
    "client_lr",
    "local_epochs",
    "batch_size",
    "beta1",
    "beta2",
    "seed",
    "rounds",
    "hours",
    "final_perplexity",
    "stop_reason",
    "co2e_client_compute_kg",
    "co2e_upload_kg",
    "co2e_download_kg",
    "co2e_server_kg",
    "co2e_total_kg",
)

SESSIONS_HEADER = (
    "run_id",
    "session_id",
    "client_id",
    "device_model_key",
    "country_code",
    "round_index",
    "assigned_version",
    "start_s",
    "end_s",
    "outcome",
    "t_download_s",
    "t_train_s",
    "t_upload_s",
    "bytes_down",
    "bytes_up",
    "e_client_compute_j",
    "e_client_radio_down_j",
    "e_client_radio_up_j",
    "e_network_infra_up_j",
    "e_network_infra_down_j",
)

# columns that identify a run rather than describe its outcome
VOLATILE_COLUMNS = ("run_id",)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not f.name.startswith("_")}
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


def run_id(run_cfg, population=None, task=None) -> str:
    """Short content hash of everything that determines a run, seed included."""
    doc = json.dumps(
        {"run": _plain(run_cfg), "population": _plain(population), "task": [type(task).__name__, _plain(task)]},
        sort_keys=True,
        default=repr,
    )
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def result_row(result, rid: str) -> dict[str, str]:
    cfg = result.config
    row = {"run_id": rid, **{k: _fmt(v) for k, v in cfg.as_row().items()}}
    row["rounds"] = _fmt(result.x_rounds)
    row["hours"] = _fmt(result.hours)
    row["final_perplexity"] = _fmt(float(result.final_perplexity))
    row["stop_reason"] = result.stop_reason
    em = result.emissions
    for comp in ("client_compute", "upload", "download", "server"):
        row[f"co2e_{comp}_kg"] = _fmt(getattr(em, f"co2e_{comp}_kg")) if em else ""
    row["co2e_total_kg"] = _fmt(em.total_kg) if em else ""
    return row


def session_rows(records: Iterable, rid: str) -> Iterable[dict[str, str]]:
    for r in records:
        t, e = r.timing, r.energy
        row = {
            "run_id": rid,
            "session_id": r.session_id,
            "client_id": r.client_id,
            "device_model_key": r.device_model_key,
            "country_code": r.country_code,
            "round_index": r.round_index,
            "assigned_version": r.assigned_version,
            "start_s": r.start_s,
            "end_s": r.end_s,
            "outcome": r.outcome,
            "t_download_s": t.t_download_s,
            "t_train_s": t.t_train_s,
            "t_upload_s": t.t_upload_s,
            "bytes_down": t.bytes_down,
            "bytes_up": t.bytes_up,
        }
        for name in SESSIONS_HEADER[15:]:
            row[name] = getattr(e, name) if e is not None else None
        yield {k: _fmt(v) for k, v in row.items()}


def canonical_key(row: Mapping[str, str]) -> tuple:
    """Sort key: the configuration tuple in header order, then the seed."""
    return (
        row["mode"],
        int(row["concurrency"]),
        float(row["aggregation_goal_pct"]),
        float(row["server_lr"]),
        float(row["client_lr"]),
        int(row["local_epochs"]),
        int(row["batch_size"]),
        float(row["beta1"]),
        float(row["beta2"]),
        int(row["seed"]),
        row["run_id"],
    )


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Mapping[str, str]]) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n", extrasaction="raise")
        w.writeheader()
        for row in rows:
            w.writerow(row)
            n += 1
    return n


def write_results_csv(path: str | Path, rows: Iterable[Mapping[str, str]], canonical: bool = True) -> int:
    rows = list(rows)
    if canonical:
        rows.sort(key=canonical_key)
    return write_csv(path, RESULTS_HEADER, rows)


def read_results_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected results header {reader.fieldnames}")
        return list(reader)
