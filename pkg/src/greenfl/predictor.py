"""Linear carbon model: CO2e against concurrency x rounds (sync) or concurrency x hours (async)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateX, MixedModes

COMPONENTS = ("client_compute", "upload", "download", "server", "total")
# the server is left out of the default fit set, it is a small share of the total
FIT_COMPONENTS = ("client_compute", "upload", "download", "total")
FIT_REPORT_HEADER = ("component", "slope", "intercept", "r_squared", "n_points")


@dataclass(frozen=True)
class RunSummary:
    mode: str
    concurrency: int
    rounds: float | None
    hours: float | None
    co2e_kg: Mapping[str, float]

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.concurrency < 0:
            raise ValueError("concurrency must be >= 0")
        driver = self.rounds if self.mode == "sync" else self.hours
        if driver is None or driver < 0:
            raise ValueError(f"{self.mode} summary needs a non-negative {'rounds' if self.mode == 'sync' else 'hours'}")
        if any(v < 0 for v in self.co2e_kg.values()):
            raise ValueError("emissions must be >= 0")

    @property
    def x(self) -> float:
        """Concurrency times rounds for sync runs, times hours for async runs."""
        return self.concurrency * (self.rounds if self.mode == "sync" else self.hours)

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "RunSummary":
        return cls(
            mode=row["mode"],
            concurrency=int(row["concurrency"]),
            rounds=float(row["rounds"]),
            hours=float(row["hours"]),
            co2e_kg={c: float(row[f"co2e_{c}_kg"]) for c in COMPONENTS},
        )


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    component: str = "total"


def ols(x: Sequence[float], y: Sequence[float], through_origin: bool = False) -> tuple[float, float, float]:
    """(slope, intercept, R^2) of y on x; R^2 = 1 - SS_res / SS_tot with SS_tot centred."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise DegenerateX(f"need at least 2 points, got {len(x)}")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = math.fsum(dx * dx)
    if sxx == 0.0 or np.all(x == x[0]):
        raise DegenerateX("x values are all equal")
    if through_origin:
        slope = math.fsum(x * y) / math.fsum(x * x)
        intercept = 0.0
    else:
        slope = math.fsum(dx * (y - ym)) / sxx
        intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = math.fsum(resid * resid)
    ss_tot = math.fsum((y - ym) ** 2)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def fit_carbon_model(summaries: Sequence[RunSummary], component: str = "total", through_origin: bool = False) -> RegressionFit:
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    modes = {s.mode for s in summaries}
    if len(modes) > 1:
        raise MixedModes(f"summaries mix modes {sorted(modes)}")
    slope, intercept, r2 = ols([s.x for s in summaries], [s.co2e_kg[component] for s in summaries], through_origin)
    return RegressionFit(slope, intercept, r2, len(summaries), component)


def predict_emissions(fit: RegressionFit, concurrency: float, rounds_or_hours: float) -> float:
    if concurrency < 0 or rounds_or_hours < 0:
        raise ValueError("inputs must be >= 0")
    return max(0.0, fit.slope * (concurrency * rounds_or_hours) + fit.intercept)


def fit_all(summaries: Sequence[RunSummary], components: Iterable[str] = FIT_COMPONENTS, through_origin=False) -> list[RegressionFit]:
    return [fit_carbon_model(summaries, c, through_origin) for c in components]


def write_fit_report(path: str | Path, fits: Iterable[RegressionFit]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_REPORT_HEADER)
        for f in fits:
            w.writerow([f.component, repr(f.slope), repr(f.intercept), repr(f.r_squared), f.n_points])


def read_fit_report(path: str | Path) -> list[RegressionFit]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        RegressionFit(float(r["slope"]), float(r["intercept"]), float(r["r_squared"]), int(r["n_points"]), r["component"])
        for r in rows
    ]
