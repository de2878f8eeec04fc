from fractions import Fraction

import numpy as np
import pytest

from conftest import summaries_of, synthetic_runs
from greenfl.errors import DegenerateX, MixedModes
from greenfl.predictor import (
    RegressionFit,
    RunSummary,
    fit_carbon_model,
    ols,
    predict_emissions,
    read_fit_report,
    write_fit_report,
)


def naive_ols(xs, ys):
    """Exact rational normal equations; only the final values are rounded."""
    xs = [Fraction(x) for x in xs]
    ys = [Fraction(y) for y in ys]
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    icept = (sy - slope * sx) / n
    ybar = sy / n
    ss_res = sum((y - slope * x - icept) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - ybar) ** 2 for y in ys)
    return float(slope), float(icept), float(1 - ss_res / ss_tot)


def summ(x, y, mode="sync"):
    return RunSummary(mode, 1, x if mode == "sync" else None, x if mode == "async" else None, {"total": y})


def test_exact_line():
    fit = fit_carbon_model([summ(x, 2 * x + 1) for x in range(1, 8)])
    assert fit.slope == pytest.approx(2, abs=1e-12) and fit.intercept == pytest.approx(1, abs=1e-12)
    assert fit.r_squared == 1.0 and fit.n_points == 7


def test_two_points_by_hand():
    fit = fit_carbon_model([summ(1, 1), summ(3, 5)])
    assert (fit.slope, fit.intercept, fit.r_squared) == (2.0, -1.0, 1.0)


def test_x_is_concurrency_times_rounds_or_hours():
    s = RunSummary("sync", 10, 5, 99.0, {"total": 1.0})
    a = RunSummary("async", 10, 99, 2.5, {"total": 1.0})
    assert s.x == 50 and a.x == 25.0


def test_errors():
    with pytest.raises(DegenerateX):
        fit_carbon_model([summ(2, 1), summ(2, 3)])
    with pytest.raises(DegenerateX):
        fit_carbon_model([summ(2, 1)])
    with pytest.raises(MixedModes):
        fit_carbon_model([summ(1, 1), summ(2, 2, "async")])
    with pytest.raises(ValueError):
        RunSummary("sync", 3, None, 1.0, {"total": 1.0})
    with pytest.raises(ValueError):
        RunSummary("sync", 3, 1, 1.0, {"total": -1.0})


def test_predict_examples():
    fit = RegressionFit(2.0, 1.0, 1.0, 2)
    assert predict_emissions(fit, 10, 5) == 101.0
    assert predict_emissions(fit, 0, 5) == 1.0
    assert predict_emissions(RegressionFit(2.0, -1.0, 1.0, 2), 0, 0) == 0.0
    with pytest.raises(ValueError):
        predict_emissions(fit, -1, 1)


def test_oracle_on_synthetic_fixture(shipped_accounting):
    sums = summaries_of(synthetic_runs(shipped_accounting, concurrencies=(50, 100, 200, 300), seeds=(0, 1, 2)))
    assert len(sums) == 12
    for comp in ("client_compute", "upload", "download", "server", "total"):
        fit = fit_carbon_model(sums, comp)
        slope, icept, r2 = naive_ols([s.x for s in sums], [s.co2e_kg[comp] for s in sums])
        assert abs(fit.slope - slope) <= 1e-9 * abs(slope)
        assert abs(fit.intercept - icept) <= 1e-9 * max(abs(icept), abs(fit.slope) * 1e3)
        assert abs(fit.r_squared - r2) <= 1e-9


def test_residuals_sum_to_zero_and_unit_invariance():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 100, 40)
    y = 0.3 * x + 5 + rng.normal(0, 4, 40)
    slope, icept, r2 = ols(x, y)
    resid = y - (slope * x + icept)
    assert abs(resid.sum()) <= 1e-9 * np.abs(y).sum()
    _, _, r2_g = ols(x, 1000 * y)
    _, _, r2_shift = ols(x, 1000 * y + 17)
    assert abs(r2 - r2_g) < 1e-12 and abs(r2 - r2_shift) < 1e-12


def test_recovers_noisy_line():
    rng = np.random.default_rng(42)
    n, a, b, sigma = 1000, 0.7, 3.0, 2.0
    x = rng.uniform(0, 50, n)
    y = a * x + b + rng.normal(0, sigma, n)
    slope, icept, _ = ols(x, y)
    sxx = ((x - x.mean()) ** 2).sum()
    se_a = sigma / np.sqrt(sxx)
    se_b = sigma * np.sqrt(1 / n + x.mean() ** 2 / sxx)
    assert abs(slope - a) < 3 * se_a and abs(icept - b) < 3 * se_b


def test_through_origin():
    slope, icept, r2 = ols([1, 2, 3], [2, 4, 6], through_origin=True)
    assert (slope, icept, r2) == (2.0, 0.0, 1.0)


def test_fit_report_round_trip(tmp_path):
    fits = [RegressionFit(0.1, -2.5, 0.97, 12, "upload"), RegressionFit(1 / 3, 0.0, 1.0, 3, "total")]
    path = tmp_path / "fit.csv"
    write_fit_report(path, fits)
    assert path.read_text().splitlines()[0] == "component,slope,intercept,r_squared,n_points"
    assert read_fit_report(path) == fits
