"""Command line: ``greenfl {simulate,sweep,fit,report,profile}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from collections import defaultdict
from pathlib import Path

from .errors import ConfigError, GreenFLError
from .predictor import COMPONENTS, FIT_COMPONENTS, RunSummary, fit_all, write_fit_report
from .results import (
    SESSIONS_HEADER,
    read_results_csv,
    result_row,
    session_rows,
    write_csv,
    write_results_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _summary(result, rid: str) -> str:
    cfg = result.config
    unit = "rounds" if cfg.mode == "sync" else "server steps"
    lines = [
        f"run {rid}  mode {cfg.mode}  concurrency {cfg.concurrency}  goal {cfg.aggregation_goal_pct}%  seed {cfg.seed}",
        f"{unit} {result.x_rounds}  hours {result.hours:.3f}  final perplexity {result.final_perplexity:.3f}  stop {result.stop_reason}",
    ]
    em = result.emissions
    if em is None:
        lines.append("no [accounting] section: emissions not computed")
    else:
        shares = em.shares
        for name, kg in em.components().items():
            lines.append(f"  {name:<15} {kg:12.6f} kg CO2e  {100 * shares[name]:6.2f}%")
        lines.append(f"  {'total':<15} {em.total_kg:12.6f} kg CO2e")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    from .config import load_run_file
    from .sweep import execute

    loaded = load_run_file(args.config, seed=args.seed)
    result, rid = execute(loaded)
    write_results_csv(args.out, [result_row(result, rid)])
    if args.sessions_csv:
        write_csv(args.sessions_csv, SESSIONS_HEADER, session_rows(result.records, rid))
    print(_summary(result, rid))
    print(f"results -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import load_sweep, run_sweep

    spec = load_sweep(args.config)
    out = args.out or spec.out
    if out is None:
        raise UsageError("no output path: pass --out or set sweep.out")
    n_jobs = len(spec.jobs())
    print(f"sweep: {n_jobs} runs on {args.parallelism} worker(s)")
    outcome = run_sweep(spec, args.parallelism)
    n = write_results_csv(out, outcome.rows)
    print(f"{n} rows -> {out}")
    if outcome.failures:
        print(f"{len(outcome.failures)} run(s) failed:", file=sys.stderr)
        for combo, seed, msg in outcome.failures:
            print(f"  {combo} seed={seed}: {msg.strip()}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _summaries(path, mode: str) -> list[RunSummary]:
    rows = read_results_csv(path)
    out = []
    for r in rows:
        if r["mode"] != mode:
            continue
        if r["co2e_total_kg"] == "":
            raise ConfigError(str(path), "results have no emissions columns; rerun with an [accounting] section")
        out.append(RunSummary.from_row(r))
    return out


def _plot_fits(path, summaries, fits, mode):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "greenfl"
    fig, axes = plt.subplots(1, len(fits), figsize=(4 * len(fits), 3.6), squeeze=False)
    xs = [s.x for s in summaries]
    xlabel = "concurrency x rounds" if mode == "sync" else "concurrency x hours"
    for ax, fit in zip(axes[0], fits):
        ax.scatter(xs, [s.co2e_kg[fit.component] for s in summaries], s=12)
        lo, hi = min(xs), max(xs)
        ax.plot([lo, hi], [fit.slope * lo + fit.intercept, fit.slope * hi + fit.intercept], color="C3")
        ax.set_title(f"{fit.component}  R2={fit.r_squared:.3f}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("kg CO2e")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_fit(args) -> int:
    summaries = _summaries(args.config, args.mode)
    comps = args.component or list(FIT_COMPONENTS)
    fits = fit_all(summaries, comps, through_origin=args.through_origin)
    for f in fits:
        print(f"{f.component:<15} slope {f.slope:.6g}  intercept {f.intercept:.6g}  R2 {f.r_squared:.4f}  n {f.n_points}")
    if args.out:
        write_fit_report(args.out, fits)
        print(f"fit report -> {args.out}")
    if args.plot:
        _plot_fits(args.plot, summaries, fits, args.mode)
        print(f"plot -> {args.plot}")
    return EXIT_OK


def _mean(xs):
    xs = [x for x in xs if not math.isnan(x)]
    return math.fsum(xs) / len(xs) if xs else math.nan


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "greenfl"
    rows = read_results_csv(args.config)
    if not rows:
        raise ConfigError(str(args.config), "results file has no rows")
    out = Path(args.out or "report")
    out.mkdir(parents=True, exist_ok=True)

    groups = defaultdict(list)
    for r in rows:
        groups[(r["mode"], int(r["concurrency"]))].append(r)

    lines = ["mode   concurrency  runs  mean_hours  mean_rounds  " + "  ".join(f"{c}_kg" for c in COMPONENTS)]
    for (mode, conc), rs in sorted(groups.items()):
        vals = [_mean(float(r[f"co2e_{c}_kg"] or "nan") for r in rs) for c in COMPONENTS]
        lines.append(
            f"{mode:<6} {conc:>11}  {len(rs):>4}  {_mean(float(r['hours']) for r in rs):10.3f}  "
            f"{_mean(float(r['rounds']) for r in rs):11.1f}  " + "  ".join(f"{v:.6g}" for v in vals)
        )
    text = "\n".join(lines)
    (out / "summary.txt").write_text(text + "\n")
    print(text)

    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for mode in ("sync", "async"):
        keys = sorted(c for m, c in groups if m == mode)
        if not keys:
            continue
        co2 = [_mean(float(r["co2e_total_kg"] or "nan") for r in groups[(mode, c)]) for c in keys]
        hrs = [_mean(float(r["hours"]) for r in groups[(mode, c)]) for c in keys]
        a1.plot(keys, co2, marker="o", label=mode)
        a2.plot(keys, hrs, marker="o", label=mode)
    a1.set_xlabel("concurrency")
    a1.set_ylabel("kg CO2e")
    a2.set_xlabel("concurrency")
    a2.set_ylabel("hours")
    a1.legend()
    fig.tight_layout()
    fig.savefig(out / "concurrency.svg", format="svg", metadata={"Date": None})
    plt.close(fig)
    print(f"report -> {out}")
    return EXIT_OK


def cmd_profile(args) -> int:
    from .power_profile import load_profile_dir, read_similarity_csv, write_device_table

    d = Path(args.config)
    if not d.is_dir():
        raise ConfigError(str(d), "not a directory")
    similarity = read_similarity_csv(args.similarity) if args.similarity else {}
    scan = load_profile_dir(d, similarity, allow_default_voltage=args.allow_default_voltage)
    models = [scan.models[k] for k in sorted(scan.models)]
    write_device_table(models, args.out)
    for name, err in sorted(scan.errors.items()):
        print(f"warning: {name}: {err}", file=sys.stderr)
    for m in models:
        for w in m.warnings:
            print(f"warning: {m.device_key}: {w}", file=sys.stderr)
    if not models:
        print("warning: no device rows produced", file=sys.stderr)
    print(f"{len(models)} device(s), {len(scan.errors)} error(s) -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="greenfl", description="Carbon accounting for simulated cross-device federated learning.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("--config", required=True, help="run TOML file")
    s.add_argument("--out", default="results.csv", help="results CSV (one row)")
    s.add_argument("--seed", type=int, default=None, help="override run.seed")
    s.add_argument("--sessions-csv", default=None, help="also write every session record here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a hyperparameter grid")
    s.add_argument("--config", required=True, help="sweep TOML file")
    s.add_argument("--out", default=None, help="results CSV (defaults to sweep.out)")
    s.add_argument("--parallelism", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", help="fit the linear carbon model to sweep results")
    s.add_argument("--config", required=True, help="results CSV")
    s.add_argument("--mode", choices=("sync", "async"), required=True)
    s.add_argument("--component", action="append", choices=COMPONENTS, help="repeatable; default: all but server")
    s.add_argument("--through-origin", action="store_true")
    s.add_argument("--out", default=None, help="fit report CSV")
    s.add_argument("--plot", default=None, help="SVG scatter with fitted lines")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("report", help="summary table and SVG plots from results")
    s.add_argument("--config", required=True, help="results CSV")
    s.add_argument("--out", default=None, help="output directory (default ./report)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("profile", help="build a device power table from power_profile.xml files")
    s.add_argument("--config", required=True, help="directory of profile XML files")
    s.add_argument("--similarity", default=None, help="CSV of target_model,source_model for imputation")
    s.add_argument("--allow-default-voltage", action="store_true")
    s.add_argument("--out", default="device_power.csv")
    s.set_defaults(func=cmd_profile)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "parallelism", 1) < 1:
        print("greenfl: error: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"greenfl: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GreenFLError, OSError, ValueError) as exc:
        print(f"greenfl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
