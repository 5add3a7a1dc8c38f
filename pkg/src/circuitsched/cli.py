"""Command-line front end.

Subcommands:
  simulate   one scenario, one scheduler: per-run CSVs + figures
  compare    every scheduler in the plan across seeds: summary.csv + figures
  sweep      fairness/throughput/latency vs circuit count: sweep.csv,
             two-column plot-data files, figures

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
CIRCUIT_SCHED_THREADS caps how many runs execute concurrently (default 1;
output files are written by the main thread in a fixed order either way).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from . import engine, metrics, plots
from .model import ConfigError, SimConfig
from .sched import SCHEDULER_NAMES, UnknownSchedulerError
from .scenario import Scenario, dump_resolved, load_scenario
from .traffic import WorkloadSpec


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _thread_count() -> int:
    raw = os.environ.get("CIRCUIT_SCHED_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(
            f"CIRCUIT_SCHED_THREADS must be a positive integer, got {raw!r}"
        ) from None
    if n < 1:
        raise ConfigError("CIRCUIT_SCHED_THREADS must be a positive integer")
    return n


def _run_many(jobs: List[tuple]) -> List[metrics.RunRecord]:
    """Execute (cfg, specs, scheduler, max_ticks) jobs, capped by the
    thread environment knob; results come back in job order."""
    threads = _thread_count()
    if threads == 1 or len(jobs) <= 1:
        return [engine.run(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: engine.run(*job), jobs))


def _seeded(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed)


def _echo_config(scenario: Scenario, out_dir: str) -> None:
    with open(
        os.path.join(out_dir, "resolved-config"), "w", encoding="utf-8"
    ) as fh:
        fh.write(dump_resolved(scenario))


def _latency_rows(record: metrics.RunRecord, cfg: SimConfig) -> List[list]:
    rows = []
    lat = record.flush_latency
    for o in record.outcomes:
        if o.circuit_id in lat:
            ticks = lat[o.circuit_id]
            rows.append(
                [o.circuit_id, o.ctype.value, ticks, ticks * cfg.tick_ms, 0]
            )
        else:
            rows.append([o.circuit_id, o.ctype.value, None, None, 1])
    return rows


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    plan = scenario.plan
    scheduler = args.scheduler or plan.schedulers[0]
    if scheduler not in SCHEDULER_NAMES:
        raise UnknownSchedulerError(
            f"unknown scheduler {scheduler!r}; valid names: "
            f"{', '.join(SCHEDULER_NAMES)}"
        )
    seed = args.seed if args.seed is not None else plan.seeds[0]
    max_ticks = args.max_ticks or plan.max_ticks
    cfg = _seeded(scenario.cfg, seed)
    specs = scenario.specs()
    record = engine.run(cfg, specs, scheduler, max_ticks)

    out = args.out
    os.makedirs(out, exist_ok=True)
    series = metrics.throughput_series(record, cfg)
    _write_csv(
        os.path.join(out, "throughput.csv"),
        ["window_index", "cells", "cells_per_ms"],
        [
            [idx, cells, rate]
            for (idx, cells), rate in zip(record.throughput_windows, series)
        ],
    )
    _write_csv(
        os.path.join(out, "latency.csv"),
        ["circuit_id", "type", "latency_ticks", "latency_ms", "censored"],
        _latency_rows(record, cfg),
    )
    jain = metrics.jain_index(list(record.shares.values()))
    _write_csv(
        os.path.join(out, "fairness.csv"),
        ["scheduler", "n_circuits", "jain"],
        [[scheduler, record.n_circuits, jain]],
    )
    _echo_config(scenario, out)

    windows = [idx for idx, _ in record.throughput_windows]
    plots.plot_series(
        {scheduler: (windows, series)},
        "window index",
        "throughput (cells/ms)",
        os.path.join(out, "throughput.png"),
    )
    cdf = [
        (t * cfg.tick_ms, f) for t, f in metrics.latency_cdf(record)
    ]
    plots.plot_latency_cdf(
        {scheduler: cdf}, os.path.join(out, "latency_cdf.png")
    )
    print(
        f"simulate: scheduler={scheduler} seed={seed} ticks={record.ticks} "
        f"written={record.written_total} jain={jain:.4f} -> {out}"
    )
    return 0


def cmd_compare(args) -> int:
    scenario = load_scenario(args.config)
    plan = scenario.plan
    schedulers = [args.scheduler] if args.scheduler else plan.schedulers
    seeds = [args.seed] if args.seed is not None else plan.seeds
    max_ticks = args.max_ticks or plan.max_ticks
    specs = scenario.specs()

    jobs = [
        (_seeded(scenario.cfg, seed), specs, sched, max_ticks)
        for sched in schedulers
        for seed in seeds
    ]
    records = _run_many(jobs)

    out = args.out
    os.makedirs(out, exist_ok=True)
    rows = []
    by_sched: Dict[str, List[metrics.RunRecord]] = {}
    for (cfg, _, sched, _), record in zip(jobs, records):
        by_sched.setdefault(sched, []).append(record)
        arrived = sum(o.arrived_cells for o in record.outcomes)
        series = metrics.throughput_series(record, cfg)
        p50 = metrics.latency_percentile(record, 50)
        p80 = metrics.latency_percentile(record, 80)
        rows.append(
            [
                sched,
                cfg.seed,
                arrived,
                record.written_total,
                _mean(series),
                metrics.jain_index(list(record.shares.values())),
                None if p50 is None else p50 * cfg.tick_ms,
                None if p80 is None else p80 * cfg.tick_ms,
            ]
        )
    _write_csv(
        os.path.join(out, "summary.csv"),
        [
            "scheduler",
            "seed",
            "arrived_total",
            "written_total",
            "mean_throughput_cells_per_ms",
            "jain",
            "latency_p50_ms",
            "latency_p80_ms",
        ],
        rows,
    )
    _echo_config(scenario, out)

    # Pooled latency CDF across seeds, one curve per scheduler.
    tick_ms = scenario.cfg.tick_ms
    cdfs = {}
    for sched in schedulers:
        lat = sorted(
            t
            for rec in by_sched[sched]
            for t in rec.flush_latency.values()
        )
        n_total = sum(rec.n_circuits for rec in by_sched[sched])
        steps = []
        for i, v in enumerate(lat, start=1):
            ms = v * tick_ms
            if steps and steps[-1][0] == ms:
                steps[-1] = (ms, i / n_total)
            else:
                steps.append((ms, i / n_total))
        cdfs[sched] = steps
    plots.plot_latency_cdf(
        cdfs, os.path.join(out, "latency_cdf.png"), title="flush latency"
    )
    series_fig = {}
    for sched in schedulers:
        rec = by_sched[sched][0]
        cfg0 = _seeded(scenario.cfg, seeds[0])
        series_fig[sched] = (
            [idx for idx, _ in rec.throughput_windows],
            metrics.throughput_series(rec, cfg0),
        )
    plots.plot_series(
        series_fig,
        "window index",
        "throughput (cells/ms)",
        os.path.join(out, "throughput.png"),
    )
    jain_fig = {
        sched: (
            list(range(len(seeds))),
            [
                metrics.jain_index(list(rec.shares.values()))
                for rec in by_sched[sched]
            ],
        )
        for sched in schedulers
    }
    plots.plot_series(
        jain_fig,
        "seed index",
        "Jain fairness index",
        os.path.join(out, "fairness.png"),
    )
    print(f"compare: {len(rows)} runs -> {out}")
    return 0


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.config)
    plan = scenario.plan
    schedulers = [args.scheduler] if args.scheduler else plan.schedulers
    seeds = [args.seed] if args.seed is not None else plan.seeds
    max_ticks = args.max_ticks or plan.max_ticks
    sweep = plan.sweep
    counts = list(range(sweep["min"], sweep["max"] + 1, sweep["step"]))
    if not counts:
        raise ConfigError(
            f"run.sweep yields no circuit counts "
            f"(min={sweep['min']}, max={sweep['max']}, step={sweep['step']})"
        )

    jobs = []
    keys = []
    for count in counts:
        specs = scenario.specs_for_total(count)
        for sched in schedulers:
            for seed in seeds:
                jobs.append(
                    (_seeded(scenario.cfg, seed), specs, sched, max_ticks)
                )
                keys.append((count, sched, seed))
    records = _run_many(jobs)

    agg: Dict[Tuple[int, str], dict] = {}
    for (count, sched, seed), (cfg, _, _, _), record in zip(
        keys, jobs, records
    ):
        slot = agg.setdefault(
            (count, sched), {"jain": [], "thpt": [], "p50": []}
        )
        slot["jain"].append(
            metrics.jain_index(list(record.shares.values()))
        )
        slot["thpt"].append(_mean(metrics.throughput_series(record, cfg)))
        p50 = metrics.latency_percentile(record, 50)
        if p50 is not None:
            slot["p50"].append(p50 * cfg.tick_ms)

    out = args.out
    os.makedirs(out, exist_ok=True)
    rows = []
    for count in counts:
        for sched in schedulers:
            slot = agg[(count, sched)]
            rows.append(
                [
                    count,
                    sched,
                    _mean(slot["jain"]),
                    _mean(slot["thpt"]),
                    _mean(slot["p50"]) if slot["p50"] else None,
                ]
            )
    _write_csv(
        os.path.join(out, "sweep.csv"),
        ["circuit_count", "scheduler", "jain", "mean_throughput", "latency_p50"],
        rows,
    )
    _echo_config(scenario, out)

    # Two-column plot data, one file per (metric, scheduler).
    metrics_map = {"jain": 2, "throughput": 3, "latency_p50": 4}
    for metric, col in metrics_map.items():
        for sched in schedulers:
            path = os.path.join(out, f"{metric}_{sched}.dat")
            with open(path, "w", encoding="utf-8") as fh:
                for row in rows:
                    if row[1] == sched and row[col] is not None:
                        fh.write(f"{row[0]} {_fmt(row[col])}\n")
    for metric, col, ylabel, fname in [
        ("jain", 2, "Jain fairness index", "sweep_jain.png"),
        ("throughput", 3, "mean throughput (cells/ms)", "sweep_throughput.png"),
        ("latency_p50", 4, "latency p50 (ms)", "sweep_latency_p50.png"),
    ]:
        series = {}
        for sched in schedulers:
            xs = [r[0] for r in rows if r[1] == sched and r[col] is not None]
            ys = [r[col] for r in rows if r[1] == sched and r[col] is not None]
            series[sched] = (xs, ys)
        plots.plot_series(
            series, "circuit count", ylabel, os.path.join(out, fname)
        )
    print(f"sweep: counts {counts} x {schedulers} -> {out}")
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="circuitsched",
        description="Relay circuit-scheduler simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", cmd_simulate),
        ("compare", cmd_compare),
        ("sweep", cmd_sweep),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="scenario YAML file")
        p.add_argument(
            "--scheduler",
            default=None,
            help=f"scheduler name ({', '.join(SCHEDULER_NAMES)})",
        )
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument(
            "--max-ticks", type=int, default=None, help="override max ticks"
        )
        p.set_defaults(fn=fn)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.max_ticks is not None and args.max_ticks <= 0:
            raise ConfigError("--max-ticks must be positive")
        if args.seed is not None and not (0 <= args.seed < 2**64):
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.scheduler is not None and args.scheduler not in SCHEDULER_NAMES:
            raise ConfigError(
                f"unknown scheduler {args.scheduler!r}; valid names: "
                f"{', '.join(SCHEDULER_NAMES)}"
            )
        return args.fn(args)
    except (ConfigError, UnknownSchedulerError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure, not a usage problem
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
