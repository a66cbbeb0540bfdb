"""Command line: ``simulate``, ``calibrate`` and ``topology-dump``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import experiment
from .collection import write_snapshot_csv
from .experiment import ExperimentConfig, TopologyKind


def _config(path) -> ExperimentConfig:
    return ExperimentConfig.from_json(path) if path else ExperimentConfig()


def _log(message):
    print(message, file=sys.stderr, flush=True)


def cmd_simulate(args) -> int:
    config = _config(args.config)
    overrides = {}
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    config = replace(config, **overrides)
    start = time.perf_counter()
    table = experiment.run(config, progress=lambda s: _log(f"seed {s} done"))
    summary = experiment.summarize(table, config.knee_jump, config.knee_window)
    paths = experiment.emit(table, summary, config.output_dir)
    elapsed = time.perf_counter() - start
    print("topology,algorithm,first_death,whole_network_death,knee,terminal_error")
    for c in summary.curves:
        knee = "" if c.knee is None else c.knee
        print(f"{c.topology},{c.algorithm},{c.first_death:.2f},{c.whole_network_death:.2f},"
              f"{knee},{c.terminal_error:.4f}")
    for name, path in paths.items():
        _log(f"wrote {name}: {path}")
    _log(f"{len(table)} rows in {elapsed:.1f}s")
    return 0


def _numbers(text):
    return [float(p) for p in text.split(",")]


def cmd_calibrate(args) -> int:
    config = _config(args.config)
    targets = _numbers(args.targets)
    if len(targets) != 4:
        raise ValueError("--targets needs four comma-separated values")
    bounds = tuple(_numbers(args.bounds))
    if len(bounds) != 2:
        raise ValueError("--bounds needs two comma-separated values")
    report = experiment.calibrate(targets, bounds, config, seeds=args.seeds,
                                  tolerance=args.tolerance, fragment_path=args.out)
    for line in report.lines():
        print(line)
    if report.success:
        _log(f"wrote config fragment: {args.out}")
        return 0
    _log("error: calibration failed")
    return 1


def cmd_topology_dump(args) -> int:
    from .plotting import topology_chart
    from .topology import write_topology_csv

    config = _config(args.config)
    kind = TopologyKind(args.kind)
    if args.steps < 0:
        raise ValueError("--steps must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"topology_{kind.value}_seed{args.seed}"
    fleet, plan = experiment.initial_network(config, args.seed, kind)
    if args.steps:
        snapshots = []
        stepped = replace(config, t_max=args.steps - 1)
        for _, snap, fleet, _, plan in experiment.simulate_network(stepped, args.seed, kind):
            snapshots.append(snap)
        path = write_snapshot_csv(snapshots, fleet, out / f"{stem}_snapshots.csv")
        print(f"snapshots: {path}")
    print(f"topology: {write_topology_csv(plan, fleet, out / f'{stem}.csv')}")
    print(f"figure: {topology_chart(plan, fleet, out / f'{stem}.svg')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsnphm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the experiment and write CSVs and charts")
    sim.add_argument("--config", help="JSON config mirroring ExperimentConfig (defaults if omitted)")
    sim.add_argument("--seeds", type=int, help="override the number of seeds")
    sim.add_argument("--out", help="output directory (overrides output_dir)")
    sim.add_argument("--workers", type=int, help="worker processes; 0 means one per CPU")
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", help="fit the radio scale to first-death targets")
    cal.add_argument("--targets", required=True,
                     help="first-death steps: centralized,hierarchical,distributed,decentralized")
    cal.add_argument("--config", help="base JSON config")
    cal.add_argument("--bounds", default="0,20", help="scale search interval lo,hi")
    cal.add_argument("--seeds", type=int, default=5, help="seeds averaged per evaluation")
    cal.add_argument("--tolerance", type=float, default=2.0)
    cal.add_argument("--out", default="calibration.json", help="config fragment to write")
    cal.set_defaults(func=cmd_calibrate)

    dump = sub.add_parser("topology-dump", help="write one topology as CSV and a figure")
    dump.add_argument("--kind", required=True, choices=[k.value for k in TopologyKind])
    dump.add_argument("--seed", type=int, required=True, help="seed index")
    dump.add_argument("--config", help="JSON config")
    dump.add_argument("--steps", type=int, default=0,
                      help="simulate this many steps first and also write per-step snapshots")
    dump.add_argument("--out", default=".", help="output directory")
    dump.set_defaults(func=cmd_topology_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
