"""Command line entry point: ``girsanov-verdict <task> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .harness import EXIT_FAIL, ConfigError, RunConfig, Task, canonical_json, emit, run, validate_config
from .mc import THREADS_ENV


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="girsanov-verdict",
        description="Decide whether a Girsanov density is a martingale or a uniformly integrable martingale.",
        epilog=f"{THREADS_ENV} sets the default worker count; it never changes the results.",
    )
    p.add_argument("task", choices=[t.command for t in Task])
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.add_argument("--csv", metavar="DIR", help="write tabular sections as CSV files into DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, help="number of simulated paths")
    p.add_argument("--dt", type=float, help="simulation step")
    p.add_argument("--workers", type=int, help="worker threads for simulation")
    return p


def _apply_overrides(data: dict, args) -> dict:
    data = dict(data)
    data["task"] = Task.parse(args.task).value
    mc = dict(data.get("mc", {}))
    if args.seed is not None:
        mc["seed"] = args.seed
    if args.paths is not None:
        mc["n_paths"] = args.paths
    if args.dt is not None:
        mc["dt"] = args.dt
    if mc:
        data["mc"] = mc
    return data


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        if not isinstance(data, dict):
            validate_config(data)
        cfg = RunConfig.from_dict(_apply_overrides(data, args))
    except ConfigError as exc:
        print(f"configuration error at {exc.pointer or '/'}: {exc.message}", file=sys.stderr)
        return EXIT_FAIL
    if args.workers is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, workers=args.workers))
    report = run(cfg)
    out = args.out or cfg.output.get("path")
    csv_dir = args.csv or cfg.output.get("csv_dir")
    try:
        emit(report, out, csv_dir, cfg.output.get("format", "json"))
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not out:
        sys.stdout.write(canonical_json(report.to_dict()))
    print(f"{report.task.value}: {report.status} ({report.timing:.2f} s)", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
