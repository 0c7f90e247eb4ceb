"""Command line entry point: ``dragonroute {run,sweep,summarize,validate-model}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness, scenarios
from .harness import ConfigError, ExperimentConfig
from .topology import TopologyConfig, build_topology

log = logging.getLogger("dragonroute")


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _emit(text: str, out: str | None, quiet: bool):
    if out:
        Path(out).write_text(text)
        if not quiet:
            print(f"wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _load(args)
    records = harness.run_experiment(cfg)
    _emit(harness.write_csv(records), args.out or cfg.output, args.quiet)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    records = harness.sweep(cfg)
    _emit(harness.write_csv(records, extra=["size_bytes"]), args.out or cfg.output, args.quiet)
    return 0


def cmd_summarize(args) -> int:
    if not args.input:
        raise ConfigError("summarize needs an input CSV")
    rows = harness.read_csv(args.input)
    group_by = [g for g in args.group_by.split(",") if g]
    missing = [g for g in group_by + [args.value] if rows and g not in rows[0]]
    if missing:
        raise ConfigError(f"column(s) not in input: {', '.join(missing)}")
    summary = harness.summarize(rows, group_by, args.value, args.baseline)
    _emit(harness.write_summary(summary, group_by), args.out, args.quiet)
    return 0


def cmd_validate_model(args) -> int:
    topo = None
    if args.config:
        data = json.loads(Path(args.config).read_text())
        topo = build_topology(TopologyConfig(**data.get("topology", data)))
    report = scenarios.model_fidelity(topology=topo, seed=args.seed or 0, mode=args.mode)
    lines = ["size_bytes,f,p,L_cycles,s_per_flit,measured_cycles,predicted_cycles,rel_error"]
    for pt in report.points:
        lines.append(f"{pt.size},{pt.f},{pt.p},{pt.L:.6f},{pt.s:.6f},{pt.measured},"
                     f"{pt.predicted:.6f},{pt.rel_error:.6f}")
    _emit(harness.CSV_VERSION + "\n" + "\n".join(lines) + "\n", args.out, args.quiet)
    if not args.quiet:
        print(f"pearson r = {report.correlation:.4f}, max relative error = "
              f"{report.max_rel_error:.1%}", file=sys.stderr)
    return 0 if report.correlation >= 0.9 and report.max_rel_error <= 0.2 else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    parser = argparse.ArgumentParser(prog="dragonroute",
                                     description="Dragonfly routing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one experiment").set_defaults(fn=cmd_run)
    sub.add_parser("sweep", parents=[common],
                   help="cartesian product over sweep.sizes and sweep.modes").set_defaults(fn=cmd_sweep)
    p = sub.add_parser("summarize", parents=[common], help="CSV in, summary CSV out")
    p.add_argument("input", nargs="?", help="records CSV")
    p.add_argument("--group-by", default="mode", help="comma separated columns")
    p.add_argument("--value", default="t_msg_cycles")
    p.add_argument("--baseline", default="ADAPTIVE_0", help="mode used for normalization")
    p.set_defaults(fn=cmd_summarize)
    p = sub.add_parser("validate-model", parents=[common],
                       help="compare the transmission-time model with simulation")
    p.add_argument("--mode", default="MIN_HASH")
    p.set_defaults(fn=cmd_validate_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
