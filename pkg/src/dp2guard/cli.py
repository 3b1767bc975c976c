"""Command line entry points: run one experiment, verify a ledger file, or
sweep a config field across values."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import (
    ExperimentConfig,
    plot_ratio_sweep,
    run_experiment,
)
from .ledger import verify_file


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dp2guard",
                                     description="Masked dual-server federated "
                                                 "learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True, help="experiment JSON file")
    p_run.add_argument("--out", required=True, help="output directory")

    p_verify = sub.add_parser("verify-ledger", help="check a ledger file's hash chain")
    p_verify.add_argument("path", help="ledger.jsonl to verify")

    p_sweep = sub.add_parser("sweep", help="run a config across several values")
    p_sweep.add_argument("--config", required=True, help="base experiment JSON file")
    p_sweep.add_argument("--vary", required=True,
                         help="field=v1,v2,... (e.g. adv_ratio=0,0.1,0.2)")
    p_sweep.add_argument("--out", required=True, help="output directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify-ledger":
            return _cmd_verify(args)
        return _cmd_sweep(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    result = run_experiment(cfg, out_dir=args.out)
    last = result.metrics[-1]
    print(f"{cfg.aggregator} on {cfg.dataset}: "
          f"final accuracy {last.accuracy:.4f} after {cfg.rounds} rounds")
    print(f"artifacts in {args.out}/")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    bad = verify_file(args.path)
    if bad is None:
        print("ok")
        return 0
    print(f"first bad block index: {bad}")
    return 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    field, _, values = args.vary.partition("=")
    if not values:
        raise ConfigError("--vary expects field=v1,v2,...")
    names = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if field not in names:
        raise ConfigError(f"unknown config field {field!r}")
    base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    points = []
    for raw in values.split(","):
        value = json.loads(raw)
        cfg = ExperimentConfig.from_dict({**base, field: value})
        sub_dir = out_root / f"{field}={raw}"
        result = run_experiment(cfg, out_dir=sub_dir)
        final = result.metrics[-1].accuracy
        points.append((float(value), final))
        print(f"{field}={raw}: final accuracy {final:.4f}")
    plot_ratio_sweep({f"{base.get('aggregator', 'dp2guard')}": points},
                     out_root / "sweep.svg")
    print(f"sweep plot in {out_root / 'sweep.svg'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
