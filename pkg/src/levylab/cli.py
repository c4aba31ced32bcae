"""Command line entry point.

    levylab <kind> --config FILE [--seed N] [--threads N] [--out DIR] [--self-check]
    levylab self-check
    levylab summary RESULT.csv
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, ConfigError, load_config
from .levy import MemoryBudgetError
from .runner import NonFiniteError, emit_summary, run
from .selfcheck import run_self_check


def _self_check() -> bool:
    ok = True
    for name, (passed, detail) in run_self_check().items():
        print(f"[{'ok' if passed else 'FAIL'}] {name}: {detail}")
        ok &= passed
    return ok


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levylab", description="Iterated Levy transformation experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", required=True, help="TOML experiment description")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--self-check", action="store_true", help="verify exact invariants first")
    sub.add_parser("self-check", help="verify exact invariants")
    sp = sub.add_parser("summary", help="digest of a finished run")
    sp.add_argument("csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "self-check":
        return 0 if _self_check() else 1
    if args.command == "summary":
        print(emit_summary(args.csv))
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if cfg.kind != args.command:
        print(f"kind: config describes {cfg.kind!r}, not {args.command!r}", file=sys.stderr)
        return 2
    over = {k: v for k, v in (("seed", args.seed), ("threads", args.threads), ("out", args.out)) if v is not None}
    if over.get("threads", 1) < 1 or not 0 <= over.get("seed", 0) < 2**64:
        print("threads must be positive and seed must fit in 64 unsigned bits", file=sys.stderr)
        return 2
    cfg = cfg.replace(**over)
    if args.self_check and not _self_check():
        return 1
    try:
        res = run(cfg)
    except (MemoryBudgetError, NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    print(emit_summary(res.csv_path))
    return 0


if __name__ == "__main__":
    sys.exit(main())
