"""Command line: ``wedgechain run`` and ``wedgechain verify-vectors``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import vectors
from .scenario import BASELINES, emit_csv, load_config, run_scenario
from .simnet import ConfigError


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.baseline is not None:
            cfg.baseline = args.baseline
        metrics = run_scenario(cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        paths = emit_csv(metrics, args.out)
    except OSError as exc:
        print(f"error: cannot write metrics: {exc}", file=sys.stderr)
        return 2
    s = metrics.summary
    print(
        f"{cfg.baseline} seed={cfg.seed}: {s['add_ops']} adds, {s['blocks_p1']} blocks P1 / {s['blocks_p2']} P2, "
        f"{s['verdicts']} verdicts, end {s['end_time_ms']:.1f} ms"
        + (" (stopped at limit_ms)" if metrics.truncated else "")
    )
    for p in paths:
        print(f"  wrote {p}")
    return 0


def _verify(args) -> int:
    failures = vectors.check_primitives() + vectors.check_samples()
    checked = len(vectors.SHA256_VECTORS) + len(vectors.ED25519_VECTORS) + len(vectors.sample_messages())
    d = Path(args.dir)
    if d.is_dir():
        n, more = vectors.check_dir(d)
        checked += n
        failures += more
    elif args.dir != "fixtures":
        print(f"error: no fixture directory at {d}", file=sys.stderr)
        return 2
    for f in failures:
        print(f"FAIL {f}")
    print(f"{checked} vectors checked, {len(failures)} failures")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wedgechain", description="WedgeChain simulation harness")
    parser.add_argument("-v", "--verbose", action="store_true", help="log protocol events to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write CSV metrics")
    run.add_argument("--config", required=True, help="scenario file (flat key = value)")
    run.add_argument("--out", required=True, help="output directory for CSV files")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--baseline", choices=BASELINES, help="override the protocol wiring")
    run.set_defaults(func=_run)

    ver = sub.add_parser("verify-vectors", help="check hash, signature and wire golden vectors")
    ver.add_argument("--dir", default="fixtures", help="fixture directory (default: ./fixtures)")
    ver.set_defaults(func=_verify)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
