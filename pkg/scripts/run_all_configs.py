"""Run every shipped config through the CLI and report exit codes.

Configs whose name starts with ``bad_`` are expected to exit with status 2.
"""
import argparse
import sys
import time
from pathlib import Path

from harnacklab.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(args) -> int:
    failures = 0
    for cfg in sorted((ROOT / "configs").glob("*.toml")):
        if args.only and cfg.stem not in args.only:
            continue
        expect = 2 if cfg.stem.startswith("bad_") else 0
        t0 = time.perf_counter()
        rc = main(["run", "--config", str(cfg), "--out", str(Path(args.out) / cfg.stem),
                   "--threads", str(args.threads)])
        ok = rc == expect
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {cfg.stem:28s} exit {rc} (expected {expect}) "
              f"{time.perf_counter() - t0:7.1f} s", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out", help="parent output directory")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--only", nargs="*", help="config stems to run")
    sys.exit(run(ap.parse_args()))
