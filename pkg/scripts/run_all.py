"""Run every experiment through the CLI at full scale and collect the
reports in one directory.

    python3 scripts/run_all.py --out-dir reports --seed 0
"""

import argparse
import sys
from pathlib import Path

from polyprotect.cli import main as cli


def run(argv):
    print("$ polyprotect " + " ".join(argv), flush=True)
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="reports")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dev", help="development corpus CSV (default: synthetic)")
    ap.add_argument("--eval", help="evaluation corpus CSV (default: synthetic)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--targets", type=int, default=50)
    args = ap.parse_args()

    out = Path(args.out_dir)
    common = ["--seed", str(args.seed), "--out-dir", str(out), "--workers", str(args.workers)]
    if args.dev:
        common += ["--dev", args.dev]
    if args.eval:
        common += ["--eval", args.eval]

    for scenario in ("baseline", "normal", "sce"):
        run(["eval-accuracy", *common, "--scenario", scenario])
    run(["attack-invert", *common, "--targets", str(args.targets)])
    run(["attack-arm", *common, "--overlaps", "2,3", "--targets", str(args.targets)])
    run(["derive-range", *common])
    for mode in ("baseline", "naive", "strict"):
        run(["eval-unlink", *common, "--mode", mode])


if __name__ == "__main__":
    main()
