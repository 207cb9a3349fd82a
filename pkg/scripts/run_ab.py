"""Repeat the CLI A/B experiment over several master seeds and tabulate the outcomes."""

import argparse
import contextlib
import json
import sys
from pathlib import Path

from dimbid.cli import main as dimbid

FIELDS = ("positive_roas", "median_roas_delta", "sign_test_pvalue")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--env", default=str(Path(__file__).resolve().parents[1] / "configs" / "two_dim.env"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--replications", type=int)
    ap.add_argument("--out", type=Path, default=Path("out/ab"))
    args = ap.parse_args()
    extra = ["--replications", str(args.replications)] if args.replications else []
    print("seed," + ",".join(FIELDS) + ",median_ecpm_delta")
    for seed in args.seeds:
        out = args.out / f"seed{seed}"
        with contextlib.redirect_stdout(sys.stderr):
            code = dimbid(["--seed", str(seed), "--out", str(out), "experiment", "--env", args.env, *extra])
        if code:
            sys.exit(code)
        s = json.loads((out / "summary.json").read_text())
        print(f"{seed}," + ",".join(str(s[f]) for f in FIELDS) + f",{s['median_replication']['ecpm_delta']}")


if __name__ == "__main__":
    main()
