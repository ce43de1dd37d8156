#!/usr/bin/env python3
"""End-to-end study: collect expert data, fit PID, train the network, rank
the three machine policies, and benchmark them on the reconstructed courses.

Equivalent to running the CLI subcommands in sequence; useful as a single
reproducible experiment. All artifacts land under --out.
"""

import argparse
import os
import sys

from pathbench.cli import main as cli_main


def run(args: list[str]) -> None:
    print("+ pathbench " + " ".join(args))
    code = cli_main(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="study_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=120.0)
    ap.add_argument("--n", type=int, default=100, help="ranking draws")
    ap.add_argument("--repeats", type=int, default=5, help="benchmark repeats")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--config", default=None, help="vehicle parameter file")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    data = os.path.join(args.out, "expert_dataset.csv")
    model = os.path.join(args.out, "nn_mpc.json")
    gains = os.path.join(args.out, "pid_gains.json")
    cfg = ["--config", args.config] if args.config else []
    seed = ["--seed", str(args.seed)]

    run(["collect-expert", "--out", data, "--duration", str(args.duration)] + seed + cfg)
    run(["train-nn", "--data", data, "--out", model] + seed + cfg)
    run(["fit-pid", "--data", data, "--out", gains] + seed + cfg)
    policies = f"MPC=mpc,NN-MPC=nn:{model},PID=pid:{gains}"
    run(["rank", "--policies", policies, "--n", str(args.n),
         "--workers", str(args.workers), "--out", os.path.join(args.out, "rank")]
        + seed + cfg)
    run(["benchmark", "--policies", policies, "--paths", "1,2,3",
         "--repeats", str(args.repeats), "--workers", str(args.workers),
         "--out", os.path.join(args.out, "benchmark")] + seed + cfg)


if __name__ == "__main__":
    main()
