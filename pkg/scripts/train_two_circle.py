"""Train every variant on Two-Circle over a few seeds and tabulate the final metrics."""
import argparse
import os
import sys

import numpy as np

from steinbridge import cli
from steinbridge.trainer import VARIANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/two_circle")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=VARIANTS)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--dataset", default="two-circle")
    args = ap.parse_args()
    cols = ["iteration", "mmd", "hsr", "kld", "jsd", "auc"]
    print("variant,seed," + ",".join(cols[1:]))
    worst = 0
    for variant in args.variants:
        for seed in args.seeds:
            out = os.path.join(args.out, variant.replace("+", "_"), f"seed{seed}")
            code = cli.main(["train", "--out", out, "--set", f"seed={seed}", "--set", f'train.variant="{variant}"',
                             "--set", f"train.iterations={args.iterations}",
                             "--set", f'data.dataset="{args.dataset}"'])
            worst = max(worst, code)
            if code:
                print(f"{variant},{seed},failed with exit code {code}")
                continue
            last = cli.read_csv(os.path.join(out, "metrics.csv"))[-1]
            print(f"{variant},{seed}," + ",".join(f"{v:.4f}" for v in last[1:]))
            sys.stdout.flush()
    return worst


if __name__ == "__main__":
    sys.exit(main())
