"""Run the convergence lab at full size and print one line per check."""
import argparse
import json
import os
import sys

from steinbridge import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/convlab")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--order", choices=["proof", "main"], default="proof", help="bridge update order")
    args = ap.parse_args()
    code = cli.main(["convlab", "--out", args.out, "--set", f"seed={args.seed}",
                     "--set", f'convlab.prop1_order="{args.order}"'])
    with open(os.path.join(args.out, "convlab_summary.json")) as fh:
        summary = json.load(fh)
    for name in ("prop1", "zoo", "thm4", "thm3"):
        if name in summary:
            print(f"{name:6s} {'ok' if summary[name]['passed'] else 'FAILED'}")
    p1 = summary.get("prop1")
    if p1:
        for key, e in p1["etas"].items():
            print(f"  eta={key}: max step ratio {e['max_step_ratio']:.4f}, tail rate {e['tail_rate']:.4f}, "
                  f"bound {e['bound']:.4f}")
    return code


if __name__ == "__main__":
    sys.exit(main())
