#!/usr/bin/env python3
"""Run the 5%-labels comparison: full pipeline vs budget-matched supervised
baseline, one paired run per seed. Prints the per-seed IOU table and the
median advantage as JSON."""

import argparse
import json

from trisegnet.experiments import low_label_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--work-dir", default="runs/low_label")
    args = ap.parse_args()
    result = low_label_experiment(seeds=tuple(args.seeds), work_dir=args.work_dir)
    print(json.dumps(result, indent=1))


if __name__ == "__main__":
    main()
