#!/usr/bin/env python3
"""Run the 8-config ablation grid ({duplicated, distinct views} x {label
processing on/off} x {dual loss on/off}) on one fixed synthetic set and
print per-config IOU medians plus the full-vs-duplicated comparison as
JSON."""

import argparse
import json

from trisegnet.experiments import ablation_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--work-dir", default="runs/ablation")
    args = ap.parse_args()
    result = ablation_grid(seeds=tuple(args.seeds), work_dir=args.work_dir)
    print(json.dumps(result, indent=1))


if __name__ == "__main__":
    main()
