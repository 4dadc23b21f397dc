#!/usr/bin/env python3
"""Compare the candidate feature sets (parameters, log features, MAC count,
and their combinations) for the convolution, pooling, and linear layers,
printing a table of cross-validation and test scores per pipeline.

Usage:
    python scripts/feature_set_experiment.py --layerwise data.csv [--kinds conv2d,linear]
"""
import argparse

from joulecast.arch import LayerKind
from joulecast.dataset import SplitSpec, load_layerwise_csv
from joulecast.predict import run_feature_set_experiment

KINDS = {k.value.lower(): k for k in (LayerKind.CONV2D, LayerKind.MAXPOOL2D, LayerKind.LINEAR)}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--layerwise", required=True)
    parser.add_argument("--kinds", default="conv2d,maxpool2d,linear")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    records = load_layerwise_csv(args.layerwise)
    header = f"{'module':<10} {'feature set':<22} {'poly':<9} {'scaled':<6} {'model':<7} " \
             f"{'cv R2':<16} {'test R2':>8} {'test MSE':>10}"
    print(header)
    print("-" * len(header))
    for name in args.kinds.split(","):
        kind = KINDS[name.strip().lower()]
        rows = run_feature_set_experiment(records, kind, SplitSpec(seed=args.seed))
        for row in rows:
            cv = f"{row.cv.r2_mean:.3f} (+/-{row.cv.r2_std:.3f})"
            poly = row.poly.label if row.poly else ""
            print(f"{row.module.value:<10} {row.feature_set.label:<22} {poly:<9} "
                  f"{'y' if row.scaled else 'n':<6} {row.model:<7} {cv:<16} "
                  f"{row.test.r2:>8.4f} {row.test.mse:>10.2e}")


if __name__ == "__main__":
    main()
