#!/usr/bin/env python3
"""Feature-subset ablation for one layer kind: fit a standardized linear model
on every non-empty subset of {parameters, log-parameters, MAC count} and plot
the test scores split by MAC membership. For Conv2d this is 2^15 - 1 = 32767
fits.

Usage:
    python scripts/ablation_experiment.py --layerwise data.csv --out-dir ablation_run
    python scripts/ablation_experiment.py --synthetic --out-dir ablation_run
"""
import argparse
import os
import time

from joulecast.arch import LayerKind
from joulecast.dataset import SplitSpec, load_layerwise_csv
from joulecast.predict import run_ablation
from joulecast.report import ablation_artifact, write_ablation_csv

KINDS = {k.value.lower(): k for k in (LayerKind.CONV2D, LayerKind.MAXPOOL2D, LayerKind.LINEAR)}


def synthetic_records(kind, n=240, seed=7):
    # MAC-proportional world with 1% noise; see tests/conftest.py for the full version
    import numpy as np

    from joulecast.dataset import MeasurementRecord, sample_config
    from joulecast.macs import standalone_macs

    rng = np.random.default_rng(seed)
    ranges = {kind: {
        "batch_size": (1, 8), "image_size": (8, 64), "kernel_size": (1, 5),
        "in_channels": (1, 64), "out_channels": (1, 64), "stride": (1, 3), "padding": (0, 2),
    }}
    if kind is LayerKind.LINEAR:
        ranges = {kind: {"batch_size": (1, 64), "in_channels": (1, 2000), "out_channels": (1, 2000)}}
    records = []
    for _ in range(n):
        cfg = sample_config(kind, rng, ranges)
        macs = standalone_macs(cfg)
        energy = 3e-11 * macs * (1.0 + 0.01 * rng.standard_normal())
        records.append(MeasurementRecord(module=kind, config=cfg, macs=macs,
                                         cpu_energy_j=max(energy, 1e-12)))
    return records


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--layerwise", help="layer-wise measurement CSV")
    parser.add_argument("--synthetic", action="store_true", help="use a synthetic MAC-linear world")
    parser.add_argument("--kind", default="conv2d", choices=sorted(KINDS))
    parser.add_argument("--out-dir", default="ablation_run")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=os.cpu_count())
    args = parser.parse_args()

    kind = KINDS[args.kind]
    if args.synthetic:
        records = synthetic_records(kind)
    elif args.layerwise:
        records = [r for r in load_layerwise_csv(args.layerwise) if r.module is kind]
    else:
        parser.error("pass --layerwise CSV or --synthetic")

    os.makedirs(args.out_dir, exist_ok=True)
    start = time.perf_counter()
    rows = run_ablation(records, kind, SplitSpec(seed=args.seed), workers=args.workers)
    print(f"{len(rows)} subsets fitted in {time.perf_counter() - start:.1f}s")

    with_mac = [r.r2 for r in rows if "macs" in r.features]
    without = [r.r2 for r in rows if "macs" not in r.features]
    print(f"R2 with MAC count:    min {min(with_mac):.4f}  max {max(with_mac):.4f}")
    print(f"R2 without MAC count: min {min(without):.4f}  max {max(without):.4f}")
    best = max(rows, key=lambda r: r.r2)
    worst_mac = min((r for r in rows if "macs" in r.features), key=lambda r: r.r2)
    print(f"best subset: {'+'.join(best.features)} (R2 {best.r2:.4f})")
    print(f"weakest MAC-bearing subset: {'+'.join(worst_mac.features)} (R2 {worst_mac.r2:.4f})")

    csv_path = os.path.join(args.out_dir, f"ablation_{args.kind}.csv")
    write_ablation_csv(csv_path, rows)
    artifact = ablation_artifact(csv_path, args.out_dir)
    print(f"wrote {csv_path} and {artifact.svg_path}")


if __name__ == "__main__":
    main()
