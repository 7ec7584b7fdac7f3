#!/usr/bin/env python3
"""Train the full model and all five variants on one synthetic dataset and write the comparison table."""

import argparse
import logging

from acit import ModelConfig, TrainConfig, VARIANTS
from acit.data.clips import build_split
from acit.train import run_ablation, write_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-clips", type=int, default=800)
    ap.add_argument("--val-clips", type=int, default=200)
    ap.add_argument("--test-clips", type=int, default=0, help="score on a held-out split instead of val")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", default=",".join(VARIANTS))
    ap.add_argument("--out", default="ablation.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    train_ds = build_split(args.seed, "train", args.train_clips)
    val_ds = build_split(args.seed, "val", args.val_clips)
    test_ds = build_split(args.seed, "test", args.test_clips) if args.test_clips else None
    rows = run_ablation(train_ds, val_ds, ModelConfig.desk(seed=args.seed),
                        TrainConfig.desk(epochs=args.epochs, seed=args.seed), test_ds,
                        args.variants.split(","))
    write_ablation(args.out, rows)
    print(f"{'variant':8s} {'acc':>7s} {'auc':>7s} {'f1':>7s} {'params':>8s}")
    for r in rows:
        auc, f1 = (float("nan") if v is None else v for v in (r.report.auc, r.report.f1))
        print(f"{r.variant:8s} {r.report.acc:7.4f} {auc:7.4f} {f1:7.4f} {r.n_params:8d}")


if __name__ == "__main__":
    main()
