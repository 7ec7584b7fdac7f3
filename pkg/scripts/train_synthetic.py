#!/usr/bin/env python3
"""Train the desk model on freshly generated synthetic clips and report validation metrics."""

import argparse
import logging
import time
from pathlib import Path

from acit import AcitModel, ModelConfig, TrainConfig
from acit.checkpoint import save_checkpoint
from acit.data.clips import build_split
from acit.train import evaluate, train, write_history, write_metrics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-clips", type=int, default=800)
    ap.add_argument("--val-clips", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--variant", default="full")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="directory for checkpoint and CSVs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    t0 = time.perf_counter()
    train_ds = build_split(args.seed, "train", args.train_clips)
    val_ds = build_split(args.seed, "val", args.val_clips)
    print(f"data: {len(train_ds)} train / {len(val_ds)} val clips in {time.perf_counter() - t0:.0f}s")

    model = AcitModel(ModelConfig.desk(variant=args.variant, seed=args.seed))
    cfg = TrainConfig.desk(epochs=args.epochs, lr=args.lr, seed=args.seed)
    res = train(model, train_ds, val_ds, cfg)
    report = evaluate(model, val_ds)
    print(f"best epoch {res.best_epoch}: acc {report.acc:.4f} auc {report.auc:.4f} f1 {report.f1:.4f} "
          f"({model.num_parameters()} params, {time.perf_counter() - t0:.0f}s total)")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(args.out / "checkpoint", model)
        write_history(args.out / "history.csv", res.history)
        write_metrics(args.out / "val_metrics.csv", report, args.variant)


if __name__ == "__main__":
    main()
