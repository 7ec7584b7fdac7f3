#!/usr/bin/env python3
"""Per-group parameter counts, latency and size for the desk and wide configs."""

import argparse
import csv
from pathlib import Path

from acit import AcitModel, ModelConfig
from acit.model import zero_batch
from acit.train import profile

SHEET = Path(__file__).resolve().parents[1] / "docs" / "param_count_wide.csv"


def groups(model):
    out = {}
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        out[top] = out.get(top, 0) + p.data.size
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=100, help="timed forward passes per config")
    args = ap.parse_args()

    with open(SHEET, newline="") as fh:
        sheet_total = int(list(csv.DictReader(fh))[-1]["count"])

    for label, cfg in (("desk", ModelConfig.desk()), ("wide", ModelConfig.wide())):
        model = AcitModel(cfg)
        rep = profile(model, zero_batch(cfg), runs=args.runs)
        print(f"[{label}] C={cfg.channels} d={cfg.d_model}")
        for g, n in groups(model).items():
            print(f"  {g:10s} {n:>10d}")
        print(f"  {'total':10s} {rep.n_params:>10d}  ({rep.size_mb:.2f} MB, median {rep.median_ms:.2f} ms/clip)")
        if label == "wide":
            status = "matches" if rep.n_params == sheet_total else "DIFFERS FROM"
            print(f"  {status} hand layer-sum in {SHEET.name} ({sheet_total})")


if __name__ == "__main__":
    main()
