"""Command-line interface: ``acit <subcommand> ...``.

Exit codes: 0 success, 1 usage/config error, 2 data/format error,
3 numeric failure (non-finite loss or activation).
"""

from __future__ import annotations

import argparse
import functools
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import tsr
from .ammi import MotionStats, ValidationError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import VARIANTS, ModelConfig, TrainConfig, config_keys
from .data.clips import CLIP_LEN, ClipDataset, build_scenario_splits, build_split
from .data.manifest import (MANIFEST_NAME, SPLITS, ManifestError, load_split, read_manifest,
                            write_dataset)
from .encoder_stub import MODALITIES, load_features
from .model import AcitModel, Batch, shape_trace
from .settings import parse_kv, typed_update
from .tensor import ConfigError, DimensionError, NumericError
from .train import evaluate, run_ablation, train, write_ablation, write_history, write_metrics

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("acit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# settings ----------------------------------------------------------------------

def load_settings(path: str | None, overrides: list[str], seed: int | None = None
                  ) -> tuple[ModelConfig, TrainConfig]:
    """Config file, then ``--set key=value`` overrides, then ``--seed``.

    Keys are ModelConfig or TrainConfig field names; ``seed`` sets both.
    Anything else is an error.
    """
    values: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        values.update(parse_kv(text, path))
    for item in overrides:
        values.update(parse_kv(item, "--set"))
    if seed is not None:
        values["seed"] = str(seed)
    model_keys, train_keys = set(config_keys(ModelConfig)), set(config_keys(TrainConfig))
    unknown = sorted(set(values) - model_keys - train_keys)
    if unknown:
        raise ConfigError(f"unknown setting(s): {', '.join(unknown)}")
    mcfg = typed_update(ModelConfig(), {k: v for k, v in values.items() if k in model_keys})
    tcfg = typed_update(TrainConfig.desk(), {k: v for k, v in values.items() if k in train_keys})
    return mcfg, tcfg


def _add_settings(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting (repeatable)")
    p.add_argument("--seed", type=int, help="seed for initialisation, batching and dropout")


def _require_checkpoint(path: str | None) -> AcitModel:
    if path is None:
        raise UsageError("--checkpoint is required")
    ckpt = Path(path)
    if not (ckpt / "index.tsv").is_file():
        raise UsageError(f"no checkpoint found at {ckpt}")
    return load_checkpoint(ckpt)


def _splits_summary(splits: dict[str, ClipDataset]) -> list[str]:
    lines = []
    for name in SPLITS:
        ds = splits.get(name, ClipDataset([]))
        pos, neg = ds.counts()
        frac = pos / len(ds) if len(ds) else float("nan")
        lines.append(f"{name}\tclips={len(ds)}\tpos={pos}\tneg={neg}\tpos_frac={frac:.3f}")
    return lines


# subcommands ---------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise UsageError(f"{out} is not empty; pass --force to overwrite")
        for name in (*SPLITS, MANIFEST_NAME):
            target = out / name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
    if args.clips:
        try:
            counts = [int(x) for x in args.clips.split(",")]
        except ValueError:
            raise UsageError("--clips expects TRAIN,VAL,TEST integers") from None
        if len(counts) != 3 or min(counts) < 0:
            raise UsageError("--clips expects three non-negative integers")
        splits = {name: build_split(args.seed, name, n) for name, n in zip(SPLITS, counts)}
    else:
        if args.n_scenarios < 1:
            raise UsageError("--n-scenarios must be >= 1")
        splits = build_scenario_splits(args.n_scenarios, args.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out, splits)
    for line in _splits_summary(splits):
        print(line)
    return EXIT_OK


def cmd_train(args) -> int:
    mcfg, tcfg = load_settings(args.config, args.set, args.seed)
    if args.epochs is not None:
        tcfg = tcfg.with_(epochs=args.epochs)
    train_ds = load_split(args.data, "train", mcfg.channels)
    val_ds = load_split(args.data, "val", mcfg.channels)
    model = AcitModel(mcfg)
    if tcfg.epochs == 0:
        model.stats = MotionStats.fit(train_ds.speeds())
        history = []
    else:
        history = train(model, train_ds, val_ds, tcfg).history
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint", model)
    write_history(out / "history.csv", history)
    report = evaluate(model, val_ds, tcfg.eval_batch_size)
    write_metrics(out / "val_metrics.csv", report, mcfg.variant)
    print(f"checkpoint\t{out / 'checkpoint'}")
    _print_report(report)
    return EXIT_OK


def _print_report(report) -> None:
    for key in ("acc", "auc", "f1", "precision", "recall"):
        v = getattr(report, key)
        print(f"{key}\t{'NA' if v is None else f'{v:.4f}'}")


def cmd_eval(args) -> int:
    model = _require_checkpoint(args.checkpoint)
    ds = load_split(args.data, args.split, model.config.channels)
    if len(ds) == 0:
        raise ManifestError(f"split {args.split!r} is empty")
    report = evaluate(model, ds)
    _print_report(report)
    print(f"clips\t{len(ds)}")
    if args.out:
        write_metrics(args.out, report, model.config.variant)
    return EXIT_OK


def cmd_ablate(args) -> int:
    mcfg, tcfg = load_settings(args.config, args.set, args.seed)
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variant(s) {bad}; expected {VARIANTS}")
    train_ds = load_split(args.data, "train", mcfg.channels)
    val_ds = load_split(args.data, "val", mcfg.channels)
    test_ds = load_split(args.data, "test", mcfg.channels)
    rows = run_ablation(train_ds, val_ds, mcfg, tcfg, test_ds if len(test_ds) else None, variants)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_ablation(args.out, rows)
    for r in rows:
        auc = "NA" if r.report.auc is None else f"{r.report.auc:.4f}"
        print(f"{r.variant}\tacc={r.report.acc:.4f}\tauc={auc}\tparams={r.n_params}")
    return EXIT_OK


def _clip_motion(clip_dir: Path, manifest: str | None) -> tuple[np.ndarray, np.ndarray]:
    if manifest is None and (clip_dir / "speed.tsr").is_file() and (clip_dir / "bbox.tsr").is_file():
        speed, bbox = tsr.read(clip_dir / "speed.tsr"), tsr.read(clip_dir / "bbox.tsr")
        if speed.shape != (CLIP_LEN, 1) or bbox.shape != (CLIP_LEN, 4):
            raise DimensionError(f"motion files in {clip_dir} must be ({CLIP_LEN},1) and ({CLIP_LEN},4)")
        return speed.astype(np.float64), bbox.astype(np.float64)
    path = Path(manifest) if manifest else clip_dir.parent.parent / MANIFEST_NAME
    if not path.is_file():
        raise ManifestError(f"no motion data for {clip_dir}: expected speed.tsr/bbox.tsr or {path}")
    for rec in read_manifest(path).records:
        if rec.clip_id == clip_dir.name:
            return rec.speed, rec.bbox
    raise ManifestError(f"clip {clip_dir.name} not listed", path=path)


def cmd_infer(args) -> int:
    if args.untrained:
        mcfg, _ = load_settings(args.config, args.set, args.seed)
        model = AcitModel(mcfg)
    else:
        model = _require_checkpoint(args.checkpoint)
    cfg = model.config
    clip_dir = Path(args.clip)
    if not clip_dir.is_dir():
        raise UsageError(f"clip directory {clip_dir} does not exist")
    maps = {m: load_features(clip_dir / f"{m}.tsr", m, cfg.seq_len, cfg.grid, cfg.channels).data[None]
            for m in MODALITIES}
    speed, bbox = _clip_motion(clip_dir, args.manifest)
    prob = float(model.predict_proba(Batch(**maps, speed=speed[None], bbox=bbox[None]))[0])
    print(f"probability\t{prob!r}")
    print(f"decision\t{'C' if prob >= 0.5 else 'NC'}")
    return EXIT_OK


def _dims(shape) -> str:
    return "x".join(str(s) for s in shape) if len(shape) else "scalar"


def cmd_inspect(args) -> int:
    if args.checkpoint:
        model = _require_checkpoint(args.checkpoint)
    else:
        mcfg, _ = load_settings(args.config, args.set, args.seed)
        if args.wide:
            mcfg = ModelConfig.wide(**{k: getattr(mcfg, k) for k in ("variant", "seed")})
        model = AcitModel(mcfg)
    trace = shape_trace(model)
    cfg = model.config
    print(f"variant\t{cfg.variant}")
    rows = [("visual_in", trace["visual_in"])]
    if "tokens" in trace:
        rows.append(("tokens", trace["tokens"]))
    rows.append(("F_L,F_G,F_M", trace["F_M"]))
    for key in ("fused", "encoder_input"):
        if key in trace:
            rows.append((key, trace[key]))
    rows.append(("logit", trace["logit"]))
    for name, shape in rows:
        suffix = " x3" if name.startswith("F_L") else ""
        print(f"{name}\t{_dims(shape)}{suffix}")
    print("chain\t" + " -> ".join(_dims(s) + (" x3" if n.startswith("F_L") else "")
                                    for n, s in rows[:-1]) + " -> 1")
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        groups[top] = groups.get(top, 0) + p.data.size
    for top, n in groups.items():
        print(f"params.{top}\t{n}")
    print(f"params.total\t{model.num_parameters()}")
    return EXIT_OK


# entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser = functools.partial(sub.add_parser, parents=[common])

    p = sub.add_parser("gen-data", help="generate a synthetic dataset (TSR files + manifest)")
    p.add_argument("--out", required=True)
    p.add_argument("--n-scenarios", type=int, default=200,
                   help="scenarios split 70/15/15 by scenario (default 200)")
    p.add_argument("--clips", metavar="TRAIN,VAL,TEST",
                   help="instead of --n-scenarios, generate exactly this many clips per split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on <data>/train, select on <data>/val")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    _add_settings(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print the five metrics for one split")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out", help="also write a metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train every variant and write the comparison table")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    _add_settings(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("infer", help="crossing probability for one clip directory")
    p.add_argument("--clip", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--manifest", help="manifest holding the clip's speed and bbox")
    p.add_argument("--untrained", action="store_true",
                   help="use a freshly initialised model (from --config/--set/--seed)")
    _add_settings(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("inspect", help="print the shape pipeline and parameter counts")
    p.add_argument("--checkpoint")
    p.add_argument("--wide", action="store_true", help="use the full widths (1024 channels, 256-wide tokens)")
    _add_settings(p)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (tsr.FormatError, ManifestError, ValidationError, DimensionError,
            CheckpointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
