"""Training loop, evaluation, ablation runner and latency profiling."""

from __future__ import annotations

import csv
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .ammi import MotionStats
from .config import VARIANTS, ModelConfig, TrainConfig
from .data.clips import ClipDataset, class_weights
from .metrics import MetricsReport, compute_metrics
from .model import AcitModel, Batch
from .optim import AdamState, adam_step
from .rng import make_rng
from .tensor import ConfigError, NumericError, Tape, add
from .tfa import l2_penalty, weighted_bce

log = logging.getLogger(__name__)

EPOCH_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc", "val_auc", "val_f1",
                 "val_precision", "val_recall")
METRIC_COLUMNS = ("acc", "auc", "f1", "precision", "recall")


def fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def objective(model: AcitModel, batch: Batch, w_pos: float, w_neg: float, l2: float,
              training: bool, rng: np.random.Generator | None):
    logits = model.forward(batch, training=training, rng=rng)
    loss = weighted_bce(logits, batch.labels, w_pos, w_neg)
    penalty = l2_penalty(model.regularized_weights(), l2)
    return loss if penalty is None else add(loss, penalty)


def predict(model: AcitModel, ds: ClipDataset, batch_size: int = 32) -> np.ndarray:
    out = [model.predict_proba(ds.batch(range(i, min(i + batch_size, len(ds)))))
           for i in range(0, len(ds), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def dataset_loss(model: AcitModel, ds: ClipDataset, w_pos: float, w_neg: float,
                 batch_size: int = 32) -> float:
    total = 0.0
    for i in range(0, len(ds), batch_size):
        idx = range(i, min(i + batch_size, len(ds)))
        b = ds.batch(idx)
        total += weighted_bce(model.forward(b), b.labels, w_pos, w_neg).item() * len(idx)
    return total / max(len(ds), 1)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


@dataclass
class TrainResult:
    model: AcitModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_score: float = float("-inf")
    weights: tuple[float, float] = (1.0, 1.0)
    batch_trace: list[list[int]] = field(default_factory=list)


def train(model: AcitModel, train_ds: ClipDataset, val_ds: ClipDataset, cfg: TrainConfig,
          record_batches: bool = False) -> TrainResult:
    """Adam on weighted BCE (+ L2 on the head); keeps the best-validation-AUC weights."""
    if len(train_ds) == 0:
        raise ConfigError("training split is empty")
    if len(val_ds) == 0:
        raise ConfigError("validation split is empty")
    n_pos, n_neg = train_ds.counts()
    w_pos, w_neg = class_weights(n_pos, n_neg) if cfg.class_weight_mode == "balanced" else (1.0, 1.0)
    model.stats = MotionStats.fit(train_ds.speeds())
    data_rng = make_rng(cfg.seed, "data")
    drop_rng = make_rng(cfg.seed, "dropout")
    params = dict(model.named_parameters())
    state = AdamState()
    result = TrainResult(model, weights=(w_pos, w_neg))
    best_state = model.state()
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        losses, sizes = [], []
        for b_i, idx in enumerate(epoch_batches(len(train_ds), cfg.batch_size, data_rng)):
            if record_batches:
                result.batch_trace.append([int(i) for i in idx])
            batch = train_ds.batch(idx)
            model.zero_grad()
            try:
                with Tape() as tape:
                    loss = objective(model, batch, w_pos, w_neg, cfg.l2, True, drop_rng)
                if not np.isfinite(loss.data):
                    raise NumericError("loss is not finite")
                tape.backward(loss)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch} batch {b_i}: {exc}") from exc
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            adam_step({n: p.data for n, p in params.items()}, grads, state, cfg.lr,
                      (cfg.beta1, cfg.beta2), cfg.eps)
            losses.append(loss.item())
            sizes.append(len(idx))
        train_loss = float(np.average(losses, weights=sizes))
        scores = predict(model, val_ds, cfg.eval_batch_size)
        report = compute_metrics(scores, val_ds.labels)
        val_loss = dataset_loss(model, val_ds, w_pos, w_neg, cfg.eval_batch_size)
        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
               **{f"val_{k}": getattr(report, k) for k in METRIC_COLUMNS}}
        result.history.append(row)
        log.info("epoch %d loss %.4f val_auc %s val_acc %.3f", epoch, train_loss, report.auc, report.acc)
        score = report.auc if report.auc is not None else -val_loss
        if score > result.best_score:
            result.best_score, result.best_epoch = score, epoch
            best_state = model.state()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state(best_state)
    return result


def evaluate(model: AcitModel, ds: ClipDataset, batch_size: int = 32) -> MetricsReport:
    start = time.perf_counter()
    scores = predict(model, ds, batch_size)
    elapsed = time.perf_counter() - start
    report = compute_metrics(scores, ds.labels)
    report.infer_ms_per_clip = 1000.0 * elapsed / max(len(ds), 1)
    report.n_params = model.num_parameters()
    return report


def write_history(path, history: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for row in history:
            w.writerow([fmt(row[c]) for c in EPOCH_COLUMNS])


def write_metrics(path, report: MetricsReport, label: str = "model") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("model", *METRIC_COLUMNS, "tp", "fp", "tn", "fn"))
        w.writerow((label, *(fmt(getattr(report, c)) for c in METRIC_COLUMNS),
                    report.tp, report.fp, report.tn, report.fn))


# ablation --------------------------------------------------------------------

@dataclass
class AblationRow:
    variant: str
    report: MetricsReport
    n_params: int
    best_epoch: int


def run_ablation(train_ds: ClipDataset, val_ds: ClipDataset, base: ModelConfig, cfg: TrainConfig,
                 eval_ds: ClipDataset | None = None,
                 variants: Iterable[str] = VARIANTS) -> list[AblationRow]:
    """Train every variant on identical data, seed and batch order; score on ``eval_ds`` (default val)."""
    eval_ds = val_ds if eval_ds is None else eval_ds
    rows = []
    for variant in variants:
        try:
            model = AcitModel(base.with_(variant=variant))
        except Exception as exc:
            raise ConfigError(f"cannot construct variant {variant!r}: {exc}") from exc
        result = train(model, train_ds, val_ds, cfg)
        report = compute_metrics(predict(model, eval_ds, cfg.eval_batch_size), eval_ds.labels)
        rows.append(AblationRow(variant, report, model.num_parameters(), result.best_epoch))
        log.info("variant %s auc %s acc %.3f", variant, report.auc, report.acc)
    return rows


def write_ablation(path, rows: list[AblationRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant", *METRIC_COLUMNS, "n_params", "best_epoch"))
        for r in rows:
            w.writerow((r.variant, *(fmt(getattr(r.report, c)) for c in METRIC_COLUMNS),
                        r.n_params, r.best_epoch))


# profiling -----------------------------------------------------------------------

@dataclass
class ProfileReport:
    median_ms: float
    n_params: int
    size_mb: float
    runs: int


def profile(model: AcitModel, sample: Batch, runs: int = 100, warmup: int = 5) -> ProfileReport:
    """Median single-clip forward latency plus the exact trainable parameter count."""
    for _ in range(warmup):
        model.forward(sample)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        model.forward(sample)
        times.append(time.perf_counter() - t0)
    n = model.num_parameters()
    bytes_ = sum(p.data.nbytes for p in model.parameters())
    return ProfileReport(1000.0 * statistics.median(times), n, bytes_ / 2**20, runs)


def write_profile(path: Path, rep: ProfileReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("median_ms_per_clip", "n_params", "size_mb", "runs"))
        w.writerow((fmt(rep.median_ms), rep.n_params, fmt(rep.size_mb), rep.runs))
