"""Training loop, evaluation metrics and the finite-difference gradient check."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from signbart.errors import ContractError, NumericError, ParameterError, SchemaError
from signbart.model import ModelConfig, SignBart, forward_logits
from signbart.numerics import (
    LrSchedule,
    OptimizerState,
    Tape,
    Tensor,
    adamw_step,
    log_softmax_last_dim,
    lr_at,
)
from signbart.skeleton import Batch, KeypointLayout, SkeletonSequence, pad_batch

log = logging.getLogger(__name__)

RUN_LOG_KEYS = ("epoch", "train_loss", "train_acc", "val_top1", "val_top5", "lr", "seconds")


@dataclass
class TrainConfig:
    batch_size: int = 128
    base_lr: float = 2e-4
    weight_decay: float = 1e-2
    epochs: int = 30
    warmup_fraction: float = 0.1
    min_lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # wall-clock seconds make the run log non-reproducible, so they are opt-in
    record_time: bool = False

    def __post_init__(self):
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise SchemaError(f"train.batch_size must be >= 1, got {self.batch_size!r}")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise SchemaError(f"train.epochs must be >= 1, got {self.epochs!r}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise SchemaError(f"train.warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")
        if self.base_lr <= 0:
            raise SchemaError(f"train.base_lr must be positive, got {self.base_lr}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise SchemaError(f"unknown train config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    final_params: dict[str, np.ndarray]
    best_epoch: int
    best_val_top1: float
    run_log: list[dict]
    steps: int


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ContractError(f"expected {b} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ContractError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    one_hot = np.zeros((b, c))
    one_hot[np.arange(b), labels] = -1.0 / b
    return (log_softmax_last_dim(logits) * one_hot).sum()


def true_label_ranks(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """0-based rank of each true label; ties go to the lower class index."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    p_true = probs[np.arange(len(labels)), labels][:, None]
    classes = np.arange(probs.shape[1])[None, :]
    ahead = (probs > p_true) | ((probs == p_true) & (classes < labels[:, None]))
    return ahead.sum(axis=1)


def recall_at_k(probs: np.ndarray, labels: np.ndarray, k_values: Sequence[int]) -> dict[int, float]:
    if len(labels) == 0:
        raise ParameterError("cannot compute recall on an empty dataset")
    c = np.asarray(probs).shape[1]
    for k in k_values:
        if not 1 <= k <= c:
            raise ParameterError(f"k={k} outside [1, {c}]")
    ranks = true_label_ranks(probs, labels)
    return {k: float(np.mean(ranks < k)) for k in k_values}


def _batches(seqs: Sequence[SkeletonSequence], batch_size: int, max_len: int):
    for start in range(0, len(seqs), batch_size):
        yield pad_batch(seqs[start:start + batch_size], max_len=max_len)


def predict_proba(model: SignBart, seqs: Sequence[SkeletonSequence], batch_size: int = 64) -> np.ndarray:
    if not seqs:
        raise ParameterError("cannot predict on an empty dataset")
    out = [model.predict_proba(b) for b in _batches(seqs, batch_size, model.config.max_len)]
    return np.concatenate(out, axis=0)


def evaluate(model: SignBart, seqs: Sequence[SkeletonSequence], k_values: Sequence[int] = (1, 5),
             batch_size: int = 64) -> dict[int, float]:
    if not seqs:
        raise ParameterError("cannot evaluate on an empty dataset")
    probs = predict_proba(model, seqs, batch_size)
    return recall_at_k(probs, np.array([s.label for s in seqs]), k_values)


def dataset_loss(model: SignBart, seqs: Sequence[SkeletonSequence], batch_size: int = 64) -> float:
    """Eval-mode mean cross-entropy over a dataset."""
    total = 0.0
    for batch in _batches(seqs, batch_size, model.config.max_len):
        total += cross_entropy(model.logits(batch), batch.labels).item() * len(batch)
    return total / len(seqs)


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def train(model: SignBart, train_set: Sequence[SkeletonSequence], val_set: Sequence[SkeletonSequence],
          cfg: TrainConfig, on_epoch=None) -> TrainResult:
    """AdamW with cosine-warmup schedule; keeps the best-validation parameters."""
    if not train_set:
        raise ParameterError("training set is empty")
    if not val_set:
        raise ParameterError("validation set is empty")
    rng = np.random.default_rng(cfg.seed)
    n = len(train_set)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    schedule = LrSchedule.from_fraction(cfg.base_lr, cfg.epochs * steps_per_epoch,
                                        cfg.warmup_fraction, cfg.min_lr)
    state = OptimizerState.for_params(model.params, beta1=cfg.beta1, beta2=cfg.beta2,
                                      eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    top_k = [k for k in (1, 5) if k <= model.config.num_classes]
    run_log: list[dict] = []
    best, best_epoch, best_top1 = _snapshot(model.params), 0, -1.0
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        lr = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = pad_batch([train_set[i] for i in order[start:start + cfg.batch_size]],
                              max_len=model.config.max_len)
            lr = lr_at(schedule, step)
            with Tape() as tape:
                logits = forward_logits(batch, model.params, model.config, rng, training=True)
                loss = cross_entropy(logits, batch.labels)
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss at optimizer step {step}")
            tape.backward(loss)
            adamw_step(model.params, state, lr)
            model.zero_grad()
            step += 1
            loss_sum += loss.item() * len(batch)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == batch.labels))
        metrics = evaluate(model, val_set, top_k)
        record = {
            "epoch": epoch,
            "train_loss": loss_sum / n,
            "train_acc": correct / n,
            "val_top1": metrics[1],
            "val_top5": metrics.get(5),
            "lr": lr,
            "seconds": time.perf_counter() - started if cfg.record_time else None,
        }
        run_log.append(record)
        log.info("epoch %d loss %.4f acc %.3f val@1 %.3f", epoch, record["train_loss"],
                 record["train_acc"], record["val_top1"])
        if metrics[1] > best_top1:
            best, best_epoch, best_top1 = _snapshot(model.params), epoch, metrics[1]
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(best, _snapshot(model.params), best_epoch, best_top1, run_log, step)


def format_run_log(records: Sequence[dict]) -> str:
    return "".join(json.dumps({k: r[k] for k in RUN_LOG_KEYS}) + "\n" for r in records)


def write_run_log(path, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_run_log(records))


# -- gradient check ---------------------------------------------------------

TINY_CONFIG = dict(d_model=8, ff_dim=16, encoder_layers=1, decoder_layers=1, heads=2,
                   num_keypoints=5, num_classes=4, dropout=0.1, max_len=16)


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def worst(self) -> GradCheckEntry:
        return max(self.entries, key=lambda e: e.max_rel_err)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-5) -> float:
    """Max elementwise |a - b| / max(|a|, |b|, floor)."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def gradcheck_batch(config: ModelConfig, seed: int = 0, batch_size: int = 2, frames: int = 3,
                    zero_input: bool = False) -> Batch:
    """Random coordinates with the last sequence one frame short (exercises padding)."""
    rng = np.random.default_rng(seed)
    seqs = []
    for b in range(batch_size):
        t = frames if b < batch_size - 1 or frames == 1 else frames - 1
        coords = np.zeros((t, config.num_keypoints, 2)) if zero_input else rng.uniform(
            0.05, 0.95, size=(t, config.num_keypoints, 2))
        seqs.append(SkeletonSequence(coords, state="frame-normalized",
                                     label=int(rng.integers(config.num_classes)),
                                     layout=KeypointLayout((("keypoints", config.num_keypoints),))))
    return pad_batch(seqs)


def gradient_check(config: ModelConfig | None = None, tolerance: float = 1e-4, seed: int = 0,
                   h: float = 1e-6, batch: Batch | None = None) -> GradCheckReport:
    """Compare tape gradients of the eval-mode loss with central differences."""
    config = config or ModelConfig(**TINY_CONFIG)
    model = SignBart(config, seed=seed)
    batch = batch if batch is not None else gradcheck_batch(config, seed)

    def loss_value() -> float:
        return cross_entropy(forward_logits(batch, model.params, config), batch.labels).item()

    with Tape() as tape:
        loss = cross_entropy(forward_logits(batch, model.params, config), batch.labels)
    tape.backward(loss)
    report = GradCheckReport(tolerance)
    for name, p in model.params.items():
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * h)
        err = relative_error(analytic, numeric)
        report.entries.append(GradCheckEntry(name, err, err < tolerance))
    model.zero_grad()
    return report
