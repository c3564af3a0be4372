"""Adam, the full-batch training loop and the multi-seed protocol."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import NonFiniteError, Tape
from .data_io import Dataset, make_splits
from .graph_core import normalized_adjacency
from .model import ModelSpec, Parameters, forward, init_params
from .rng import stream


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 100
    seeds: tuple[int, ...] = tuple(range(10))
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    train_per_class: int = 20
    val_per_class: int = 30

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.seeds:
            raise ValueError("at least one seed is required")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    test_acc: float


@dataclass
class RunMetrics:
    seed: int
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def final_test_acc(self) -> float:
        return self.records[-1].test_acc

    @property
    def best_val_epoch(self) -> int:
        best = max(r.val_acc for r in self.records)
        return next(r.epoch for r in self.records if r.val_acc == best)

    @property
    def best_val_test_acc(self) -> float:
        return self.records[self.best_val_epoch].test_acc

    @property
    def epochs_to_95pct_val(self) -> int:
        best = max(r.val_acc for r in self.records)
        return next(r.epoch for r in self.records if r.val_acc >= 0.95 * best)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, t: int, cfg: TrainConfig, decay_mask=None, names=None):
    """One bias-corrected Adam update, returning new parameter arrays.

    L2 decay is folded into the gradient before the moment update, skipping
    entries whose ``decay_mask`` flag is False (biases).
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    decay_mask = decay_mask or [True] * len(params)
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            label = names[k] if names else f"#{k}"
            raise NonFiniteError(f"non-finite gradient for parameter {label}")
        if cfg.weight_decay and decay_mask[k]:
            g = g + cfg.weight_decay * p
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / (1 - b1**t)
        v_hat = state.v[k] / (1 - b2**t)
        out.append(p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps))
    state.t = t
    return out


def evaluate(logits: np.ndarray, labels, mask) -> float:
    """Accuracy of row-argmax predictions on ``mask`` (ties go to the lowest class)."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("evaluate needs a non-empty mask")
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))


def _eval_record(epoch, spec, params, n, ds) -> EpochRecord:
    tape = Tape()
    fwd = forward(tape, spec, params, n, ds.features, training=False)
    logp = tape.value(fwd.logits)
    loss = -float(np.mean(logp[ds.train, ds.labels[ds.train]]))
    return EpochRecord(
        epoch,
        loss,
        evaluate(logp, ds.labels, ds.train),
        evaluate(logp, ds.labels, ds.val),
        evaluate(logp, ds.labels, ds.test),
    )


def train_run(spec: ModelSpec, ds: Dataset, cfg: TrainConfig, seed: int) -> RunMetrics:
    """Full-batch transductive training of one model from one seed.

    Record 0 evaluates the initial parameters; record e is the evaluation-mode
    pass after the e-th Adam step. ``train_loss`` is the evaluation-mode NLL
    on the training nodes.
    """
    if not ds.has_masks:
        raise ValueError("dataset has no train/val/test masks; call make_splits first")
    ds.validate()
    if min(ds.train.size, ds.val.size, ds.test.size) == 0:
        raise ValueError("train, val and test masks must all be non-empty")
    n = normalized_adjacency(ds.adjacency)
    params = init_params(spec, seed)
    drop_rng = stream(seed, "dropout")
    names = params.names()
    decay_mask = [not b for b in params.is_bias()]
    arrays = params.arrays()
    state = AdamState.zeros_like(arrays)

    metrics = RunMetrics(seed, [_eval_record(0, spec, params, n, ds)])
    for epoch in range(1, cfg.epochs + 1):
        try:
            tape = Tape()
            fwd = forward(tape, spec, params, n, ds.features, training=True, rng=drop_rng)
            loss = tape.masked_nll(fwd.logits, ds.labels, ds.train)
            tape.backward(loss)
            grads = [tape.grad(i) for i in fwd.param_ids]
            arrays = adam_step(arrays, grads, state, epoch, cfg, decay_mask, names)
            params = params.with_arrays(arrays)
            metrics.records.append(_eval_record(epoch, spec, params, n, ds))
        except (NonFiniteError, FloatingPointError) as exc:
            raise NonFiniteError(f"epoch {epoch}: {exc}") from exc
    return metrics


@dataclass
class RepeatResult:
    mean: float
    std: float
    runs: list[RunMetrics]

    @property
    def accuracies(self) -> list[float]:
        return [r.final_test_acc for r in self.runs]


def split_for_seed(ds: Dataset, cfg: TrainConfig, seed: int) -> Dataset:
    if ds.has_masks:
        return ds
    return make_splits(ds, cfg.train_per_class, cfg.val_per_class, seed)


def summarize(accuracies: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0.0 for a single value)."""
    accs = list(accuracies)
    if not accs:
        raise ValueError("no runs to summarize")
    mean = statistics.fmean(accs)
    std = statistics.stdev(accs) if len(accs) > 1 else 0.0
    return mean, std


def repeat_runs(spec: ModelSpec, ds: Dataset, cfg: TrainConfig) -> RepeatResult:
    """Train once per seed, in seed order.

    A dataset without masks is re-split for every seed from that seed's split
    stream, so all models trained with the same seed see the same split.
    """
    runs = [train_run(spec, split_for_seed(ds, cfg, s), cfg, s) for s in cfg.seeds]
    mean, std = summarize([r.final_test_acc for r in runs])
    return RepeatResult(mean, std, runs)
