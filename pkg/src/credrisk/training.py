"""Optimisation: supervised training, masked-feature pre-training, joint
fine-tuning schedules and k-fold ensembling."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
import torch
import torch.nn as nn

from .evaluation import auc, predict_proba
from .fusion import assemble_joint
from .losses import get_loss
from .nonseq import NonSeqDNN, init_nonseq
from .preprocess import ProcessedData
from .seq import SeqModel, init_seq, mlm_loss, mlm_mask

log = logging.getLogger(__name__)

SAMPLINGS = ("natural", "oversample_1_1")
SCHEDULES = ("separate_then_finetune", "end_to_end", "finetune_frozen")


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    batch_size: int = 1000
    epochs: int = 5
    loss: str = "wbce"
    sampling: str = "natural"
    label: str = "y_long"
    schedule: str = "separate_then_finetune"
    folds: int = 5
    seed: int = 0
    focal_gamma: float = 2.0
    focal_alpha: float | None = 0.25

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0:
            raise ValueError("lr and batch_size must be positive")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"sampling must be one of {SAMPLINGS}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    valid_auc: float


@dataclass
class TrainResult:
    model: nn.Module
    history: list[EpochMetrics]
    best_epoch: int

    @property
    def best_valid_auc(self) -> float:
        return self.history[self.best_epoch].valid_auc


class TrainingDiverged(RuntimeError):
    pass


def oversample_indices(labels, seed: int) -> np.ndarray:
    """Every negative once plus positives drawn with replacement up to the
    negative count, shuffled."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("oversampling needs both classes")
    rng = np.random.default_rng(seed)
    if len(pos) >= len(neg):
        # already balanced (or positive-heavy): keep the natural epoch
        idx = np.concatenate([neg, pos]) if len(pos) == len(neg) else \
            np.concatenate([pos, rng.choice(neg, len(pos), replace=True)])
    else:
        extra = rng.choice(pos, len(neg) - len(pos), replace=True)
        idx = np.concatenate([neg, pos, extra])
    return rng.permutation(idx)


def epoch_indices(labels, sampling: str, seed: int) -> np.ndarray:
    if sampling == "oversample_1_1":
        return oversample_indices(labels, seed)
    return np.random.default_rng(seed).permutation(len(labels))


def validation_auc(model: nn.Module, valid: ProcessedData, label: str, batch_size: int = 1000) -> float:
    return auc(predict_proba(model, valid, batch_size), valid.labels[label])


def train_model(
    model: nn.Module,
    train: ProcessedData,
    config: TrainConfig,
    valid: ProcessedData,
    params: Iterable[nn.Parameter] | None = None,
) -> TrainResult:
    """Minibatch training; returns the model restored to its best validation epoch.

    Epoch 0 is the starting point, so a warm start is kept if no epoch beats it.
    """
    loss_fn = get_loss(config.loss, config.focal_gamma, config.focal_alpha)
    params = [p for p in (model.parameters() if params is None else params) if p.requires_grad]
    opt = torch.optim.Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    labels = train.labels[config.label]

    history = [EpochMetrics(0, float("nan"), validation_auc(model, valid, config.label, config.batch_size))]
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        for epoch in range(1, config.epochs + 1):
            model.train()
            idx = epoch_indices(labels, config.sampling, config.seed * 1000 + epoch)
            total, count = 0.0, 0
            for batch in train.batches(config.batch_size, idx):
                out = model(batch)
                loss = loss_fn(out.logit, batch.labels[config.label])
                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss {loss.item()} at epoch {epoch}, "
                                           f"after {count} samples (lr={config.lr}, loss={config.loss})")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(batch)
                count += len(batch)
            valid_auc = validation_auc(model, valid, config.label, config.batch_size)
            history.append(EpochMetrics(epoch, total / max(count, 1), valid_auc))
            log.info("epoch %d loss %.4f valid_auc %.4f", epoch, total / max(count, 1), valid_auc)
            if valid_auc > history[best_epoch].valid_auc:
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch)


# ---------------------------------------------------------------------------
# Masked-feature pre-training


@dataclass
class PretrainResult:
    model: SeqModel
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)


@torch.no_grad()
def mlm_eval_loss(model: SeqModel, data: ProcessedData, batch_size: int, seed: int) -> float:
    model.eval()
    total, count = 0.0, 0
    for i, batch in enumerate(data.batches(batch_size)):
        corrupted, targets = mlm_mask(batch, model.config.mask_rate, seed + i, model.dims)
        total += mlm_loss(model, corrupted, targets).item() * len(batch)
        count += len(batch)
    return total / max(count, 1)


def pretrain_mlm(model: SeqModel, train: ProcessedData, config: TrainConfig,
                 valid: ProcessedData | None = None) -> PretrainResult:
    """Self-supervised reconstruction of masked sequence slots."""
    opt = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=config.lr,
                           weight_decay=config.weight_decay)
    result = PretrainResult(model)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        for epoch in range(1, config.epochs + 1):
            model.train()
            idx = np.random.default_rng(config.seed * 1000 + epoch).permutation(len(train))
            total, count = 0.0, 0
            for i, batch in enumerate(train.batches(config.batch_size, idx)):
                corrupted, targets = mlm_mask(batch, model.config.mask_rate, (config.seed * 1000 + epoch) * 100003 + i, model.dims)
                loss = mlm_loss(model, corrupted, targets)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"non-finite MLM loss at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(batch)
                count += len(batch)
            result.train_loss.append(total / max(count, 1))
            if valid is not None:
                result.valid_loss.append(mlm_eval_loss(model, valid, config.batch_size, seed=config.seed + 7))
            log.info("mlm epoch %d loss %.4f", epoch, result.train_loss[-1])
    model.eval()
    return result


# ---------------------------------------------------------------------------
# Joint fine-tuning


def joint_finetune(nonseq: NonSeqDNN, seq: SeqModel, train: ProcessedData, config: TrainConfig,
                   valid: ProcessedData, variant: str = "concat") -> TrainResult:
    """Fuse and train according to ``config.schedule``.

    * separate_then_finetune: warm-started fusion head, everything trainable;
    * finetune_frozen: warm-started, only the fusion parameters trainable;
    * end_to_end: freshly initialised sub-models and head, everything trainable.
    """
    if config.schedule == "end_to_end":
        fresh_ns = init_nonseq(nonseq.config, nonseq.dims, config.seed)
        fresh_s = init_seq(seq.config, seq.dims, config.seed + 1)
        joint = assemble_joint(fresh_ns, fresh_s, variant, seed=config.seed, warm_start=False)
        return train_model(joint, train, config, valid)
    joint = assemble_joint(nonseq, seq, variant, seed=config.seed, warm_start=True)
    if config.schedule == "finetune_frozen":
        for p in list(joint.nonseq.parameters()) + list(joint.seq.parameters()):
            p.requires_grad_(False)
        joint.frozen = True
        joint.train()
    return train_model(joint, train, config, valid)


# ---------------------------------------------------------------------------
# Cross-validated ensembles


def kfold_splits(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Shuffled partition of range(n) into `folds` parts whose sizes differ by at most one."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


class Ensemble:
    def __init__(self, models: list[nn.Module], batch_size: int = 1000):
        self.models = models
        self.batch_size = batch_size

    def predict_proba(self, data: ProcessedData) -> np.ndarray:
        return np.mean([predict_proba(m, data, self.batch_size) for m in self.models], axis=0)


def kfold_ensemble(data: ProcessedData, config: TrainConfig,
                   fit_fold: Callable[[ProcessedData, ProcessedData, TrainConfig], TrainResult]) -> tuple[list[TrainResult], Ensemble]:
    """Train one model per fold (held-out fold = validation) and average their probabilities."""
    splits = kfold_splits(len(data), config.folds, config.seed)
    y = data.labels[config.label]
    results = []
    for f, held_out in enumerate(splits):
        if y[held_out].min() == y[held_out].max():
            raise ValueError(f"fold {f} holds a single class")
        rest = np.sort(np.concatenate([s for g, s in enumerate(splits) if g != f]))
        fold_config = replace(config, seed=config.seed + f)
        results.append(fit_fold(data.subset(rest), data.subset(held_out), fold_config))
    return results, Ensemble([r.model for r in results], config.batch_size)
