"""Binary losses computed from logits."""
from __future__ import annotations

import logging

import torch
import torch.nn.functional as F

log = logging.getLogger(__name__)

LOSSES = ("bce", "wbce", "focal")

# single-class batches seen by wbce since import (or the last reset)
_single_class_batches = 0


def single_class_batches(reset: bool = False) -> int:
    global _single_class_batches
    n = _single_class_batches
    if reset:
        _single_class_batches = 0
    return n


def bce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype))


def wbce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """-(1/|D-|) sum_{D-} log(1 - p) - (1/|D+|) sum_{D+} log p.

    A batch holding one class only contributes that class's term.
    """
    global _single_class_batches
    pos = labels > 0.5
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    loss = logits.new_zeros(())
    if n_neg:
        loss = loss - F.logsigmoid(-logits[~pos]).sum() / n_neg
    if n_pos:
        loss = loss - F.logsigmoid(logits[pos]).sum() / n_pos
    if n_pos == 0 or n_neg == 0:
        _single_class_batches += 1
        log.debug("wbce: single-class batch (%d so far)", _single_class_batches)
    return loss


def focal(logits: torch.Tensor, labels: torch.Tensor, gamma: float = 2.0, alpha: float | None = 0.25) -> torch.Tensor:
    """Mean of alpha_t * (1 - p_t)^gamma * -log p_t; ``alpha=None`` disables class weighting."""
    y = labels.to(logits.dtype)
    ce = F.binary_cross_entropy_with_logits(logits, y, reduction="none")
    p = torch.sigmoid(logits)
    p_t = p * y + (1 - p) * (1 - y)
    loss = (1 - p_t) ** gamma * ce if gamma else ce
    if alpha is not None:
        loss = (alpha * y + (1 - alpha) * (1 - y)) * loss
    return loss.mean()


def get_loss(name: str, gamma: float = 2.0, alpha: float | None = 0.25):
    if name == "bce":
        return bce
    if name == "wbce":
        return wbce
    if name == "focal":
        return lambda z, y: focal(z, y, gamma, alpha)
    raise ValueError(f"unknown loss {name!r}; expected one of {LOSSES}")
