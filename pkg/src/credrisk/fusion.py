"""Joint models over non-sequential and sequential inputs.

``concat`` concatenates the two final hidden states under one linear logit.
``add_attn`` / ``mul_attn`` instead pool each kind's encoder output with the
non-sequential hidden state as the query (additive and bilinear scores).
"""
from __future__ import annotations

import copy
import math

import torch
import torch.nn as nn

from .data import KINDS
from .nonseq import ModelOutput, NonSeqDNN
from .preprocess import ProcessedBatch
from .seq import SeqModel, masked_softmax

FUSIONS = ("concat", "add_attn", "mul_attn")


class AdditiveAttention(nn.Module):
    def __init__(self, q_size: int, k_size: int, attn_size: int):
        super().__init__()
        self.w_q = nn.Linear(q_size, attn_size, bias=False)
        self.w_k = nn.Linear(k_size, attn_size)
        self.v = nn.Linear(attn_size, 1, bias=False)

    def scores(self, q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        return self.v(torch.tanh(self.w_q(q).unsqueeze(1) + self.w_k(k))).squeeze(-1)


class MultiplicativeAttention(nn.Module):
    def __init__(self, q_size: int, k_size: int):
        super().__init__()
        self.W = nn.Parameter(torch.randn(q_size, k_size) / math.sqrt(q_size * k_size))

    def scores(self, q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        return torch.einsum("bq,qk,blk->bl", q, self.W, k)


class JointModel(nn.Module):
    def __init__(self, nonseq: NonSeqDNN, seq: SeqModel, variant: str = "concat"):
        super().__init__()
        if variant not in FUSIONS:
            raise ValueError(f"fusion variant must be one of {FUSIONS}")
        self.variant = variant
        # frozen sub-models also stay in eval mode (no dropout) while training
        self.frozen = False
        self.nonseq = nonseq
        self.seq = seq
        m2, e = nonseq.hidden_size, seq.config.embedding_size
        self.head = nn.Linear(m2 + len(KINDS) * e, 1)
        if variant == "add_attn":
            self.attn = nn.ModuleDict({k: AdditiveAttention(m2, e, e) for k in KINDS})
        elif variant == "mul_attn":
            self.attn = nn.ModuleDict({k: MultiplicativeAttention(m2, e) for k in KINDS})
        else:
            self.attn = None

    def train(self, mode: bool = True) -> "JointModel":
        super().train(mode)
        if self.frozen:
            self.nonseq.eval()
            self.seq.eval()
        return self

    @property
    def fused_width(self) -> int:
        return self.head.in_features

    def warm_start_head(self) -> None:
        """Copy both sub-model logit heads into the fusion head; bias is their mean."""
        m2 = self.nonseq.hidden_size
        with torch.no_grad():
            self.head.weight[:, :m2] = self.nonseq.logit.weight
            self.head.weight[:, m2:] = self.seq.logit.weight
            self.head.bias.copy_((self.nonseq.logit.bias + self.seq.logit.bias) / 2)

    def attention_pool(self, query: torch.Tensor, batch: ProcessedBatch) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        pooled, weights = [], {}
        for kind, (x_h, mask) in self.seq.encode(batch).items():
            w = masked_softmax(self.attn[kind].scores(query, x_h), mask)
            pooled.append((w.unsqueeze(-1) * x_h).sum(1))
            weights[kind] = w
        return torch.cat(pooled, dim=1), weights

    def fused(self, batch: ProcessedBatch) -> torch.Tensor:
        x_ns = self.nonseq.encode(batch)
        if self.variant == "concat":
            x_s = self.seq.hidden(batch)
        else:
            x_s, _ = self.attention_pool(x_ns, batch)
        return torch.cat([x_ns, x_s], dim=1)

    def forward(self, batch: ProcessedBatch) -> ModelOutput:
        x = self.fused(batch)
        z = self.head(x).squeeze(-1)
        return ModelOutput(x, z, torch.sigmoid(z))


def assemble_joint(nonseq: NonSeqDNN, seq: SeqModel, variant: str = "concat", seed: int = 0,
                   warm_start: bool = True) -> JointModel:
    """Build a joint model around copies of trained sub-models."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        joint = JointModel(copy.deepcopy(nonseq), copy.deepcopy(seq), variant)
    if warm_start:
        joint.warm_start_head()
    return joint
