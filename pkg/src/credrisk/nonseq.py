"""Non-sequential DNN: per-feature category embeddings + dense columns -> ReLU MLP -> logit."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import torch
import torch.nn as nn

from .preprocess import InputDims, ProcessedBatch


class ModelOutput(NamedTuple):
    hidden: torch.Tensor
    logit: torch.Tensor
    prob: torch.Tensor


@dataclass
class NonSeqModelConfig:
    embedding_size: int = 16
    hidden_sizes: list[int] = field(default_factory=lambda: [1028, 256, 128])

    def __post_init__(self):
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")


class NonSeqDNN(nn.Module):
    def __init__(self, config: NonSeqModelConfig, dims: InputDims):
        super().__init__()
        self.config = config
        self.dims = dims
        self.embeddings = nn.ModuleList(nn.Embedding(v, config.embedding_size) for v in dims.nonseq_vocab_sizes)
        layers: list[nn.Module] = []
        width = self.input_width
        for h in config.hidden_sizes:
            layers += [nn.Linear(width, h), nn.ReLU()]
            width = h
        self.mlp = nn.Sequential(*layers)
        self.logit = nn.Linear(width, 1)

    @property
    def input_width(self) -> int:
        return self.dims.dense_width + len(self.dims.nonseq_vocab_sizes) * self.config.embedding_size

    @property
    def hidden_size(self) -> int:
        return self.config.hidden_sizes[-1]

    def dense_input(self, batch: ProcessedBatch) -> torch.Tensor:
        if batch.dense.shape[1] != self.dims.dense_width or batch.cat.shape[1] != len(self.embeddings):
            raise ValueError(
                f"batch has dense width {batch.dense.shape[1]} / {batch.cat.shape[1]} categories, "
                f"model expects {self.dims.dense_width} / {len(self.embeddings)}"
            )
        parts = [emb(batch.cat[:, j]) for j, emb in enumerate(self.embeddings)]
        return torch.cat(parts + [batch.dense], dim=1)

    def encode(self, batch: ProcessedBatch) -> torch.Tensor:
        return self.mlp(self.dense_input(batch))

    def forward(self, batch: ProcessedBatch) -> ModelOutput:
        hidden = self.encode(batch)
        z = self.logit(hidden).squeeze(-1)
        return ModelOutput(hidden, z, torch.sigmoid(z))


def init_nonseq(config: NonSeqModelConfig, dims: InputDims, seed: int) -> NonSeqDNN:
    """Build a model whose parameters depend only on `seed` (torch default init)."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return NonSeqDNN(config, dims)
