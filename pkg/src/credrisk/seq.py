"""Sequential model over card / inquiry / loan event sequences.

Per kind, every event feature gets its own embedding (category table or a
learned projection of the (value, is_zero, is_nan) triple); a learned query
merges them into one vector per position.  A shared time net turns the
relative time into a positional embedding, a shared encoder contextualises
positions and a per-kind attention pools them.  The three pooled vectors are
concatenated in card, inquiry, loan order and fed to a linear logit.

The module also carries the masked-feature reconstruction heads used for
self-supervised pre-training, see :func:`mlm_mask` and :func:`mlm_loss`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import KINDS
from .nonseq import ModelOutput
from .preprocess import InputDims, ProcessedBatch, SeqTensors

ENCODERS = ("transformer", "pooled_mlp", "lstm")


@dataclass
class SeqModelConfig:
    embedding_size: int = 128
    num_layers: int = 1
    num_heads: int = 8
    ffn_size: int = 256
    dropout: float = 0.1
    encoder_variant: str = "transformer"
    mask_rate: float = 0.15

    def __post_init__(self):
        if self.embedding_size % self.num_heads:
            raise ValueError("embedding_size must be divisible by num_heads")
        if not 0 < self.mask_rate < 1:
            raise ValueError("mask_rate must be in (0, 1)")
        if self.encoder_variant not in ENCODERS:
            raise ValueError(f"encoder_variant must be one of {ENCODERS}")
        if self.num_layers != 1:
            raise ValueError("only single-layer encoders are supported")


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis restricted to `mask`; all-masked rows give zeros."""
    any_valid = mask.any(-1, keepdim=True)
    allowed = mask | ~any_valid
    w = torch.softmax(scores.masked_fill(~allowed, float("-inf")), dim=-1)
    return w * any_valid


def merge_feature_embeddings(feats: torch.Tensor, query: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Attention-merge (b, L, f, e) feature embeddings into (b, L, e).

    Returns the merged embeddings and the (b, L, f) convex weights.
    """
    scores = feats @ query / math.sqrt(feats.shape[-1])
    w = torch.softmax(scores, dim=-1)
    return (w.unsqueeze(-1) * feats).sum(-2), w


def pool_hidden(x_h: torch.Tensor, mask: torch.Tensor, query: torch.Tensor | None) -> tuple[torch.Tensor, torch.Tensor]:
    """Pool (b, L, e) hidden states over valid positions.

    With a query the weights are an attention softmax, without one they are
    uniform (mean pooling).  Rows without valid positions pool to zero.
    """
    if query is None:
        scores = torch.zeros(mask.shape, dtype=x_h.dtype, device=x_h.device)
    else:
        scores = x_h @ query / math.sqrt(x_h.shape[-1])
    w = masked_softmax(scores, mask)
    return (w.unsqueeze(-1) * x_h).sum(1), w


class TimeNet(nn.Module):
    """Positionwise two-layer perceptron from a scalar relative time to e dims."""

    def __init__(self, e: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(1, e), nn.ReLU(), nn.Linear(e, e))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.net(t.unsqueeze(-1))


class KindEmbedder(nn.Module):
    def __init__(self, e: int, n_real: int, vocab_sizes: tuple[int, ...]):
        super().__init__()
        self.n_real = n_real
        # one extra row per table for the reserved <MASK> index
        self.cat_tables = nn.ModuleList(nn.Embedding(v + 1, e) for v in vocab_sizes)
        self.real_weight = nn.Parameter(torch.randn(n_real, 3, e) / math.sqrt(3))
        self.real_bias = nn.Parameter(torch.zeros(n_real, e))
        self.query = nn.Parameter(torch.randn(e) * 0.1)

    def feature_embeddings(self, seq: SeqTensors) -> torch.Tensor:
        parts = []
        if self.n_real:
            parts.append(torch.einsum("blrk,rke->blre", seq.real, self.real_weight) + self.real_bias)
        if len(self.cat_tables):
            parts.append(torch.stack([t(seq.cat[..., j]) for j, t in enumerate(self.cat_tables)], dim=2))
        return torch.cat(parts, dim=2)

    def forward(self, seq: SeqTensors) -> torch.Tensor:
        merged, _ = merge_feature_embeddings(self.feature_embeddings(seq), self.query)
        return merged


class TransformerEncoder(nn.Module):
    def __init__(self, config: SeqModelConfig):
        super().__init__()
        self.layer = nn.TransformerEncoderLayer(
            config.embedding_size, config.num_heads, dim_feedforward=config.ffn_size,
            dropout=config.dropout, batch_first=True,
        )

    def forward(self, E: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # rows without valid positions attend to slot 0; pooling zeroes them later
        empty = ~mask.any(1)
        allowed = mask.clone()
        allowed[empty, 0] = True
        return self.layer(E, src_key_padding_mask=~allowed)


class PooledMLPEncoder(nn.Module):
    def __init__(self, config: SeqModelConfig):
        super().__init__()
        e = config.embedding_size
        self.net = nn.Sequential(nn.Linear(e, e), nn.ReLU(), nn.Dropout(config.dropout), nn.Linear(e, e))

    def forward(self, E: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.net(E)


class LSTMEncoder(nn.Module):
    # right-padded input, so valid outputs never depend on padding
    def __init__(self, config: SeqModelConfig):
        super().__init__()
        self.lstm = nn.LSTM(config.embedding_size, config.embedding_size, batch_first=True)

    def forward(self, E: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        out, _ = self.lstm(E)
        return out


def make_encoder(config: SeqModelConfig) -> nn.Module:
    return {"transformer": TransformerEncoder, "pooled_mlp": PooledMLPEncoder, "lstm": LSTMEncoder}[
        config.encoder_variant](config)


class MLMHeads(nn.Module):
    def __init__(self, e: int, n_real: int, vocab_sizes: tuple[int, ...]):
        super().__init__()
        self.time = nn.Linear(e, 1)
        self.real = nn.Linear(e, n_real) if n_real else None
        self.cats = nn.ModuleList(nn.Linear(e, v) for v in vocab_sizes)


class SeqModel(nn.Module):
    def __init__(self, config: SeqModelConfig, dims: InputDims):
        super().__init__()
        self.config = config
        self.dims = dims
        e = config.embedding_size
        self.time_net = TimeNet(e)
        self.encoder = make_encoder(config)
        self.embedders = nn.ModuleDict(
            {k: KindEmbedder(e, dims.seq_real_counts[k], dims.seq_vocab_sizes[k]) for k in KINDS})
        self.pool_queries = nn.ParameterDict({k: nn.Parameter(torch.randn(e) * 0.1) for k in KINDS})
        self.logit = nn.Linear(len(KINDS) * e, 1)
        self.mlm_heads = nn.ModuleDict(
            {k: MLMHeads(e, dims.seq_real_counts[k], dims.seq_vocab_sizes[k]) for k in KINDS})

    @property
    def hidden_size(self) -> int:
        return len(KINDS) * self.config.embedding_size

    def embed(self, kind: str, seq: SeqTensors) -> torch.Tensor:
        return self.time_net(seq.time) + self.embedders[kind](seq)

    def encode_kind(self, kind: str, seq: SeqTensors) -> torch.Tensor:
        return self.encoder(self.embed(kind, seq), seq.mask)

    def encode(self, batch: ProcessedBatch) -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
        return {k: (self.encode_kind(k, batch.seqs[k]), batch.seqs[k].mask) for k in KINDS}

    def pool(self, kind: str, x_h: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        query = None if self.config.encoder_variant == "pooled_mlp" else self.pool_queries[kind]
        return pool_hidden(x_h, mask, query)

    def hidden(self, batch: ProcessedBatch) -> torch.Tensor:
        encoded = self.encode(batch)
        return torch.cat([self.pool(k, *encoded[k])[0] for k in KINDS], dim=1)

    def forward(self, batch: ProcessedBatch) -> ModelOutput:
        hidden = self.hidden(batch)
        z = self.logit(hidden).squeeze(-1)
        return ModelOutput(hidden, z, torch.sigmoid(z))


def init_seq(config: SeqModelConfig, dims: InputDims, seed: int) -> SeqModel:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return SeqModel(config, dims)


# ---------------------------------------------------------------------------
# Masked-feature pre-training

MODE_MASK, MODE_RANDOM, MODE_KEEP = 0, 1, 2


@dataclass
class KindTargets:
    """Selected slots (bool masks), their original values and replacement modes."""

    time_sel: torch.Tensor
    time_orig: torch.Tensor
    time_mode: torch.Tensor
    real_sel: torch.Tensor
    real_orig: torch.Tensor
    real_mode: torch.Tensor
    cat_sel: torch.Tensor
    cat_orig: torch.Tensor
    cat_mode: torch.Tensor

    @property
    def n_selected(self) -> int:
        return int(self.time_sel.sum() + self.real_sel.sum() + self.cat_sel.sum())


def _modes(u: torch.Tensor) -> torch.Tensor:
    return torch.where(u < 0.8, MODE_MASK, torch.where(u < 0.9, MODE_RANDOM, MODE_KEEP))


def mlm_mask(batch: ProcessedBatch, mask_rate: float, seed: int, dims: InputDims) -> tuple[ProcessedBatch, dict[str, KindTargets]]:
    """Corrupt a `mask_rate` fraction of valid feature slots.

    Of the selected slots 80% become <MASK> (categories) or 0 (time / real
    triples), 10% take a random legal value (a uniform category, or the value
    of a random valid slot of the same feature in the batch) and 10% stay.
    """
    g = torch.Generator().manual_seed(seed)
    seqs, targets = {}, {}
    for kind in KINDS:
        s = batch.seqs[kind]
        valid = s.mask
        b, L = valid.shape
        n_real = s.real.shape[2]
        n_cat = s.cat.shape[2]
        vocab = dims.seq_vocab_sizes[kind]

        time_sel = (torch.rand(b, L, generator=g) < mask_rate) & valid
        real_sel = (torch.rand(b, L, n_real, generator=g) < mask_rate) & valid[..., None]
        cat_sel = (torch.rand(b, L, n_cat, generator=g) < mask_rate) & valid[..., None]
        time_mode = _modes(torch.rand(b, L, generator=g))
        real_mode = _modes(torch.rand(b, L, n_real, generator=g))
        cat_mode = _modes(torch.rand(b, L, n_cat, generator=g))

        # donors for random replacement: uniformly chosen valid positions
        vb, vl = valid.nonzero(as_tuple=True)
        n_valid = len(vb)
        time = s.time.clone()
        real = s.real.clone()
        cat = s.cat.clone()
        if n_valid:
            d = torch.randint(n_valid, (b, L), generator=g)
            time = torch.where(time_sel & (time_mode == MODE_MASK), torch.zeros_like(time), time)
            time = torch.where(time_sel & (time_mode == MODE_RANDOM), s.time[vb[d], vl[d]], time)
            if n_real:
                d = torch.randint(n_valid, (b, L, n_real), generator=g)
                j = torch.arange(n_real).expand(b, L, n_real)
                donor = s.real[vb[d], vl[d], j]
                real = torch.where((real_sel & (real_mode == MODE_MASK))[..., None], torch.zeros_like(real), real)
                real = torch.where((real_sel & (real_mode == MODE_RANDOM))[..., None], donor, real)
            if n_cat:
                sizes = torch.tensor(vocab, dtype=torch.long)
                rand_cat = (torch.rand(b, L, n_cat, generator=g) * sizes).long().clamp_max(sizes - 1)
                cat = torch.where(cat_sel & (cat_mode == MODE_MASK), sizes.expand(b, L, n_cat), cat)
                cat = torch.where(cat_sel & (cat_mode == MODE_RANDOM), rand_cat, cat)
        seqs[kind] = SeqTensors(time, real, cat, s.mask)
        targets[kind] = KindTargets(time_sel, s.time, time_mode, real_sel, s.real[..., 0], real_mode,
                                    cat_sel, s.cat, cat_mode)
    return replace(batch, seqs=seqs), targets


def _mlm_terms(model: SeqModel, corrupted: ProcessedBatch, targets: dict[str, KindTargets]):
    for kind in KINDS:
        t = targets[kind]
        x_h = model.encode_kind(kind, corrupted.seqs[kind])
        heads = model.mlm_heads[kind]
        yield kind, x_h, heads, t


def mlm_loss(model: SeqModel, corrupted: ProcessedBatch, targets: dict[str, KindTargets]) -> torch.Tensor:
    """Mean over masked slots of squared error (time / real) and cross-entropy (category)."""
    total = None
    count = 0
    for kind, x_h, heads, t in _mlm_terms(model, corrupted, targets):
        terms = []
        if t.time_sel.any():
            pred = heads.time(x_h).squeeze(-1)
            terms.append(((pred - t.time_orig) ** 2)[t.time_sel].sum())
        if heads.real is not None and t.real_sel.any():
            pred = heads.real(x_h)
            terms.append(((pred - t.real_orig) ** 2)[t.real_sel].sum())
        for j, head in enumerate(heads.cats):
            sel = t.cat_sel[..., j]
            if sel.any():
                terms.append(F.cross_entropy(head(x_h[sel]), t.cat_orig[..., j][sel], reduction="sum"))
        count += t.n_selected
        for term in terms:
            total = term if total is None else total + term
    if count == 0 or total is None:
        warnings.warn("mlm_loss called with no masked slots; returning zero", RuntimeWarning)
        return sum(p.sum() for p in model.parameters()) * 0.0
    return total / count


@torch.no_grad()
def mlm_category_accuracy(model: SeqModel, corrupted: ProcessedBatch, targets: dict[str, KindTargets]) -> tuple[int, int]:
    """(correct, total) arg-max predictions over masked category slots."""
    correct = total = 0
    for kind, x_h, heads, t in _mlm_terms(model, corrupted, targets):
        for j, head in enumerate(heads.cats):
            sel = t.cat_sel[..., j]
            if sel.any():
                pred = head(x_h[sel]).argmax(-1)
                correct += int((pred == t.cat_orig[..., j][sel]).sum())
                total += int(sel.sum())
    return correct, total
