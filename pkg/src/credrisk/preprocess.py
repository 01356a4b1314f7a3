"""Pre-processing: boosted-tree feature selection, zero/NaN indicators,
normalization with clipping, top-30 category merging and relative dates.

Everything is fitted on the training split and then applied unchanged to any
other split through :func:`transform`.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import torch

from .data import KINDS, MISSING_CAT, EventSequence, EventTable, FeatureSchema, RecordSet, clip_events

log = logging.getLogger(__name__)

CLIP = 4.0
TOP_CATEGORIES = 30


# ---------------------------------------------------------------------------
# Feature selection


def fit_feature_selector(
    train: RecordSet,
    label: str = "y_long",
    k: int = 500,
    method: str = "xgboost",
    seed: int = 0,
    max_rows: int | None = 15000,
    n_rounds: int = 40,
) -> list[int]:
    """Rank the non-sequential real features by importance and return the top `k`.

    ``method="xgboost"`` ranks by total split gain of a boosted-tree fit (NaN
    passed as native missing); ``"correlation"`` ranks by absolute point-biserial
    correlation over non-missing entries.  Ties keep ascending feature index.
    """
    n_features = train.schema.nonseq_real_count
    if not 1 <= k <= n_features:
        raise ValueError(f"k must be in [1, {n_features}], got {k}")
    y = train.labels[label]
    if y.min() == y.max():
        raise ValueError("feature selection needs both classes in the training split")
    X = train.nonseq_real
    if max_rows is not None and len(y) > max_rows:
        # stratified row subsample keeps every positive when possible
        rng = np.random.default_rng(seed)
        pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
        n_pos = min(len(pos), max(1, int(round(max_rows * len(pos) / len(y)))))
        rows = np.sort(np.concatenate([rng.choice(pos, n_pos, replace=False),
                                       rng.choice(neg, max_rows - n_pos, replace=False)]))
        X, y = X[rows], y[rows]

    if method == "xgboost":
        try:
            importance = _xgboost_importance(X, y, seed, n_rounds)
        except ImportError:
            log.warning("xgboost unavailable; falling back to correlation importance")
            importance = correlation_importance(X, y)
    elif method == "correlation":
        importance = correlation_importance(X, y)
    else:
        raise ValueError(f"unknown selection method {method!r}")
    order = np.argsort(-importance, kind="stable")
    return [int(i) for i in order[:k]]


def _xgboost_importance(X: np.ndarray, y: np.ndarray, seed: int, n_rounds: int) -> np.ndarray:
    import xgboost as xgb

    params = {
        "objective": "binary:logistic",
        "tree_method": "hist",
        "max_depth": 4,
        "eta": 0.3,
        "max_bin": 64,
        "nthread": 1,
        "seed": seed,
        "verbosity": 0,
    }
    dtrain = xgb.QuantileDMatrix(X, label=y, max_bin=64)
    booster = xgb.train(params, dtrain, num_boost_round=n_rounds)
    gain = booster.get_score(importance_type="total_gain")
    importance = np.zeros(X.shape[1])
    for name, value in gain.items():
        importance[int(name[1:])] = value
    return importance


def correlation_importance(X: np.ndarray, y: np.ndarray, block: int = 512) -> np.ndarray:
    """|point-biserial correlation| per column over its non-missing rows."""
    out = np.zeros(X.shape[1])
    yf = y.astype(np.float64)[:, None]
    for lo in range(0, X.shape[1], block):
        xb = X[:, lo:lo + block]
        present = ~np.isnan(xb)
        cnt = present.sum(0)
        x0 = np.where(present, xb, 0.0).astype(np.float64)
        y0 = np.where(present, yf, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mx, my = x0.sum(0) / cnt, y0.sum(0) / cnt
            cov = (x0 * y0).sum(0) / cnt - mx * my
            vx = (x0 ** 2).sum(0) / cnt - mx ** 2
            vy = (y0 ** 2).sum(0) / cnt - my ** 2
            r = cov / np.sqrt(vx * vy)
        out[lo:lo + block] = np.nan_to_num(np.abs(r), nan=0.0)
    return out


# ---------------------------------------------------------------------------
# Column transforms


def expand_indicators(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a column with NaN markers into (filled value, is_zero, is_nan)."""
    values = np.asarray(values, dtype=np.float32)
    is_nan = np.isnan(values)
    filled = np.where(is_nan, np.float32(0.0), values)
    is_zero = (~is_nan) & (values == 0)
    return filled, is_zero.astype(np.float32), is_nan.astype(np.float32)


def fit_normalizer(columns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and std over non-NaN entries (columns along axis 1).

    Columns without any entry get mean 0 and std 0.
    """
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim == 1:
        columns = columns[:, None]
    present = ~np.isnan(columns)
    cnt = present.sum(0)
    x = np.where(present, columns, 0.0)
    safe = np.maximum(cnt, 1)
    mean = x.sum(0) / safe
    var = (np.where(present, columns - mean, 0.0) ** 2).sum(0) / safe
    return np.where(cnt > 0, mean, 0.0), np.where(cnt > 0, np.sqrt(var), 0.0)


def apply_normalize(columns: np.ndarray, mean, std, clip: float = CLIP) -> np.ndarray:
    """clip((x - mean) / std, -clip, clip); columns with std == 0 map to 0."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    safe = np.where(std > 0, std, 1.0)
    z = (np.asarray(columns, dtype=np.float64) - mean) / safe
    z = np.where(std > 0, z, 0.0)
    return np.clip(z, -clip, clip).astype(np.float32)


@dataclass(frozen=True)
class Vocabulary:
    """Top raw ids in frequency order; UNK and NAN sit right after them."""

    ids: tuple[int, ...]

    @property
    def unk(self) -> int:
        return len(self.ids)

    @property
    def nan(self) -> int:
        return len(self.ids) + 1

    @property
    def size(self) -> int:
        return len(self.ids) + 2


def fit_vocab(column: np.ndarray, top: int = TOP_CATEGORIES) -> Vocabulary:
    column = np.asarray(column)
    present = column[column != MISSING_CAT]
    ids, counts = np.unique(present, return_counts=True)
    # np.unique sorts ids ascending, so a stable sort on -count breaks ties by id
    order = np.argsort(-counts, kind="stable")[:top]
    return Vocabulary(tuple(int(i) for i in ids[order]))


def merge_categories(column: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    column = np.asarray(column, dtype=np.int64)
    out = np.full(column.shape, vocab.unk, dtype=np.int64)
    if vocab.ids:
        ids = np.asarray(vocab.ids, dtype=np.int64)
        order = np.argsort(ids)
        sorted_ids = ids[order]
        pos = np.clip(np.searchsorted(sorted_ids, column), 0, len(ids) - 1)
        hit = sorted_ids[pos] == column
        out[hit] = order[pos[hit]]
    out[column == MISSING_CAT] = vocab.nan
    return out


def encode_relative_time(event_date, report_date):
    """Days between an event and the report it appears on."""
    return np.asarray(report_date) - np.asarray(event_date)


def clip_sequence(seq: EventSequence, max_len: int) -> tuple[EventSequence, np.ndarray]:
    """Keep the `max_len` latest events; also return a length-`max_len` validity mask."""
    n = len(seq)
    lo = max(0, n - max_len)
    kept = EventSequence(seq.kind, seq.dates[lo:], seq.reals[lo:], seq.cats[lo:])
    mask = np.zeros(max_len, dtype=bool)
    mask[: len(kept)] = True
    return kept, mask


# ---------------------------------------------------------------------------
# Fitted state


@dataclass
class KindArtifacts:
    time_mean: float
    time_std: float
    real_mean: list[float]
    real_std: list[float]
    vocabs: list[Vocabulary]
    max_len: int


@dataclass
class PreprocessArtifacts:
    schema: dict
    k: int
    indicators: bool
    selected_real_features: list[int]
    time_mean: list[float]
    time_std: list[float]
    real_mean: list[float]
    real_std: list[float]
    vocabs: list[Vocabulary]
    seq: dict[str, KindArtifacts] = field(default_factory=dict)

    @property
    def k_expanded(self) -> int:
        return 3 * self.k if self.indicators else self.k

    @property
    def dense_width(self) -> int:
        return len(self.time_mean) + self.k_expanded

    def to_json(self) -> str:
        d = {
            "schema": self.schema,
            "k": self.k,
            "indicators": self.indicators,
            "k_expanded": self.k_expanded,
            "dense_layout": "[time | value x K" + (" | is_zero x K | is_nan x K]" if self.indicators else "]"),
            "selected_real_features": self.selected_real_features,
            "time_mean": self.time_mean,
            "time_std": self.time_std,
            "real_mean": self.real_mean,
            "real_std": self.real_std,
            "vocabs": [list(v.ids) for v in self.vocabs],
            "seq": {
                kind: {
                    "time_mean": a.time_mean,
                    "time_std": a.time_std,
                    "real_mean": a.real_mean,
                    "real_std": a.real_std,
                    "vocabs": [list(v.ids) for v in a.vocabs],
                    "max_len": a.max_len,
                }
                for kind, a in self.seq.items()
            },
        }
        return json.dumps(d, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PreprocessArtifacts":
        d = json.loads(text)
        seq = {
            kind: KindArtifacts(
                a["time_mean"], a["time_std"], a["real_mean"], a["real_std"],
                [Vocabulary(tuple(v)) for v in a["vocabs"]], a["max_len"],
            )
            for kind, a in d["seq"].items()
        }
        return cls(
            schema=d["schema"],
            k=d["k"],
            indicators=d["indicators"],
            selected_real_features=d["selected_real_features"],
            time_mean=d["time_mean"],
            time_std=d["time_std"],
            real_mean=d["real_mean"],
            real_std=d["real_std"],
            vocabs=[Vocabulary(tuple(v)) for v in d["vocabs"]],
            seq=seq,
        )


def fit_preprocess(
    train: RecordSet,
    label: str = "y_long",
    k: int = 500,
    indicators: bool = True,
    selected: list[int] | None = None,
    selection_method: str = "xgboost",
    seed: int = 0,
    selector_max_rows: int | None = 15000,
) -> PreprocessArtifacts:
    """Fit every pre-processing statistic on `train`.

    A precomputed `selected` ranking may be passed to share one selector fit
    between configurations; its first `k` entries are used.
    """
    schema = train.schema
    if selected is None:
        selected = fit_feature_selector(train, label, k, method=selection_method, seed=seed,
                                        max_rows=selector_max_rows)
    selected = list(selected[:k])
    if len(selected) != k:
        raise ValueError(f"need {k} selected features, got {len(selected)}")

    rel = encode_relative_time(train.nonseq_time, train.report_date[:, None])
    time_mean, time_std = fit_normalizer(rel)
    values, _, _ = expand_indicators(train.nonseq_real[:, selected])
    real_mean, real_std = fit_normalizer(values)
    vocabs = [fit_vocab(train.nonseq_cat[:, j]) for j in range(schema.nonseq_cat_count)]

    seq = {}
    for kind in KINDS:
        spec = schema.seq_specs[kind]
        table = clip_events(train.sequences[kind], spec.max_len)
        owner_report = np.repeat(train.report_date, table.lengths)
        t_mean, t_std = fit_normalizer(encode_relative_time(table.dates, owner_report).astype(np.float64))
        r_values, _, _ = expand_indicators(table.reals)
        r_mean, r_std = fit_normalizer(r_values)
        seq[kind] = KindArtifacts(
            float(t_mean[0]), float(t_std[0]), r_mean.tolist(), r_std.tolist(),
            [fit_vocab(table.cats[:, j]) for j in range(spec.cat_count)], spec.max_len,
        )
    return PreprocessArtifacts(
        schema=schema.to_dict(),
        k=k,
        indicators=indicators,
        selected_real_features=selected,
        time_mean=time_mean.tolist(),
        time_std=time_std.tolist(),
        real_mean=real_mean.tolist(),
        real_std=real_std.tolist(),
        vocabs=vocabs,
        seq=seq,
    )


# ---------------------------------------------------------------------------
# Processed data


@dataclass
class SeqTensors:
    time: torch.Tensor   # (b, L)
    real: torch.Tensor   # (b, L, r, 3): normalized value, is_zero, is_nan
    cat: torch.Tensor    # (b, L, c) dense category indices
    mask: torch.Tensor   # (b, L) True at valid positions

    def to(self, dtype: torch.dtype) -> "SeqTensors":
        return SeqTensors(self.time.to(dtype), self.real.to(dtype), self.cat, self.mask)


@dataclass
class ProcessedBatch:
    dense: torch.Tensor
    cat: torch.Tensor
    seqs: dict[str, SeqTensors]
    labels: dict[str, torch.Tensor]

    def __len__(self) -> int:
        return self.dense.shape[0]

    def to(self, dtype: torch.dtype) -> "ProcessedBatch":
        return ProcessedBatch(self.dense.to(dtype), self.cat, {k: s.to(dtype) for k, s in self.seqs.items()}, self.labels)


@dataclass
class ProcessedEvents:
    offsets: np.ndarray
    time: np.ndarray   # (m,)
    real: np.ndarray   # (m, r, 3)
    cat: np.ndarray    # (m, c)
    max_len: int


@dataclass
class ProcessedData:
    dense: np.ndarray
    cat: np.ndarray
    seqs: dict[str, ProcessedEvents]
    labels: dict[str, np.ndarray]
    month: np.ndarray

    def __len__(self) -> int:
        return len(self.dense)

    def batch(self, idx, pad_to_max_len: bool = False) -> ProcessedBatch:
        """Gather records `idx`; sequences are padded to the longest one in
        the batch, or to the kind's max_len when `pad_to_max_len` is set."""
        idx = np.asarray(idx, dtype=np.int64)
        seqs = {}
        for kind, ev in self.seqs.items():
            lengths = ev.offsets[idx + 1] - ev.offsets[idx]
            L = ev.max_len if pad_to_max_len else max(1, int(lengths.max(initial=0)))
            b = len(idx)
            time = np.zeros((b, L), dtype=np.float32)
            real = np.zeros((b, L) + ev.real.shape[1:], dtype=np.float32)
            cat = np.zeros((b, L) + ev.cat.shape[1:], dtype=np.int64)
            mask = np.zeros((b, L), dtype=bool)
            rows = np.repeat(np.arange(b), lengths)
            cols = np.arange(int(lengths.sum())) - np.repeat(np.cumsum(lengths) - lengths, lengths)
            src = ev.offsets[idx][rows] + cols
            time[rows, cols] = ev.time[src]
            real[rows, cols] = ev.real[src]
            cat[rows, cols] = ev.cat[src]
            mask[rows, cols] = True
            seqs[kind] = SeqTensors(torch.from_numpy(time), torch.from_numpy(real), torch.from_numpy(cat), torch.from_numpy(mask))
        return ProcessedBatch(
            dense=torch.from_numpy(self.dense[idx]),
            cat=torch.from_numpy(self.cat[idx]),
            seqs=seqs,
            labels={k: torch.from_numpy(v[idx].astype(np.float32)) for k, v in self.labels.items()},
        )

    def batches(self, batch_size: int = 1000, indices=None) -> Iterator[ProcessedBatch]:
        indices = np.arange(len(self)) if indices is None else np.asarray(indices)
        for lo in range(0, len(indices), batch_size):
            yield self.batch(indices[lo:lo + batch_size])

    @classmethod
    def concat(cls, parts: list["ProcessedData"]) -> "ProcessedData":
        seqs = {}
        for kind, first in parts[0].seqs.items():
            evs = [p.seqs[kind] for p in parts]
            lengths = np.concatenate([np.diff(e.offsets) for e in evs])
            offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
            np.cumsum(lengths, out=offsets[1:])
            seqs[kind] = ProcessedEvents(offsets, np.concatenate([e.time for e in evs]),
                                         np.concatenate([e.real for e in evs]), np.concatenate([e.cat for e in evs]),
                                         first.max_len)
        return cls(
            np.concatenate([p.dense for p in parts]),
            np.concatenate([p.cat for p in parts]),
            seqs,
            {k: np.concatenate([p.labels[k] for p in parts]) for k in parts[0].labels},
            np.concatenate([p.month for p in parts]),
        )

    def subset(self, idx) -> "ProcessedData":
        idx = np.asarray(idx, dtype=np.int64)
        seqs = {}
        for kind, ev in self.seqs.items():
            lengths = ev.offsets[idx + 1] - ev.offsets[idx]
            offsets = np.zeros(len(idx) + 1, dtype=np.int64)
            np.cumsum(lengths, out=offsets[1:])
            rows = np.arange(int(lengths.sum())) - np.repeat(offsets[:-1], lengths) + np.repeat(ev.offsets[idx], lengths)
            seqs[kind] = ProcessedEvents(offsets, ev.time[rows], ev.real[rows], ev.cat[rows], ev.max_len)
        return ProcessedData(self.dense[idx], self.cat[idx], seqs, {k: v[idx] for k, v in self.labels.items()}, self.month[idx])


def _expand_block(values: np.ndarray, mean, std, indicators: bool) -> np.ndarray:
    filled, is_zero, is_nan = expand_indicators(values)
    normed = apply_normalize(filled, mean, std)
    if not indicators:
        return normed
    return np.concatenate([normed, is_zero, is_nan], axis=1)


def transform(data: RecordSet, artifacts: PreprocessArtifacts) -> ProcessedData:
    """Apply fitted pre-processing to any split."""
    if data.schema.to_dict() != artifacts.schema:
        raise ValueError("schema of the data does not match the schema the artifacts were fitted on")
    rel = encode_relative_time(data.nonseq_time, data.report_date[:, None])
    # missing time features land on the training mean
    time_block = np.nan_to_num(apply_normalize(rel, artifacts.time_mean, artifacts.time_std), nan=0.0)
    real_block = _expand_block(data.nonseq_real[:, artifacts.selected_real_features],
                               artifacts.real_mean, artifacts.real_std, artifacts.indicators)
    dense = np.concatenate([time_block, real_block], axis=1)
    cat = np.stack([merge_categories(data.nonseq_cat[:, j], v) for j, v in enumerate(artifacts.vocabs)], axis=1) \
        if artifacts.vocabs else np.zeros((len(data), 0), dtype=np.int64)

    seqs = {}
    for kind in KINDS:
        a = artifacts.seq[kind]
        table: EventTable = clip_events(data.sequences[kind], a.max_len)
        owner_report = np.repeat(data.report_date, table.lengths)
        t = apply_normalize(encode_relative_time(table.dates, owner_report).astype(np.float64),
                            a.time_mean, a.time_std)
        filled, is_zero, is_nan = expand_indicators(table.reals)
        real = np.stack([apply_normalize(filled, a.real_mean, a.real_std), is_zero, is_nan], axis=-1)
        cats = np.stack([merge_categories(table.cats[:, j], v) for j, v in enumerate(a.vocabs)], axis=1) \
            if a.vocabs else np.zeros((len(table.dates), 0), dtype=np.int64)
        seqs[kind] = ProcessedEvents(table.offsets, t.reshape(-1), real, cats, a.max_len)
    return ProcessedData(
        dense=dense,
        cat=cat,
        seqs=seqs,
        labels={k: np.asarray(v) for k, v in data.labels.items()},
        month=np.asarray(data.observation_month),
    )


@dataclass(frozen=True)
class InputDims:
    """Input widths a model needs, derived from fitted artifacts."""

    dense_width: int
    nonseq_vocab_sizes: tuple[int, ...]
    seq_real_counts: dict[str, int]
    seq_vocab_sizes: dict[str, tuple[int, ...]]

    @classmethod
    def from_artifacts(cls, artifacts: PreprocessArtifacts) -> "InputDims":
        return cls(
            dense_width=artifacts.dense_width,
            nonseq_vocab_sizes=tuple(v.size for v in artifacts.vocabs),
            seq_real_counts={k: len(a.real_mean) for k, a in artifacts.seq.items()},
            seq_vocab_sizes={k: tuple(v.size for v in a.vocabs) for k, a in artifacts.seq.items()},
        )

    def to_dict(self) -> dict:
        return {
            "dense_width": self.dense_width,
            "nonseq_vocab_sizes": list(self.nonseq_vocab_sizes),
            "seq_real_counts": dict(self.seq_real_counts),
            "seq_vocab_sizes": {k: list(v) for k, v in self.seq_vocab_sizes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputDims":
        return cls(d["dense_width"], tuple(d["nonseq_vocab_sizes"]), dict(d["seq_real_counts"]),
                   {k: tuple(v) for k, v in d["seq_vocab_sizes"].items()})
