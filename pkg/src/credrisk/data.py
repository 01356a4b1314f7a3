"""Credit-report data model, synthetic generator and on-disk dataset format.

Records are stored column-wise: one array per non-sequential feature group
and one ragged event table per sequence kind (CSR-style offsets).  Dates are
integer day offsets from a fixed epoch; a record's observation month is
derived from its report date.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

KINDS = ("card", "inquiry", "loan")
LABELS = ("y_long", "y_short_eval", "y_short_other1", "y_short_other2", "y_short_other3")
EVAL_LABELS = ("y_short_eval", "y_short_other2", "y_short_other3")

# Missing markers: NaN for time/real slots, -1 for category slots.
MISSING_CAT = -1

# Day offset of the first day of observation month 1; histories reach back
# several years before it.
REPORT_EPOCH = 3650
DAYS_PER_MONTH = 30


def month_of(report_date) -> np.ndarray:
    return (np.asarray(report_date) - REPORT_EPOCH) // DAYS_PER_MONTH + 1


@dataclass(frozen=True)
class SeqSpec:
    time_count: int
    real_count: int
    cat_count: int
    max_len: int


def _default_seq_specs() -> dict[str, SeqSpec]:
    return {
        "card": SeqSpec(1, 2, 5, 32),
        "inquiry": SeqSpec(1, 0, 2, 64),
        "loan": SeqSpec(1, 4, 5, 128),
    }


@dataclass(frozen=True)
class FeatureSchema:
    nonseq_time_count: int = 13
    nonseq_real_count: int = 4098
    nonseq_cat_count: int = 9
    seq_specs: dict[str, SeqSpec] = field(default_factory=_default_seq_specs)
    cat_cardinality: int = 50

    def __post_init__(self):
        counts = (self.nonseq_time_count, self.nonseq_real_count, self.nonseq_cat_count)
        if min(counts) < 0:
            raise ValueError("feature counts must be non-negative")
        if set(self.seq_specs) != set(KINDS):
            raise ValueError(f"seq_specs must cover exactly {KINDS}")
        for kind, spec in self.seq_specs.items():
            if min(spec.time_count, spec.real_count, spec.cat_count) < 0:
                raise ValueError(f"{kind}: feature counts must be non-negative")
            if spec.max_len <= 0:
                raise ValueError(f"{kind}: max_len must be positive")
        if self.cat_cardinality < 1:
            raise ValueError("cat_cardinality must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        d = dict(d)
        if "seq_specs" in d:
            d["seq_specs"] = {k: SeqSpec(**v) for k, v in d["seq_specs"].items()}
        return cls(**d)


@dataclass(frozen=True)
class EventSequence:
    """Events of one kind for a single record, ascending by date."""

    kind: str
    dates: np.ndarray
    reals: np.ndarray
    cats: np.ndarray

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class EventTable:
    """All events of one kind; events of record i are rows offsets[i]:offsets[i+1]."""

    offsets: np.ndarray
    dates: np.ndarray
    reals: np.ndarray
    cats: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def sequence(self, kind: str, i: int) -> EventSequence:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return EventSequence(kind, self.dates[lo:hi], self.reals[lo:hi], self.cats[lo:hi])

    def take(self, idx: np.ndarray) -> "EventTable":
        idx = np.asarray(idx, dtype=np.int64)
        lengths = self.lengths[idx]
        offsets = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        rows = _ragged_rows(self.offsets[idx], lengths)
        return EventTable(offsets, self.dates[rows], self.reals[rows], self.cats[rows])


def _ragged_rows(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenation of arange(s, s + n) for every (s, n)."""
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    shift = np.repeat(starts - (ends - lengths), lengths)
    return np.arange(total, dtype=np.int64) + shift


def clip_events(table: EventTable, max_len: int) -> EventTable:
    """Keep only the `max_len` latest events of every record."""
    lengths = table.lengths
    kept = np.minimum(lengths, max_len)
    starts = table.offsets[1:] - kept
    rows = _ragged_rows(starts, kept)
    offsets = np.zeros(len(kept) + 1, dtype=np.int64)
    np.cumsum(kept, out=offsets[1:])
    return EventTable(offsets, table.dates[rows], table.reals[rows], table.cats[rows])


@dataclass(frozen=True)
class Record:
    record_id: int
    observation_month: int
    report_date: int
    nonseq_time: np.ndarray
    nonseq_real: np.ndarray
    nonseq_cat: np.ndarray
    sequences: dict[str, EventSequence]
    labels: dict[str, int]


@dataclass(frozen=True)
class RecordSet:
    schema: FeatureSchema
    record_id: np.ndarray
    report_date: np.ndarray
    nonseq_time: np.ndarray
    nonseq_real: np.ndarray
    nonseq_cat: np.ndarray
    sequences: dict[str, EventTable]
    labels: dict[str, np.ndarray]
    # ground truth known only for generated data
    risk: np.ndarray | None = None
    signal_indices: tuple[int, ...] = ()

    def __post_init__(self):
        n = len(self.record_id)
        s = self.schema
        expected = {
            "nonseq_time": (n, s.nonseq_time_count),
            "nonseq_real": (n, s.nonseq_real_count),
            "nonseq_cat": (n, s.nonseq_cat_count),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, schema says {shape}")
        for kind, spec in s.seq_specs.items():
            t = self.sequences[kind]
            if len(t.offsets) != n + 1:
                raise ValueError(f"{kind}: offsets do not match record count")
            if t.reals.shape[1:] != (spec.real_count,) or t.cats.shape[1:] != (spec.cat_count,):
                raise ValueError(f"{kind}: event feature widths do not match schema")
        for name in LABELS:
            if self.labels[name].shape != (n,):
                raise ValueError(f"label {name} has wrong length")

    def __len__(self) -> int:
        return len(self.record_id)

    @property
    def observation_month(self) -> np.ndarray:
        return month_of(self.report_date)

    def record(self, i: int) -> Record:
        return Record(
            record_id=int(self.record_id[i]),
            observation_month=int(self.observation_month[i]),
            report_date=int(self.report_date[i]),
            nonseq_time=self.nonseq_time[i],
            nonseq_real=self.nonseq_real[i],
            nonseq_cat=self.nonseq_cat[i],
            sequences={k: t.sequence(k, i) for k, t in self.sequences.items()},
            labels={k: int(v[i]) for k, v in self.labels.items()},
        )

    def __iter__(self) -> Iterator[Record]:
        return (self.record(i) for i in range(len(self)))

    def subset(self, idx) -> "RecordSet":
        idx = np.asarray(idx, dtype=np.int64)
        return RecordSet(
            schema=self.schema,
            record_id=self.record_id[idx],
            report_date=self.report_date[idx],
            nonseq_time=self.nonseq_time[idx],
            nonseq_real=self.nonseq_real[idx],
            nonseq_cat=self.nonseq_cat[idx],
            sequences={k: t.take(idx) for k, t in self.sequences.items()},
            labels={k: v[idx] for k, v in self.labels.items()},
            risk=None if self.risk is None else self.risk[idx],
            signal_indices=self.signal_indices,
        )


# ---------------------------------------------------------------------------
# Generator


@dataclass(frozen=True)
class _LabelPlan:
    ratio_scale: float
    noise_sd: float
    drift: float


def _month_drift(amplitude: float, phase: float) -> np.ndarray:
    m = np.arange(12)
    return np.exp(amplitude * np.sin(2 * np.pi * m / 12 + phase))


def generate_dataset(
    schema: FeatureSchema | None = None,
    n_records: int = 5000,
    imbalance_long: float = 10.0,
    imbalance_short: float = 50.0,
    missing_rate: float = 0.1,
    signal_strength: float = 1.0,
    seed: int = 0,
    n_signal: int = 20,
) -> RecordSet:
    """Generate a synthetic credit-report dataset with a planted risk signal.

    A standard-normal latent risk per record shifts `n_signal` non-sequential
    real features, some time and category features, and the rates, values and
    categories of sequence events.  Each label thresholds a noisy copy of the
    risk within every observation month so that month-level negative:positive
    ratios match their targets (stable for ``y_long``, drifting for the
    short-term labels).
    """
    schema = schema or FeatureSchema()
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    if imbalance_long < 1 or imbalance_short < 1:
        raise ValueError("imbalance ratios must be >= 1")
    if not 0 <= missing_rate < 1:
        raise ValueError("missing_rate must be in [0, 1)")
    n_signal = min(n_signal, schema.nonseq_real_count)

    rng = np.random.default_rng(seed)
    n = n_records
    s = signal_strength
    risk = rng.standard_normal(n)
    month = rng.integers(1, 13, size=n)
    report_date = REPORT_EPOCH + (month - 1) * DAYS_PER_MONTH + rng.integers(0, DAYS_PER_MONTH, size=n)

    labels = _generate_labels(rng, risk, month, imbalance_long, imbalance_short)

    nonseq_time = _generate_nonseq_time(rng, schema.nonseq_time_count, risk, report_date, s, missing_rate)
    signal_idx = np.sort(rng.choice(schema.nonseq_real_count, size=n_signal, replace=False))
    nonseq_real = _generate_nonseq_real(rng, schema.nonseq_real_count, signal_idx, risk, s, missing_rate)
    nonseq_cat = _generate_categories(
        rng, (n, schema.nonseq_cat_count), risk, schema.cat_cardinality,
        n_tilted=min(3, schema.nonseq_cat_count), strength=s, missing_rate=missing_rate,
    )

    sequences = {
        kind: _generate_events(rng, kind, schema.seq_specs[kind], risk, report_date, schema.cat_cardinality, s, missing_rate)
        for kind in KINDS
    }

    for name, y in labels.items():
        pos = int(y.sum())
        if pos == 0 or pos == n:
            raise ValueError(f"n_records={n} too small: label {name} has a single class")

    data = RecordSet(
        schema=schema,
        record_id=np.arange(n, dtype=np.int64),
        report_date=report_date.astype(np.int64),
        nonseq_time=nonseq_time,
        nonseq_real=nonseq_real,
        nonseq_cat=nonseq_cat,
        sequences=sequences,
        labels=labels,
        risk=risk,
        signal_indices=tuple(int(i) for i in signal_idx),
    )
    _freeze(data)
    return data


def _freeze(data: RecordSet) -> None:
    arrays = [data.record_id, data.report_date, data.nonseq_time, data.nonseq_real, data.nonseq_cat]
    arrays += list(data.labels.values())
    for t in data.sequences.values():
        arrays += [t.offsets, t.dates, t.reals, t.cats]
    if data.risk is not None:
        arrays.append(data.risk)
    for a in arrays:
        a.setflags(write=False)


def _generate_labels(rng, risk, month, imbalance_long, imbalance_short) -> dict[str, np.ndarray]:
    n = len(risk)
    e_first, e_second, e_third, e_long = rng.standard_normal((4, n))
    # first-installment labels share noise so i1label30 positives are nested in i1label15's
    first = risk + 1.0 * e_first
    second = risk + 1.0 * (0.6 * e_first + 0.8 * e_second)
    third = risk + 1.0 * (0.6 * e_first + 0.8 * e_third)
    long_term = risk + 0.8 * (0.3 * e_first + np.sqrt(1 - 0.09) * e_long)
    plans = {
        "y_long": (long_term, imbalance_long * np.ones(12)),
        "y_short_eval": (first, imbalance_short * _month_drift(0.2, 0.0)),
        "y_short_other1": (first, 0.6 * imbalance_short * _month_drift(0.2, 0.0)),
        "y_short_other2": (second, 1.1 * imbalance_short * _month_drift(0.15, 1.0)),
        "y_short_other3": (third, 1.2 * imbalance_short * _month_drift(0.15, 2.0)),
    }
    out = {}
    for name, (latent, ratios) in plans.items():
        y = np.zeros(n, dtype=np.int8)
        for m in range(1, 13):
            idx = np.flatnonzero(month == m)
            if len(idx) == 0:
                continue
            ratio = max(ratios[m - 1], 1.0)
            n_pos = int(round(len(idx) / (1.0 + ratio)))
            if n_pos == 0:
                continue
            top = idx[np.argsort(-latent[idx], kind="stable")[:n_pos]]
            y[top] = 1
        out[name] = y
    return out


def _generate_nonseq_time(rng, count, risk, report_date, s, missing_rate) -> np.ndarray:
    n = len(risk)
    # log-days since each dated event; the first few shrink with risk (newer accounts)
    base = rng.uniform(4.5, 7.5, size=count)
    effect = np.zeros(count)
    effect[: min(3, count)] = -0.25 * s
    log_days = base + effect * risk[:, None] + 0.6 * rng.standard_normal((n, count))
    days = np.round(np.exp(log_days))
    out = (report_date[:, None] - days).astype(np.float32)
    out[rng.random((n, count)) < missing_rate] = np.nan
    return out


def _generate_nonseq_real(rng, count, signal_idx, risk, s, missing_rate, chunk=512) -> np.ndarray:
    n = len(risk)
    out = np.empty((n, count), dtype=np.float32)
    scale = np.exp(rng.uniform(-1.0, 4.0, size=count)).astype(np.float32)
    offset = (rng.uniform(0.0, 3.0, size=count) * scale).astype(np.float32)
    zero_frac = np.where(rng.random(count) < 0.3, rng.uniform(0.2, 0.6, size=count), 0.0)
    weight = np.zeros(count)
    weight[signal_idx] = rng.uniform(0.15, 0.3, size=len(signal_idx)) * rng.choice([-1, 1], size=len(signal_idx))
    # a third of the signal features carry risk-dependent missingness
    informative_missing = np.zeros(count, dtype=bool)
    informative_missing[signal_idx[::3]] = True
    r32 = risk.astype(np.float32)
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        block = rng.standard_normal((n, hi - lo), dtype=np.float32)
        w = weight[lo:hi]
        sig = np.flatnonzero(w)
        if len(sig):
            block[:, sig] = np.sqrt(1 - w[sig] ** 2).astype(np.float32) * block[:, sig] + (s * w[sig]).astype(np.float32) * r32[:, None]
        block *= scale[lo:hi]
        block += offset[lo:hi]
        u = rng.random((n, hi - lo), dtype=np.float32)
        block[u < zero_frac[lo:hi]] = 0.0
        u = rng.random((n, hi - lo), dtype=np.float32)
        p_missing = np.full((n, hi - lo), missing_rate, dtype=np.float32)
        inf = np.flatnonzero(informative_missing[lo:hi])
        if len(inf):
            tilt = 2.0 / (1.0 + np.exp(-0.8 * s * risk))
            p_missing[:, inf] = np.minimum(missing_rate * tilt, 0.95)[:, None]
        block[u < p_missing] = np.nan
        out[:, lo:hi] = block
    return out


def _zipf_probs(cardinality: int, a: float = 1.1) -> np.ndarray:
    p = 1.0 / np.arange(1, cardinality + 1) ** a
    return p / p.sum()


def _generate_categories(rng, shape, owner_risk, cardinality, n_tilted, strength, missing_rate) -> np.ndarray:
    """Zipf-distributed raw ids; the first `n_tilted` columns switch to a small
    risky id set with probability increasing in the owner's risk."""
    rows, cols = shape
    base = rng.choice(cardinality, size=shape, p=_zipf_probs(cardinality)).astype(np.int32)
    for j in range(n_tilted):
        risky = rng.choice(cardinality, size=min(3, cardinality), replace=False)
        p_switch = 1.0 / (1.0 + np.exp(-(strength * 1.0 * owner_risk - 2.5)))
        switch = rng.random(rows) < p_switch
        base[switch, j] = rng.choice(risky, size=int(switch.sum()))
    base[rng.random(shape) < missing_rate] = MISSING_CAT
    return base


def _generate_events(rng, kind, spec: SeqSpec, risk, report_date, cardinality, s, missing_rate) -> EventTable:
    n = len(risk)
    mean_len = {"card": 5.0, "inquiry": 9.0, "loan": 10.0}[kind]
    rate_effect = {"card": 0.1, "inquiry": 0.35, "loan": 0.15}[kind]
    lam = mean_len * rng.gamma(2.0, 0.5, size=n) * np.exp(rate_effect * s * risk)
    counts = rng.poisson(lam)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    m = int(offsets[-1])
    owner = np.repeat(np.arange(n), counts)
    r = risk[owner]

    # days before the report; risky applicants' events skew recent
    horizon = {"card": 2500.0, "inquiry": 700.0, "loan": 1800.0}[kind]
    ago = np.floor(rng.random(m) ** (1.0 + 0.3 * np.clip(s * r, -2, 2) * (kind == "inquiry")) * horizon)
    # sort each record's events ascending by date (descending by days-ago)
    order = np.lexsort((-ago, owner))
    ago = ago[order]
    dates = (report_date[owner] - ago).astype(np.int64)

    reals = np.empty((m, spec.real_count), dtype=np.float32)
    for j in range(spec.real_count):
        w = (0.35 if j % 2 == 0 else -0.25) * s
        log_v = rng.uniform(6.0, 10.0) + w * r + 0.8 * rng.standard_normal(m)
        v = np.exp(log_v)
        if j == spec.real_count - 1:
            # overdue-style amount: usually exactly zero, positive more often for risky owners
            nonzero = rng.random(m) < 1.0 / (1.0 + np.exp(-(s * r - 2.0)))
            v = np.where(nonzero, v, 0.0)
        reals[:, j] = v
    reals[rng.random(reals.shape) < missing_rate] = np.nan

    cats = _generate_categories(
        rng, (m, spec.cat_count), r, cardinality,
        n_tilted=min(2, spec.cat_count), strength=s, missing_rate=missing_rate,
    )
    table = EventTable(offsets, dates, reals, cats)
    return clip_events(table, spec.max_len)


# ---------------------------------------------------------------------------
# Splits and statistics


def split_out_of_time(data: RecordSet, train_months=range(1, 11), test_months=range(11, 13)) -> tuple[RecordSet, RecordSet]:
    train_months, test_months = set(train_months), set(test_months)
    if not train_months or not test_months:
        raise ValueError("month ranges must be non-empty")
    if train_months & test_months:
        raise ValueError(f"train and test months overlap: {sorted(train_months & test_months)}")
    if max(train_months) >= min(test_months):
        raise ValueError("every test month must follow every train month")
    month = data.observation_month
    train_idx = np.flatnonzero(np.isin(month, list(train_months)))
    test_idx = np.flatnonzero(np.isin(month, list(test_months)))
    return data.subset(train_idx), data.subset(test_idx)


def imbalance_by_month(data: RecordSet, label: str) -> list[tuple[int, float]]:
    """Negative:positive ratio per observation month; NaN marks a month without positives."""
    if label not in data.labels:
        raise KeyError(f"unknown label {label!r}")
    y = data.labels[label]
    month = data.observation_month
    out = []
    for m in np.unique(month):
        ym = y[month == m]
        pos = int(ym.sum())
        neg = len(ym) - pos
        out.append((int(m), neg / pos if pos else float("nan")))
    return out


# ---------------------------------------------------------------------------
# Persistence


def _nonseq_columns(schema: FeatureSchema) -> dict[str, list[str]]:
    return {
        "time": [f"t{j}" for j in range(schema.nonseq_time_count)],
        "real": [f"r{j}" for j in range(schema.nonseq_real_count)],
        "cat": [f"c{j}" for j in range(schema.nonseq_cat_count)],
    }


def _event_columns(spec: SeqSpec) -> dict[str, list[str]]:
    return {
        "real": [f"r{j}" for j in range(spec.real_count)],
        "cat": [f"c{j}" for j in range(spec.cat_count)],
    }


def _cat_frame(values: np.ndarray, columns: list[str]) -> pd.DataFrame:
    return pd.DataFrame({c: pd.array(np.where(values[:, j] == MISSING_CAT, None, values[:, j]), dtype="Int64")
                         for j, c in enumerate(columns)})


def save_dataset(data: RecordSet, path) -> None:
    """Write `schema.json`, `records.csv` and `events_<kind>.csv`; missing values are empty cells."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cols = _nonseq_columns(data.schema)
    record_columns = ["record_id", "observation_month", "report_date"] + cols["time"] + cols["real"] + cols["cat"] + list(LABELS)
    meta = {
        "schema": data.schema.to_dict(),
        "record_columns": record_columns,
        "event_columns": {k: ["record_id", "event_date_offset"] + sum(_event_columns(s).values(), [])
                          for k, s in data.schema.seq_specs.items()},
        "missing": "empty cell",
        "date_encoding": f"integer day offset; observation month = (report_date - {REPORT_EPOCH}) // {DAYS_PER_MONTH} + 1",
        "signal_indices": list(data.signal_indices),
    }
    (path / "schema.json").write_text(json.dumps(meta, indent=2))

    frames = [
        pd.DataFrame({"record_id": data.record_id, "observation_month": data.observation_month, "report_date": data.report_date}),
        pd.DataFrame(data.nonseq_time, columns=cols["time"]),
        pd.DataFrame(data.nonseq_real, columns=cols["real"]),
        _cat_frame(data.nonseq_cat, cols["cat"]),
        pd.DataFrame({k: data.labels[k] for k in LABELS}),
    ]
    pd.concat(frames, axis=1).to_csv(path / "records.csv", index=False, na_rep="", float_format="%.9g")

    for kind, table in data.sequences.items():
        ec = _event_columns(data.schema.seq_specs[kind])
        frames = [
            pd.DataFrame({"record_id": np.repeat(data.record_id, table.lengths), "event_date_offset": table.dates}),
            pd.DataFrame(table.reals, columns=ec["real"]),
            _cat_frame(table.cats, ec["cat"]),
        ]
        pd.concat(frames, axis=1).to_csv(path / f"events_{kind}.csv", index=False, na_rep="", float_format="%.9g")


def _cats_from(frame: pd.DataFrame, columns: list[str]) -> np.ndarray:
    if not columns:
        return np.zeros((len(frame), 0), dtype=np.int32)
    return frame[columns].fillna(MISSING_CAT).to_numpy(dtype=np.int32)


def load_dataset(path) -> RecordSet:
    path = Path(path)
    if not (path / "schema.json").exists():
        raise FileNotFoundError(f"{path} is not a dataset directory (no schema.json); run `generate-data` first")
    meta = json.loads((path / "schema.json").read_text())
    schema = FeatureSchema.from_dict(meta["schema"])
    cols = _nonseq_columns(schema)
    rec = pd.read_csv(path / "records.csv", dtype={c: np.float32 for c in cols["time"] + cols["real"]})
    record_id = rec["record_id"].to_numpy(dtype=np.int64)
    position = pd.Series(np.arange(len(rec)), index=record_id)
    sequences = {}
    for kind, spec in schema.seq_specs.items():
        ec = _event_columns(spec)
        ev = pd.read_csv(path / f"events_{kind}.csv", dtype={c: np.float32 for c in ec["real"]})
        owner = position.loc[ev["record_id"].to_numpy()].to_numpy()
        counts = np.bincount(owner, minlength=len(rec))
        offsets = np.zeros(len(rec) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        order = np.argsort(owner, kind="stable")
        reals = ev[ec["real"]].to_numpy(dtype=np.float32) if ec["real"] else np.zeros((len(ev), 0), np.float32)
        sequences[kind] = EventTable(
            offsets,
            ev["event_date_offset"].to_numpy(dtype=np.int64)[order],
            reals[order],
            _cats_from(ev, ec["cat"])[order],
        )
    time = rec[cols["time"]].to_numpy(dtype=np.float32) if cols["time"] else np.zeros((len(rec), 0), np.float32)
    real = rec[cols["real"]].to_numpy(dtype=np.float32) if cols["real"] else np.zeros((len(rec), 0), np.float32)
    data = RecordSet(
        schema=schema,
        record_id=record_id,
        report_date=rec["report_date"].to_numpy(dtype=np.int64),
        nonseq_time=time,
        nonseq_real=real,
        nonseq_cat=_cats_from(rec, cols["cat"]),
        sequences=sequences,
        labels={k: rec[k].to_numpy(dtype=np.int8) for k in LABELS},
        signal_indices=tuple(meta.get("signal_indices", ())),
    )
    _freeze(data)
    return data
