"""Run configuration: one JSON document, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import EVAL_LABELS, FeatureSchema, SeqSpec
from .fusion import FUSIONS
from .losses import LOSSES
from .nonseq import NonSeqModelConfig
from .seq import SeqModelConfig
from .training import SAMPLINGS, TrainConfig


@dataclass
class DataConfig:
    n_records: int = 50000
    imbalance_long: float = 10.0
    imbalance_short: float = 50.0
    missing_rate: float = 0.1
    signal_strength: float = 1.0
    n_signal: int = 20
    nonseq_time_count: int = 13
    nonseq_real_count: int = 4098
    nonseq_cat_count: int = 9
    max_lens: dict[str, int] = field(default_factory=lambda: {"card": 32, "inquiry": 64, "loan": 128})
    cat_cardinality: int = 50
    train_months: list[int] = field(default_factory=lambda: list(range(1, 11)))
    test_months: list[int] = field(default_factory=lambda: [11, 12])

    def schema(self) -> FeatureSchema:
        base = FeatureSchema()
        specs = {k: SeqSpec(s.time_count, s.real_count, s.cat_count, self.max_lens.get(k, s.max_len))
                 for k, s in base.seq_specs.items()}
        return FeatureSchema(self.nonseq_time_count, self.nonseq_real_count, self.nonseq_cat_count, specs,
                             self.cat_cardinality)


@dataclass
class PreprocessConfig:
    k: int = 500
    indicators: bool = True
    selection_method: str = "xgboost"
    selector_max_rows: int | None = 15000


@dataclass
class FusionConfig:
    variant: str = "concat"

    def __post_init__(self):
        if self.variant not in FUSIONS:
            raise ValueError(f"fusion variant must be one of {FUSIONS}")


@dataclass
class StageConfig:
    epochs: int = 5
    loss: str = "wbce"
    sampling: str = "natural"

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"sampling must be one of {SAMPLINGS}")


@dataclass
class TrainingConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    batch_size: int = 1000
    label: str = "y_long"
    schedule: str = "separate_then_finetune"
    folds: int = 5
    ensemble: bool = False
    use_mlm: bool = True
    focal_gamma: float = 2.0
    focal_alpha: float | None = 0.25
    nonseq: StageConfig = field(default_factory=lambda: StageConfig(epochs=5, loss="wbce", sampling="natural"))
    seq: StageConfig = field(default_factory=lambda: StageConfig(epochs=8, loss="bce", sampling="oversample_1_1"))
    joint: StageConfig = field(default_factory=lambda: StageConfig(epochs=3, loss="wbce", sampling="natural"))
    mlm: StageConfig = field(default_factory=lambda: StageConfig(epochs=3))
    # joint model trained from scratch under the end_to_end schedule
    end_to_end: StageConfig = field(default_factory=lambda: StageConfig(epochs=5, loss="wbce", sampling="natural"))

    def stage(self, name: str, seed: int) -> TrainConfig:
        s: StageConfig = getattr(self, name)
        return TrainConfig(
            lr=self.lr, weight_decay=self.weight_decay, batch_size=self.batch_size, epochs=s.epochs,
            loss=s.loss, sampling=s.sampling, label=self.label, schedule=self.schedule, folds=self.folds,
            seed=seed, focal_gamma=self.focal_gamma, focal_alpha=self.focal_alpha,
        )


@dataclass
class EvaluationConfig:
    labels: list[str] = field(default_factory=lambda: list(EVAL_LABELS))
    model: str = "joint"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    ablation: dict[str, list] = field(default_factory=dict)
    bootstrap: bool = False
    n_bootstrap: int = 200


@dataclass
class RunConfig:
    seed: int
    data: DataConfig = field(default_factory=DataConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    model_nonseq: NonSeqModelConfig = field(default_factory=NonSeqModelConfig)
    model_seq: SeqModelConfig = field(default_factory=SeqModelConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "seed" not in d:
            raise ValueError("config must set 'seed'")
        return _from_dict(cls, d, "config")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _from_dict(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object, got {type(d).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _from_dict(hint, value, f"{where}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def apply_overrides(config: RunConfig, cell: dict) -> RunConfig:
    """Return a copy of `config` with ablation axis values applied."""
    c = RunConfig.from_dict(config.to_dict())
    for axis, value in cell.items():
        if axis == "schedule":
            c.training.schedule = value
        elif axis == "label":
            c.training.label = value
        elif axis == "k":
            c.preprocess.k = c.data.nonseq_real_count if value == "all" else int(value)
        elif axis == "indicators":
            c.preprocess.indicators = bool(value)
        elif axis == "loss":
            getattr(c.training, _stage_for(c)).loss = value
        elif axis == "sampling":
            getattr(c.training, _stage_for(c)).sampling = value
        elif axis == "mlm":
            c.training.use_mlm = bool(value)
        elif axis == "fusion":
            c.fusion.variant = value
        elif axis == "encoder":
            c.model_seq.encoder_variant = value
        else:
            raise ValueError(f"unknown ablation axis {axis!r}")
    return c


def _stage_for(config: RunConfig) -> str:
    if config.evaluation.model == "joint" and config.training.schedule == "end_to_end":
        return "end_to_end"
    return {"nonseq": "nonseq", "seq": "seq", "joint": "joint"}[config.evaluation.model]


# the model each axis is studied on when `ablate --axis` runs without a grid
AXIS_DEFAULTS: dict[str, tuple[str, list]] = {
    "schedule": ("joint", ["separate_then_finetune", "end_to_end", "finetune_frozen"]),
    "label": ("nonseq", ["y_long", "y_short_other1", "y_short_eval"]),
    "k": ("nonseq", [500, "all", 100]),
    "indicators": ("nonseq", [True, False]),
    "loss": ("nonseq", ["wbce", "bce", "focal"]),
    "sampling": ("nonseq", ["natural", "oversample_1_1"]),
    "mlm": ("seq", [True, False]),
    "fusion": ("joint", ["concat", "add_attn", "mul_attn"]),
    "encoder": ("seq", ["pooled_mlp", "lstm", "transformer"]),
}
