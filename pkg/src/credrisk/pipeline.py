"""End-to-end experiment: preprocess -> separate training -> joint fine-tuning -> evaluation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import torch.nn as nn

from .config import RunConfig, apply_overrides
from .data import RecordSet, generate_dataset, split_out_of_time
from .evaluation import EvalReport, evaluate
from .nonseq import init_nonseq
from .preprocess import InputDims, PreprocessArtifacts, ProcessedData, fit_feature_selector, fit_preprocess, transform
from .seq import init_seq
from .training import PretrainResult, TrainResult, joint_finetune, kfold_ensemble, pretrain_mlm, train_model

log = logging.getLogger(__name__)

# per-stage seed offsets so every stage draws from its own stream
SEED_OFFSETS = {"nonseq": 1, "mlm": 2, "seq": 3, "joint": 4, "selector": 5}


def stage_seed(seed: int, stage: str) -> int:
    return seed * 100 + SEED_OFFSETS[stage]


def make_data(cfg: RunConfig) -> tuple[RecordSet, RecordSet]:
    d = cfg.data
    data = generate_dataset(d.schema(), d.n_records, d.imbalance_long, d.imbalance_short, d.missing_rate,
                            d.signal_strength, cfg.seed, d.n_signal)
    return split_out_of_time(data, d.train_months, d.test_months)


@dataclass
class Prepared:
    artifacts: PreprocessArtifacts
    dims: InputDims
    fit: ProcessedData
    valid: ProcessedData
    test: ProcessedData


def feature_ranking(cfg: RunConfig, train: RecordSet, cache: dict | None = None) -> list[int]:
    """Full importance ranking of the non-sequential real features for the training label."""
    cache = {} if cache is None else cache
    key = ("ranking", cfg.training.label, cfg.preprocess.selection_method, cfg.seed)
    if key not in cache:
        cache[key] = fit_feature_selector(
            train, cfg.training.label, train.schema.nonseq_real_count, method=cfg.preprocess.selection_method,
            seed=stage_seed(cfg.seed, "selector"), max_rows=cfg.preprocess.selector_max_rows)
    return cache[key]


def validation_mask(cfg: RunConfig, month: np.ndarray) -> np.ndarray:
    return month == max(cfg.data.train_months)


def apply_artifacts(cfg: RunConfig, artifacts: PreprocessArtifacts, train: RecordSet,
                    test: RecordSet) -> Prepared:
    processed = transform(train, artifacts)
    valid_mask = validation_mask(cfg, processed.month)
    return Prepared(
        artifacts, InputDims.from_artifacts(artifacts),
        processed.subset(np.flatnonzero(~valid_mask)), processed.subset(np.flatnonzero(valid_mask)),
        transform(test, artifacts),
    )


def prepare(cfg: RunConfig, train: RecordSet, test: RecordSet, cache: dict | None = None) -> Prepared:
    """Fit artifacts on the training split and transform all parts.

    The last training month is held out for validation (best-epoch choice).
    """
    cache = {} if cache is None else cache
    p = cfg.preprocess
    key = ("prepared", cfg.training.label, p.k, p.indicators, p.selection_method, cfg.seed)
    if key in cache:
        return cache[key]
    ranking = feature_ranking(cfg, train, cache)
    artifacts = fit_preprocess(train, cfg.training.label, p.k, p.indicators, selected=ranking)
    prepared = apply_artifacts(cfg, artifacts, train, test)
    # keep one prepared entry: they are large
    for k in [k for k in cache if k[0] == "prepared"]:
        del cache[k]
    cache[key] = prepared
    return prepared


@dataclass
class ExperimentResult:
    report: EvalReport
    predictor: nn.Module | object
    stages: dict[str, TrainResult | PretrainResult] = field(default_factory=dict)


def fit_stages(cfg: RunConfig, dims: InputDims, fit: ProcessedData, valid: ProcessedData,
               model: str | None = None) -> tuple[nn.Module, dict]:
    """Train everything `model` (nonseq / seq / joint) needs, in pipeline order."""
    model = model or cfg.evaluation.model
    t = cfg.training
    stages: dict = {}
    need_ns = model in ("nonseq", "joint")
    need_s = model in ("seq", "joint")
    if model == "joint" and t.schedule == "end_to_end":
        need_ns = need_s = False
    ns = init_nonseq(cfg.model_nonseq, dims, stage_seed(cfg.seed, "nonseq"))
    s = init_seq(cfg.model_seq, dims, stage_seed(cfg.seed, "seq"))
    if need_ns:
        stages["nonseq"] = train_model(ns, fit, t.stage("nonseq", stage_seed(cfg.seed, "nonseq")), valid)
    if need_s:
        if t.use_mlm:
            stages["mlm"] = pretrain_mlm(s, fit, t.stage("mlm", stage_seed(cfg.seed, "mlm")), valid)
        stages["seq"] = train_model(s, fit, t.stage("seq", stage_seed(cfg.seed, "seq")), valid)
    if model == "nonseq":
        return ns, stages
    if model == "seq":
        return s, stages
    stage = "end_to_end" if t.schedule == "end_to_end" else "joint"
    stages["joint"] = joint_finetune(ns, s, fit, t.stage(stage, stage_seed(cfg.seed, "joint")), valid,
                                     cfg.fusion.variant)
    return stages["joint"].model, stages


def run_experiment(cfg: RunConfig, train: RecordSet, test: RecordSet, cache: dict | None = None) -> ExperimentResult:
    start = time.perf_counter()
    prepared = prepare(cfg, train, test, cache)
    if cfg.training.ensemble:
        merged = ProcessedData.concat([prepared.fit, prepared.valid])

        def fit_fold(part, held_out, fold_cfg):
            _, st = fit_stages(cfg.with_seed(fold_cfg.seed), prepared.dims, part, held_out)
            return st[cfg.evaluation.model]

        fold_cfg = cfg.training.stage(cfg.evaluation.model, cfg.seed)
        results, predictor = kfold_ensemble(merged, fold_cfg, fit_fold)
        stages = {f"fold{i}": r for i, r in enumerate(results)}
    else:
        predictor, stages = fit_stages(cfg, prepared.dims, prepared.fit, prepared.valid)
    e = cfg.evaluation
    report = evaluate(predictor, prepared.test, labels=e.labels, config_hash=cfg.hash(), seed=cfg.seed,
                      bootstrap=e.bootstrap, n_bootstrap=e.n_bootstrap)
    report.wall_time = time.perf_counter() - start
    return ExperimentResult(report, predictor, stages)


def run_cell(cfg: RunConfig, cell: dict, train: RecordSet, test: RecordSet, cache: dict) -> EvalReport:
    return run_experiment(apply_overrides(cfg, cell), train, test, cache).report
