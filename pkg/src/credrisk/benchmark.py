"""Synthetic end-to-end benchmark and the pre-training effect experiment.

The benchmark trains, per seed, the non-sequential model, the sequential
model (with pre-training if enabled), the concat joint model fine-tuned from
those two, and a joint model trained end to end from scratch.  Each is scored
on the out-of-time test months against a label-shuffled control.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import RunConfig
from .evaluation import auc, auc_null_std, predict_proba, shuffled_control_auc
from .pipeline import make_data, prepare, stage_seed
from .nonseq import init_nonseq
from .seq import init_seq
from .training import joint_finetune, pretrain_mlm, train_model

log = logging.getLogger(__name__)

MODELS = ("nonseq", "seq", "joint", "end_to_end")


@dataclass
class ModelScore:
    auc: float
    control_auc: float
    null_std: float

    @property
    def margin_sigmas(self) -> float:
        return (self.auc - self.control_auc) / self.null_std


@dataclass
class SeedResult:
    seed: int
    scores: dict[str, dict[str, ModelScore]]  # model -> label -> score
    wall_time: float


@dataclass
class BenchmarkResult:
    labels: list[str]
    seeds: list[SeedResult] = field(default_factory=list)

    def mean_auc(self, model: str, label: str) -> float:
        return float(np.mean([s.scores[model][label].auc for s in self.seeds]))

    def min_margin_sigmas(self) -> float:
        return min(sc.margin_sigmas for s in self.seeds for m in s.scores.values() for sc in m.values())

    @property
    def wall_time(self) -> float:
        return sum(s.wall_time for s in self.seeds)

    def to_json(self) -> str:
        return json.dumps({"labels": self.labels, "seeds": [asdict(s) for s in self.seeds]}, indent=2)

    def to_markdown(self) -> str:
        lines = ["| model | " + " | ".join(self.labels) + " |", "|---|" + "---|" * len(self.labels)]
        for m in MODELS:
            lines.append(f"| {m} | " + " | ".join(f"{self.mean_auc(m, lab):.4f}" for lab in self.labels) + " |")
        return "\n".join(lines) + "\n"


def _score(model, data, labels, seed: int) -> dict[str, ModelScore]:
    probs = predict_proba(model, data)
    out = {}
    for name in labels:
        y = data.labels[name]
        p = int(y.sum())
        out[name] = ModelScore(auc(probs, y), shuffled_control_auc(probs, y, seed), auc_null_std(p, len(y) - p))
    return out


def run_seed(cfg: RunConfig) -> SeedResult:
    start = time.perf_counter()
    train, test = make_data(cfg)
    prep = prepare(cfg, train, test)
    del train
    t = cfg.training
    labels = cfg.evaluation.labels
    seed = cfg.seed

    ns = init_nonseq(cfg.model_nonseq, prep.dims, stage_seed(seed, "nonseq"))
    train_model(ns, prep.fit, t.stage("nonseq", stage_seed(seed, "nonseq")), prep.valid)
    log.info("seed %d nonseq done %.0fs", seed, time.perf_counter() - start)

    s = init_seq(cfg.model_seq, prep.dims, stage_seed(seed, "seq"))
    if t.use_mlm:
        pretrain_mlm(s, prep.fit, t.stage("mlm", stage_seed(seed, "mlm")), prep.valid)
    train_model(s, prep.fit, t.stage("seq", stage_seed(seed, "seq")), prep.valid)
    log.info("seed %d seq done %.0fs", seed, time.perf_counter() - start)

    joint_cfg = t.stage("joint", stage_seed(seed, "joint"))
    joint = joint_finetune(ns, s, prep.fit, joint_cfg, prep.valid, "concat").model
    log.info("seed %d joint done %.0fs", seed, time.perf_counter() - start)

    e2e_cfg = t.stage("end_to_end", stage_seed(seed, "joint"))
    e2e_cfg.schedule = "end_to_end"
    e2e = joint_finetune(ns, s, prep.fit, e2e_cfg, prep.valid, "concat").model
    log.info("seed %d end_to_end done %.0fs", seed, time.perf_counter() - start)

    scores = {name: _score(m, prep.test, labels, seed)
              for name, m in zip(MODELS, (ns, s, joint, e2e))}
    return SeedResult(seed, scores, time.perf_counter() - start)


def run_benchmark(cfg: RunConfig, seeds=None) -> BenchmarkResult:
    seeds = list(cfg.evaluation.seeds if seeds is None else seeds)
    result = BenchmarkResult(list(cfg.evaluation.labels))
    for seed in seeds:
        result.seeds.append(run_seed(cfg.with_seed(seed)))
    return result


# ---------------------------------------------------------------------------
# Pre-training effect


@dataclass
class MLMEffectSeed:
    seed: int
    baseline_curve: list[float]   # validation AUC per supervised epoch, epoch 0 first
    pretrained_curve: list[float]
    mlm_train_loss: list[float]

    @property
    def baseline_best_epoch(self) -> int:
        curve = self.baseline_curve[1:]
        return int(np.argmax(curve)) + 1

    @property
    def pretrained_epochs_to_baseline(self) -> int | None:
        """First supervised epoch at which the pre-trained model matches the baseline's best AUC."""
        target = max(self.baseline_curve[1:])
        for epoch, a in enumerate(self.pretrained_curve[1:], start=1):
            if a >= target:
                return epoch
        return None

    @property
    def success(self) -> bool:
        e = self.pretrained_epochs_to_baseline
        return e is not None and e <= self.baseline_best_epoch


def mlm_effect(cfg: RunConfig, seeds=None) -> list[MLMEffectSeed]:
    """Sequential model trained with and without pre-training from the same initialisation."""
    out = []
    for seed in list(cfg.evaluation.seeds if seeds is None else seeds):
        c = cfg.with_seed(seed)
        train, test = make_data(c)
        prep = prepare(c, train, test)
        t = c.training
        sup = t.stage("seq", stage_seed(seed, "seq"))
        base = init_seq(c.model_seq, prep.dims, stage_seed(seed, "seq"))
        pre = init_seq(c.model_seq, prep.dims, stage_seed(seed, "seq"))
        mlm = pretrain_mlm(pre, prep.fit, t.stage("mlm", stage_seed(seed, "mlm")))
        r_base = train_model(base, prep.fit, sup, prep.valid)
        r_pre = train_model(pre, prep.fit, sup, prep.valid)
        out.append(MLMEffectSeed(seed, [h.valid_auc for h in r_base.history],
                                 [h.valid_auc for h in r_pre.history], mlm.train_loss))
        log.info("mlm effect seed %d: base %s pre %s", seed, out[-1].baseline_curve, out[-1].pretrained_curve)
    return out
