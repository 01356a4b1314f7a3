"""AUC, evaluation reports and the ablation runner."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch
from scipy.stats import rankdata

from .data import EVAL_LABELS, RecordSet
from .preprocess import PreprocessArtifacts, ProcessedData, transform

log = logging.getLogger(__name__)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties 1/2.

    Computed from average ranks (Mann-Whitney U).  Returns NaN when only one
    class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_null_std(n_pos: int, n_neg: int) -> float:
    """Std of the AUC of an uninformative scorer (normal approximation of the pair count)."""
    return float(np.sqrt((n_pos + n_neg + 1) / (12.0 * n_pos * n_neg)))


def bootstrap_auc_std(scores, labels, n_boot: int = 200, seed: int = 0) -> float:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_boot):
        idx = rng.integers(0, len(scores), len(scores))
        a = auc(scores[idx], labels[idx])
        if not np.isnan(a):
            values.append(a)
    return float(np.std(values))


@torch.no_grad()
def predict_proba(model, data: ProcessedData, batch_size: int = 1000) -> np.ndarray:
    """Probabilities from an nn.Module (eval mode) or anything with `predict_proba`."""
    if hasattr(model, "predict_proba"):
        return np.asarray(model.predict_proba(data))
    was_training = model.training
    model.eval()
    out = [model(b).prob.double().numpy() for b in data.batches(batch_size)]
    model.train(was_training)
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class EvalReport:
    auc: dict[str, float]
    n: int
    n_pos: dict[str, int]
    imbalance: dict[str, float]
    null_std: dict[str, float]
    config_hash: str = ""
    seed: int = 0
    bootstrap_std: dict[str, float] = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def to_markdown(self, title: str = "Model") -> str:
        labels = list(self.auc)
        lines = [f"| {title} | " + " | ".join(labels) + " |", "|---|" + "---|" * len(labels)]
        lines.append("| AUC | " + " | ".join(f"{self.auc[k]:.4f}" for k in labels) + " |")
        return "\n".join(lines) + "\n"


def evaluate(predictor, test: RecordSet | ProcessedData, artifacts: PreprocessArtifacts | None = None,
             labels=EVAL_LABELS, config_hash: str = "", seed: int = 0,
             bootstrap: bool = False, n_bootstrap: int = 200) -> EvalReport:
    """AUC of `predictor` on every evaluation label of an out-of-time split."""
    start = time.perf_counter()
    processed = test if isinstance(test, ProcessedData) else transform(test, artifacts)
    probs = predict_proba(predictor, processed)
    aucs, n_pos, imbalance, null_std, boot = {}, {}, {}, {}, {}
    for name in labels:
        y = processed.labels[name]
        p = int(y.sum())
        aucs[name] = auc(probs, y)
        n_pos[name] = p
        imbalance[name] = (len(y) - p) / p if p else float("nan")
        null_std[name] = auc_null_std(p, len(y) - p) if 0 < p < len(y) else float("nan")
        if bootstrap:
            boot[name] = bootstrap_auc_std(probs, y, n_bootstrap, seed)
    return EvalReport(aucs, len(processed), n_pos, imbalance, null_std, config_hash, seed, boot,
                      time.perf_counter() - start)


def shuffled_control_auc(probs, labels, seed: int = 0) -> float:
    """AUC of the same scores against a random permutation of the labels."""
    rng = np.random.default_rng(seed)
    return auc(probs, rng.permutation(np.asarray(labels)))


# ---------------------------------------------------------------------------
# Ablations


@dataclass
class AblationRow:
    cell: dict
    seed: int
    auc: dict[str, float]
    status: str = "ok"
    error: str = ""


@dataclass
class AblationTable:
    axes: list[str]
    labels: list[str]
    rows: list[AblationRow]

    def to_json(self) -> str:
        return json.dumps({"axes": self.axes, "labels": self.labels, "rows": [asdict(r) for r in self.rows]}, indent=2)

    def summary(self) -> list[dict]:
        """Mean AUC per cell over seeds, in first-seen cell order."""
        groups: dict[str, list[AblationRow]] = {}
        for row in self.rows:
            groups.setdefault(json.dumps(row.cell, sort_keys=True), []).append(row)
        out = []
        for key, rows in groups.items():
            ok = [r for r in rows if r.status == "ok"]
            entry = dict(json.loads(key))
            for lab in self.labels:
                entry[lab] = float(np.mean([r.auc[lab] for r in ok])) if ok else float("nan")
            entry["runs"] = len(ok)
            entry["failed"] = len(rows) - len(ok)
            out.append(entry)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.axes + ["seed", "status"] + self.labels)
        for r in self.rows:
            w.writerow([r.cell.get(a) for a in self.axes] + [r.seed, r.status] + [r.auc.get(lab, "") for lab in self.labels])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = "| " + " | ".join(self.axes) + " | " + " | ".join(self.labels) + " | runs |"
        lines = [head, "|" + "---|" * (len(self.axes) + len(self.labels) + 1)]
        for e in self.summary():
            vals = [str(e[a]) for a in self.axes] + [f"{e[lab]:.4f}" for lab in self.labels] + [str(e["runs"])]
            lines.append("| " + " | ".join(vals) + " |")
        return "\n".join(lines) + "\n"


def expand_grid(grid: dict[str, list]) -> list[dict]:
    cells = [{}]
    for axis, values in grid.items():
        cells = [{**c, axis: v} for c in cells for v in values]
    return cells


def run_ablation(grid: dict[str, list], base_config, data: tuple[RecordSet, RecordSet], seeds=(1, 2, 3),
                 run_cell: Callable | None = None, workers: int = 1) -> AblationTable:
    """Train and evaluate one configuration per (grid cell, seed).

    `run_cell(config, axes, train, test, cache) -> EvalReport` defaults to the
    experiment pipeline; failures are recorded and the grid continues.
    """
    from . import pipeline

    run_cell = run_cell or pipeline.run_cell
    train, test = data
    labels = list(base_config.evaluation.labels)
    cells = expand_grid(grid)
    jobs = [(cell, seed) for cell in cells for seed in seeds]
    rows: list[AblationRow] = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_job, run_cell, base_config, cell, seed, train, test) for cell, seed in jobs]
            rows = [f.result() for f in futures]
    else:
        cache: dict = {}
        rows = [_run_job(run_cell, base_config, cell, seed, train, test, cache) for cell, seed in jobs]
    return AblationTable(list(grid), labels, rows)


def _run_job(run_cell, base_config, cell, seed, train, test, cache=None) -> AblationRow:
    try:
        report = run_cell(base_config.with_seed(seed), cell, train, test, {} if cache is None else cache)
        return AblationRow(cell, seed, dict(report.auc))
    except Exception as exc:  # recorded per cell, the grid goes on
        log.exception("ablation cell %s seed %s failed", cell, seed)
        return AblationRow(cell, seed, {}, status="failed", error=f"{type(exc).__name__}: {exc}")


def plot_curves(histories: dict[str, list], path) -> None:
    """Validation AUC against epoch, one line per named run.

    A history is a list of per-epoch metrics or a plain list of AUCs (epoch 0 first).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, hist in histories.items():
        values = [getattr(h, "valid_auc", h) for h in hist]
        ax.plot(range(len(values)), values, marker="o", label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("valid AUC")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
