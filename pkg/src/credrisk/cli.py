"""Stage-wise command line interface.

All commands share one run directory (``--out``); each stage writes into its
own subdirectory together with a ``manifest.json`` holding the config hash,
seed, the hashes of the stage inputs and a hash of its own outputs.  A stage
whose manifest matches the current config, seed and inputs is skipped unless
``--force`` is given.

    credrisk generate-data  --config c.json --out run/
    credrisk preprocess     --config c.json --out run/
    credrisk train-nonseq   --config c.json --out run/
    credrisk pretrain-mlm   --config c.json --out run/
    credrisk train-seq      --config c.json --out run/
    credrisk finetune-joint --config c.json --out run/
    credrisk evaluate       --config c.json --out run/ [--model joint]
    credrisk ablate         --config c.json --out run/ --axis loss
    credrisk report run_a/ run_b/

``CREDRISK_WORKERS`` sets the number of worker processes used by ``ablate``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .checkpoint import load_model, save_model
from .config import AXIS_DEFAULTS, RunConfig, apply_overrides
from .data import generate_dataset, load_dataset, save_dataset, split_out_of_time
from .evaluation import EvalReport, evaluate, expand_grid, run_ablation
from .nonseq import init_nonseq
from .pipeline import Prepared, apply_artifacts, stage_seed
from .preprocess import PreprocessArtifacts, fit_feature_selector, fit_preprocess
from .seq import init_seq
from .training import TrainResult, joint_finetune, pretrain_mlm, train_model

log = logging.getLogger("credrisk")

WORKERS_ENV = "CREDRISK_WORKERS"

# stage directory -> command that produces it
PRODUCERS = {
    "data": "generate-data",
    "preprocess": "preprocess",
    "nonseq": "train-nonseq",
    "mlm": "pretrain-mlm",
    "seq": "train-seq",
    "joint": "finetune-joint",
}


class StageError(RuntimeError):
    """A missing or mismatched artifact; the message names the command to run."""


# ---------------------------------------------------------------------------
# Manifests


def hash_dir(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file() and p.name != "manifest.json"):
        h.update(str(f.relative_to(path)).encode())
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()[:16]


def read_manifest(stage_dir: Path) -> dict | None:
    m = stage_dir / "manifest.json"
    return json.loads(m.read_text()) if m.exists() else None


def require(out: Path, stage: str, cfg: RunConfig) -> dict:
    """Manifest of a prerequisite stage, checked against the current seed."""
    manifest = read_manifest(out / stage)
    if manifest is None:
        raise StageError(f"missing {out / stage}: run `credrisk {PRODUCERS[stage]} --out {out}` first")
    if manifest["seed"] != cfg.seed:
        raise StageError(f"{out / stage} was produced with seed {manifest['seed']}, not {cfg.seed}: "
                         f"rerun `credrisk {PRODUCERS[stage]} --out {out} --seed {cfg.seed} --force`")
    return manifest


class Stage:
    """Context for one command: decides whether to run and writes the manifest."""

    def __init__(self, name: str, cfg: RunConfig, out: Path, inputs: list[str], force: bool):
        self.name = name
        self.cfg = cfg
        self.out = out
        self.dir = out / name
        self.manifests = {i: require(out, i, cfg) for i in inputs}
        self.inputs = {i: m["output_hash"] for i, m in self.manifests.items()}
        self.force = force

    @property
    def data_hash(self) -> str:
        return self.manifests["data"]["output_hash"] if "data" in self.manifests else ""

    def up_to_date(self) -> bool:
        m = read_manifest(self.dir)
        fresh = (m is not None and m["config_hash"] == self.cfg.hash() and m["seed"] == self.cfg.seed
                 and m["inputs"] == self.inputs)
        if fresh and not self.force:
            print(f"{self.name}: up to date ({self.dir}), use --force to rerun")
            return True
        return False

    def finish(self, **extra) -> dict:
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.json").write_text(self.cfg.to_json())
        manifest = {
            "stage": self.name,
            "command": PRODUCERS.get(self.name, self.name.split("_")[0].replace("eval", "evaluate")),
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "inputs": self.inputs,
            "data_hash": self.data_hash,
            **extra,
        }
        manifest["output_hash"] = hash_dir(self.dir)
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
        print(f"{self.name}: wrote {self.dir}")
        return manifest


def write_metrics(path: Path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_auc"])
        for h in history:
            w.writerow([h.epoch, h.train_loss, h.valid_auc])


def finish_training(stage: Stage, model, result: TrainResult | None) -> dict:
    stage.dir.mkdir(parents=True, exist_ok=True)
    if result is not None:
        write_metrics(stage.dir / "metrics.csv", result.history)
    save_model(model, stage.dir / "model", {"config_hash": stage.cfg.hash(), "seed": stage.cfg.seed})
    extra = {"checkpoint": str(stage.dir / "model")}
    if result is not None:
        extra["best_epoch"] = result.best_epoch
    return stage.finish(**extra)


# ---------------------------------------------------------------------------
# Commands


def load_prepared(cfg: RunConfig, out: Path) -> Prepared:
    data = load_dataset(out / "data")
    train, test = split_out_of_time(data, cfg.data.train_months, cfg.data.test_months)
    artifacts = PreprocessArtifacts.from_json((out / "preprocess" / "artifacts.json").read_text())
    return apply_artifacts(cfg, artifacts, train, test)


def cmd_generate_data(cfg: RunConfig, out: Path, args) -> None:
    stage = Stage("data", cfg, out, [], args.force)
    if stage.up_to_date():
        return
    d = cfg.data
    data = generate_dataset(d.schema(), d.n_records, d.imbalance_long, d.imbalance_short, d.missing_rate,
                            d.signal_strength, cfg.seed, d.n_signal)
    save_dataset(data, stage.dir)
    stage.finish(n_records=len(data))


def cmd_preprocess(cfg: RunConfig, out: Path, args) -> None:
    stage = Stage("preprocess", cfg, out, ["data"], args.force)
    if stage.up_to_date():
        return
    data = load_dataset(out / "data")
    train, _ = split_out_of_time(data, cfg.data.train_months, cfg.data.test_months)
    p = cfg.preprocess
    ranking = fit_feature_selector(train, cfg.training.label, train.schema.nonseq_real_count,
                                   method=p.selection_method, seed=stage_seed(cfg.seed, "selector"),
                                   max_rows=p.selector_max_rows)
    artifacts = fit_preprocess(train, cfg.training.label, p.k, p.indicators, selected=ranking)
    stage.dir.mkdir(parents=True, exist_ok=True)
    (stage.dir / "artifacts.json").write_text(artifacts.to_json())
    stage.finish(dense_width=artifacts.dense_width)


def cmd_train_nonseq(cfg: RunConfig, out: Path, args) -> None:
    stage = Stage("nonseq", cfg, out, ["data", "preprocess"], args.force)
    if stage.up_to_date():
        return
    prep = load_prepared(cfg, out)
    model = init_nonseq(cfg.model_nonseq, prep.dims, stage_seed(cfg.seed, "nonseq"))
    result = train_model(model, prep.fit, cfg.training.stage("nonseq", stage_seed(cfg.seed, "nonseq")), prep.valid)
    finish_training(stage, model, result)


def cmd_pretrain_mlm(cfg: RunConfig, out: Path, args) -> None:
    stage = Stage("mlm", cfg, out, ["data", "preprocess"], args.force)
    if stage.up_to_date():
        return
    prep = load_prepared(cfg, out)
    model = init_seq(cfg.model_seq, prep.dims, stage_seed(cfg.seed, "seq"))
    result = pretrain_mlm(model, prep.fit, cfg.training.stage("mlm", stage_seed(cfg.seed, "mlm")), prep.valid)
    stage.dir.mkdir(parents=True, exist_ok=True)
    with open(stage.dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_loss"])
        for i, (tl, vl) in enumerate(zip(result.train_loss, result.valid_loss), start=1):
            w.writerow([i, tl, vl])
    finish_training(stage, model, None)


def cmd_train_seq(cfg: RunConfig, out: Path, args) -> None:
    inputs = ["data", "preprocess"] + (["mlm"] if cfg.training.use_mlm else [])
    stage = Stage("seq", cfg, out, inputs, args.force)
    if stage.up_to_date():
        return
    prep = load_prepared(cfg, out)
    if cfg.training.use_mlm:
        model = load_model(out / "mlm" / "model")
    else:
        model = init_seq(cfg.model_seq, prep.dims, stage_seed(cfg.seed, "seq"))
    result = train_model(model, prep.fit, cfg.training.stage("seq", stage_seed(cfg.seed, "seq")), prep.valid)
    finish_training(stage, model, result)


def cmd_finetune_joint(cfg: RunConfig, out: Path, args) -> None:
    t = cfg.training
    e2e = t.schedule == "end_to_end"
    stage = Stage("joint", cfg, out, ["data", "preprocess"] + ([] if e2e else ["nonseq", "seq"]), args.force)
    if stage.up_to_date():
        return
    prep = load_prepared(cfg, out)
    if e2e:
        ns = init_nonseq(cfg.model_nonseq, prep.dims, stage_seed(cfg.seed, "nonseq"))
        s = init_seq(cfg.model_seq, prep.dims, stage_seed(cfg.seed, "seq"))
    else:
        ns, s = load_model(out / "nonseq" / "model"), load_model(out / "seq" / "model")
    result = joint_finetune(ns, s, prep.fit, t.stage("end_to_end" if e2e else "joint", stage_seed(cfg.seed, "joint")),
                            prep.valid, cfg.fusion.variant)
    finish_training(stage, result.model, result)


def cmd_evaluate(cfg: RunConfig, out: Path, args) -> None:
    model_name = args.model or cfg.evaluation.model
    stage = Stage(f"eval_{model_name}", cfg, out, ["data", "preprocess", model_name], args.force)
    if stage.up_to_date():
        return
    prep = load_prepared(cfg, out)
    model = load_model(out / model_name / "model")
    e = cfg.evaluation
    report = evaluate(model, prep.test, labels=e.labels, config_hash=cfg.hash(), seed=cfg.seed,
                      bootstrap=e.bootstrap, n_bootstrap=e.n_bootstrap)
    stage.dir.mkdir(parents=True, exist_ok=True)
    (stage.dir / "report.json").write_text(report.to_json())
    (stage.dir / "report.md").write_text(report.to_markdown(model_name))
    print(report.to_markdown(model_name))
    stage.finish(model=model_name)


def cmd_ablate(cfg: RunConfig, out: Path, args) -> None:
    if args.axis:
        model, values = AXIS_DEFAULTS[args.axis]
        grid = {args.axis: values}
        base = apply_overrides(cfg, {})
        base.evaluation.model = model
    elif cfg.evaluation.ablation:
        grid, base = cfg.evaluation.ablation, cfg
    else:
        raise StageError("nothing to ablate: pass --axis or set evaluation.ablation in the config")
    name = f"ablate_{args.axis or 'grid'}"
    stage = Stage(name, base, out, ["data"], args.force)
    if stage.up_to_date():
        return
    data = load_dataset(out / "data")
    split = split_out_of_time(data, cfg.data.train_months, cfg.data.test_months)
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    log.info("%d cells x %d seeds, %d workers", len(expand_grid(grid)), len(base.evaluation.seeds), workers)
    table = run_ablation(grid, base, split, seeds=base.evaluation.seeds, workers=workers)
    stage.dir.mkdir(parents=True, exist_ok=True)
    (stage.dir / "table.json").write_text(table.to_json())
    (stage.dir / "table.csv").write_text(table.to_csv())
    (stage.dir / "table.md").write_text(table.to_markdown())
    print(table.to_markdown())
    stage.finish(axes=list(grid))


def collect_reports(run: Path) -> list[tuple[str, dict, EvalReport]]:
    found = []
    for d in sorted(run.glob("eval_*")):
        m = read_manifest(d)
        if m is None or not (d / "report.json").exists():
            continue
        found.append((f"{run.name}/{m['model']}", m, EvalReport.from_dict(json.loads((d / "report.json").read_text()))))
    return found


def cmd_report(args) -> None:
    rows = []
    for run in args.runs:
        got = collect_reports(Path(run))
        if not got:
            raise StageError(f"no evaluation reports under {run}: run `credrisk evaluate --out {run}` first")
        rows.extend(got)
    data_hashes = {m["data_hash"] for _, m, _ in rows}
    if len(data_hashes) > 1:
        raise StageError(f"refusing to compare runs on different data (data hashes {sorted(data_hashes)}); "
                         f"regenerate with `credrisk generate-data` using one data config")
    labels = list(rows[0][2].auc)
    lines = ["| run | seed | config | " + " | ".join(labels) + " |", "|---|---|---|" + "---|" * len(labels)]
    for name, m, rep in rows:
        lines.append(f"| {name} | {rep.seed} | {rep.config_hash} | "
                     + " | ".join(f"{rep.auc.get(lab, float('nan')):.4f}" for lab in labels) + " |")
    text = "\n".join(lines) + "\n"
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)


COMMANDS = {
    "generate-data": cmd_generate_data,
    "preprocess": cmd_preprocess,
    "train-nonseq": cmd_train_nonseq,
    "pretrain-mlm": cmd_pretrain_mlm,
    "train-seq": cmd_train_seq,
    "finetune-joint": cmd_finetune_joint,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def load_config(path: str | None, seed: int | None) -> RunConfig:
    d = json.loads(Path(path).read_text()) if path else {}
    if seed is not None:
        d["seed"] = seed
    if "seed" not in d:
        raise StageError("no seed: pass --seed or set 'seed' in the config")
    return RunConfig.from_dict(d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="credrisk", description="Staged credit-risk modelling pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run config JSON (defaults apply to missing fields)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--force", action="store_true", help="rerun even if the stage is up to date")
        if name == "evaluate":
            p.add_argument("--model", choices=("nonseq", "seq", "joint"))
        if name == "ablate":
            p.add_argument("--axis", choices=sorted(AXIS_DEFAULTS))
    p = sub.add_parser("report")
    p.add_argument("runs", nargs="+", help="run directories with evaluate output")
    p.add_argument("--out", help="write the markdown table here as well")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "report":
            cmd_report(args)
        else:
            cfg = load_config(args.config, args.seed)
            COMMANDS[args.command](cfg, Path(args.out), args)
    except (StageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
