"""Validation AUC per supervised epoch for the sequential model with and without masked pre-training.

    python3 scripts/mlm_effect.py --config configs/mlm_effect.json --out results/mlm_effect
"""
import argparse
import json
import logging
from dataclasses import asdict
from pathlib import Path

from credrisk.benchmark import mlm_effect
from credrisk.config import RunConfig
from credrisk.evaluation import plot_curves


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/mlm_effect.json")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--out", default="results/mlm_effect")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = RunConfig.load(args.config)
    results = mlm_effect(cfg, args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "curves.json").write_text(json.dumps([asdict(r) for r in results], indent=2))
    curves = {}
    for r in results:
        curves[f"seed {r.seed} no pre-training"] = r.baseline_curve
        curves[f"seed {r.seed} pre-trained"] = r.pretrained_curve
        e = r.pretrained_epochs_to_baseline
        print(f"seed {r.seed}: baseline best {max(r.baseline_curve[1:]):.4f} at epoch {r.baseline_best_epoch}; "
              f"pre-trained reaches it at {'never' if e is None else e}; success={r.success}")
    plot_curves(curves, out / "curves.png")
    print(f"{sum(r.success for r in results)}/{len(results)} seeds successful")


if __name__ == "__main__":
    main()
