"""Ablation tables over one or more axes (schedule, label, k, indicators, loss, sampling, mlm, fusion, encoder).

    python3 scripts/ablation_tables.py --config configs/smoke.json --axes loss sampling --out results/ablation
"""
import argparse
import logging
from pathlib import Path

from credrisk.config import AXIS_DEFAULTS, apply_overrides
from credrisk.cli import load_config
from credrisk.evaluation import run_ablation
from credrisk.pipeline import make_data


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/smoke.json")
    p.add_argument("--axes", nargs="+", default=sorted(AXIS_DEFAULTS), choices=sorted(AXIS_DEFAULTS))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results/ablation")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config, None)
    data = make_data(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for axis in args.axes:
        model, values = AXIS_DEFAULTS[axis]
        base = apply_overrides(cfg, {})
        base.evaluation.model = model
        table = run_ablation({axis: values}, base, data, seeds=base.evaluation.seeds, workers=args.workers)
        (out / f"{axis}.md").write_text(table.to_markdown())
        (out / f"{axis}.csv").write_text(table.to_csv())
        print(f"## {axis} ({model})\n\n{table.to_markdown()}")


if __name__ == "__main__":
    main()
