"""Linear probe of sequential-encoder features before and after masked pre-training.

Mean-pooled encoder outputs of each kind feed an L2-regularised logistic
regression on the training label; the probe's validation AUC measures how much
label information the (frozen) encoder exposes.

    python3 scripts/mlm_probe.py --config configs/mlm_effect.json --rounds 3
"""
import argparse

import numpy as np
import torch

from credrisk.config import RunConfig
from credrisk.data import KINDS
from credrisk.evaluation import auc
from credrisk.pipeline import make_data, prepare, stage_seed
from credrisk.seq import init_seq, mlm_category_accuracy, mlm_mask
from credrisk.training import pretrain_mlm


@torch.no_grad()
def pooled_features(model, data) -> torch.Tensor:
    model.eval()
    out = []
    for b in data.batches(1000):
        parts = []
        for kind, (x, mask) in model.encode(b).items():
            w = mask.float().unsqueeze(-1)
            parts.append((x * w).sum(1) / w.sum(1).clamp_min(1))
        out.append(torch.cat(parts, 1))
    return torch.cat(out).double()


def probe_auc(model, fit, valid, label: str, l2: float = 1e-4) -> float:
    X, Xv = pooled_features(model, fit), pooled_features(model, valid)
    mu, sd = X.mean(0), X.std(0).clamp_min(1e-8)
    X, Xv = (X - mu) / sd, (Xv - mu) / sd
    y = torch.as_tensor(fit.labels[label], dtype=torch.float64)
    w = torch.zeros(X.shape[1], dtype=torch.float64, requires_grad=True)
    b = torch.zeros((), dtype=torch.float64, requires_grad=True)
    opt = torch.optim.LBFGS([w, b], max_iter=500, line_search_fn="strong_wolfe")

    def closure():
        opt.zero_grad()
        loss = torch.nn.functional.binary_cross_entropy_with_logits(X @ w + b, y) + l2 * (w ** 2).sum()
        loss.backward()
        return loss

    opt.step(closure)
    with torch.no_grad():
        return auc((Xv @ w + b).numpy(), valid.labels[label])


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/mlm_effect.json")
    p.add_argument("--rounds", type=int, default=3, help="pre-training rounds of training.mlm.epochs each")
    args = p.parse_args()

    cfg = RunConfig.load(args.config)
    prep = prepare(cfg, *make_data(cfg))
    label = cfg.training.label
    model = init_seq(cfg.model_seq, prep.dims, stage_seed(cfg.seed, "seq"))
    check = prep.valid.batch(np.arange(min(1000, len(prep.valid))))
    corrupted, targets = mlm_mask(check, cfg.model_seq.mask_rate, 99, prep.dims)
    print(f"random init: probe AUC {probe_auc(model, prep.fit, prep.valid, label):.4f}")
    for r in range(1, args.rounds + 1):
        res = pretrain_mlm(model, prep.fit, cfg.training.stage("mlm", stage_seed(cfg.seed, "mlm") + r))
        correct, total = mlm_category_accuracy(model, corrupted, targets)
        print(f"after {r * cfg.training.mlm.epochs} MLM epochs: loss {res.train_loss[-1]:.3f}, "
              f"masked-category accuracy {correct / total:.3f}, "
              f"probe AUC {probe_auc(model, prep.fit, prep.valid, label):.4f}")


if __name__ == "__main__":
    main()
