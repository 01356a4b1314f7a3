"""Model checkpoints: ``weights.npz`` (state dict arrays) + ``manifest.json``."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .fusion import JointModel
from .nonseq import NonSeqDNN, NonSeqModelConfig
from .preprocess import InputDims
from .seq import SeqModel, SeqModelConfig


def _describe(model: nn.Module) -> dict:
    if isinstance(model, NonSeqDNN):
        return {"type": "nonseq", "config": asdict(model.config), "dims": model.dims.to_dict()}
    if isinstance(model, SeqModel):
        return {"type": "seq", "config": asdict(model.config), "dims": model.dims.to_dict()}
    if isinstance(model, JointModel):
        return {"type": "joint", "variant": model.variant,
                "nonseq": _describe(model.nonseq), "seq": _describe(model.seq)}
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def _build(desc: dict) -> nn.Module:
    if desc["type"] == "nonseq":
        return NonSeqDNN(NonSeqModelConfig(**desc["config"]), InputDims.from_dict(desc["dims"]))
    if desc["type"] == "seq":
        return SeqModel(SeqModelConfig(**desc["config"]), InputDims.from_dict(desc["dims"]))
    if desc["type"] == "joint":
        return JointModel(_build(desc["nonseq"]), _build(desc["seq"]), desc["variant"])
    raise ValueError(f"unknown checkpoint type {desc['type']!r}")


def save_model(model: nn.Module, path, extra: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    np.savez(path / "weights.npz", **state)
    manifest = _describe(model)
    manifest["shapes"] = {k: list(v.shape) for k, v in state.items()}
    manifest.update(extra or {})
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_model(path) -> nn.Module:
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    manifest = json.loads((path / "manifest.json").read_text())
    model = _build(manifest)
    with np.load(path / "weights.npz") as npz:
        state = {k: torch.from_numpy(npz[k]) for k in npz.files}
    model.load_state_dict(state)
    model.eval()
    return model
