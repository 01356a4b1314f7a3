import pytest
import torch

from credrisk.checkpoint import load_model, save_model
from credrisk.fusion import assemble_joint
from credrisk.nonseq import NonSeqModelConfig, init_nonseq
from credrisk.seq import SeqModelConfig, init_seq


@pytest.mark.parametrize("variant", ["concat", "add_attn", "mul_attn"])
def test_roundtrip(tmp_path, small_dims, batch, variant):
    ns = init_nonseq(NonSeqModelConfig(hidden_sizes=[16]), small_dims, 0)
    s = init_seq(SeqModelConfig(embedding_size=16, num_heads=2, ffn_size=32), small_dims, 1)
    models = {"nonseq": ns, "seq": s, "joint": assemble_joint(ns, s, variant)}
    for name, model in models.items():
        save_model(model, tmp_path / name, {"seed": 5})
        back = load_model(tmp_path / name)
        assert type(back) is type(model)
        with torch.no_grad():
            assert torch.equal(back(batch).logit, model.eval()(batch).logit)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "nope")


def test_rejects_foreign_module(tmp_path):
    with pytest.raises(TypeError):
        save_model(torch.nn.Linear(2, 1), tmp_path)
