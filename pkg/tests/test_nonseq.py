import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from credrisk.losses import wbce
from credrisk.nonseq import NonSeqDNN, NonSeqModelConfig, init_nonseq
from credrisk.preprocess import InputDims, ProcessedBatch
from gradcheck import directional_errors


def test_default_widths(small_dims):
    model = init_nonseq(NonSeqModelConfig(), small_dims, 0)
    assert model.config.embedding_size == 16
    assert [m.out_features for m in model.mlp if isinstance(m, torch.nn.Linear)] == [1028, 256, 128]
    assert model.input_width == small_dims.dense_width + 9 * 16
    assert model.hidden_size == 128


def test_forward_shapes(small_dims, batch):
    model = init_nonseq(NonSeqModelConfig(hidden_sizes=[32, 8]), small_dims, 0)
    out = model(batch)
    assert out.hidden.shape == (len(batch), 8)
    assert out.logit.shape == (len(batch),)
    torch.testing.assert_close(out.prob, torch.sigmoid(out.logit))
    assert ((out.prob > 0) & (out.prob < 1)).all()
    assert (out.hidden >= 0).all()  # ReLU output


def test_same_seed_same_weights(small_dims):
    a = init_nonseq(NonSeqModelConfig(hidden_sizes=[8]), small_dims, 5)
    b = init_nonseq(NonSeqModelConfig(hidden_sizes=[8]), small_dims, 5)
    c = init_nonseq(NonSeqModelConfig(hidden_sizes=[8]), small_dims, 6)
    for (_, p), (_, q) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(p, q)
    assert not torch.equal(a.logit.weight, c.logit.weight)


def test_init_leaves_global_rng_alone(small_dims):
    torch.manual_seed(0)
    expected = torch.rand(3)
    torch.manual_seed(0)
    init_nonseq(NonSeqModelConfig(hidden_sizes=[8]), small_dims, 1)
    assert torch.equal(torch.rand(3), expected)


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(12))))
def test_batch_permutation_equivariance(small_processed, small_dims, perm):
    train, _ = small_processed
    model = init_nonseq(NonSeqModelConfig(hidden_sizes=[16, 8]), small_dims, 0).eval()
    idx = np.arange(12)
    base = model(train.batch(idx)).logit
    permuted = model(train.batch(idx[list(perm)])).logit
    torch.testing.assert_close(permuted, base[list(perm)])


def test_wrong_width_rejected(small_dims, batch):
    model = init_nonseq(NonSeqModelConfig(hidden_sizes=[8]), small_dims, 0)
    bad = ProcessedBatch(batch.dense[:, :-1], batch.cat, batch.seqs, batch.labels)
    with pytest.raises(ValueError, match="dense width"):
        model(bad)


def tiny_dims() -> InputDims:
    return InputDims(dense_width=6, nonseq_vocab_sizes=(4, 3), seq_real_counts={}, seq_vocab_sizes={})


def tiny_batch(seed: int = 0) -> ProcessedBatch:
    g = torch.Generator().manual_seed(seed)
    return ProcessedBatch(
        dense=torch.randn(4, 6, generator=g, dtype=torch.float64),
        cat=torch.stack([torch.randint(4, (4,), generator=g), torch.randint(3, (4,), generator=g)], 1),
        seqs={},
        labels={"y_long": torch.tensor([1.0, 0.0, 0.0, 1.0], dtype=torch.float64)},
    )


def test_gradients_match_finite_differences():
    model = NonSeqDNN(NonSeqModelConfig(embedding_size=3, hidden_sizes=[8, 5]), tiny_dims()).double()
    b = tiny_batch()
    params = [p for p in model.parameters()]
    errors = directional_errors(lambda: wbce(model(b).logit, b.labels["y_long"]), params, n_dirs=100)
    assert max(errors) < 1e-4
