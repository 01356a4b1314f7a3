import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import small_schema
from credrisk.data import KINDS, MISSING_CAT, EventSequence, generate_dataset
from credrisk.preprocess import (
    CLIP,
    InputDims,
    PreprocessArtifacts,
    ProcessedData,
    Vocabulary,
    apply_normalize,
    clip_sequence,
    correlation_importance,
    encode_relative_time,
    expand_indicators,
    fit_feature_selector,
    fit_normalizer,
    fit_preprocess,
    fit_vocab,
    merge_categories,
    transform,
)


def test_expand_indicators_example():
    v, z, n = expand_indicators(np.array([3.0, np.nan, 0.0]))
    assert list(v) == [3.0, 0.0, 0.0]
    assert list(z) == [0, 0, 1]
    assert list(n) == [0, 1, 0]


def test_expand_indicators_all_missing():
    v, z, n = expand_indicators(np.full(5, np.nan))
    assert (v == 0).all() and (z == 0).all() and (n == 1).all()


column_values = arrays(np.float64, st.integers(1, 50),
                       elements=st.one_of(st.just(0.0), st.just(np.nan), st.floats(-1e6, 1e6)))


@settings(max_examples=200, deadline=None)
@given(column_values)
def test_indicator_laws(col):
    v, z, n = expand_indicators(col)
    assert set(np.unique(z)) <= {0, 1} and set(np.unique(n)) <= {0, 1}
    assert not np.any((z == 1) & (n == 1))
    assert not np.isnan(v).any()
    # every entry is either flagged missing or recoverable from the value column
    observed = n == 0
    np.testing.assert_array_equal(v[observed], col[observed].astype(np.float32))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 4)),
              elements=st.one_of(st.just(np.nan), st.floats(-1e4, 1e4))))
def test_normalized_values_bounded(cols):
    mean, std = fit_normalizer(cols)
    z = apply_normalize(np.nan_to_num(cols), mean, std)
    assert np.all(np.abs(z) <= CLIP)


def test_normalizer_standardizes():
    x = np.random.default_rng(0).normal(5, 3, (1000, 2))
    mean, std = fit_normalizer(x)
    z = apply_normalize(x, mean, std, clip=1e9)
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-5)
    np.testing.assert_allclose(z.std(0), 1, atol=1e-5)


def test_normalizer_ignores_missing_and_constant():
    x = np.array([[1.0, 2.0], [np.nan, 2.0], [3.0, 2.0]])
    mean, std = fit_normalizer(x)
    assert mean[0] == 2.0 and std[0] == 1.0
    assert std[1] == 0.0
    assert (apply_normalize(x[:, 1:], mean[1:], std[1:]) == 0).all()


def test_normalize_clips():
    assert list(apply_normalize(np.array([[-100.0], [0.0], [100.0]]), [0.0], [1.0])[:, 0]) == [-4.0, 0.0, 4.0]


def test_vocab_of_fifty_ids_has_32_entries():
    col = np.repeat(np.arange(50), np.arange(50, 0, -1))
    v = fit_vocab(col)
    assert v.size == 32
    assert v.ids == tuple(range(30))
    assert v.unk == 30 and v.nan == 31


def test_vocab_ties_by_id():
    v = fit_vocab(np.array([7, 7, 3, 3, 9, 1, 1, 1]))
    assert v.ids == (1, 3, 7, 9)


def test_merge_categories_maps_unknown_and_missing():
    v = Vocabulary((4, 2))
    out = merge_categories(np.array([2, 4, 99, MISSING_CAT]), v)
    assert list(out) == [1, 0, v.unk, v.nan]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1, 60), min_size=1, max_size=300), st.lists(st.integers(-1, 80), min_size=1, max_size=50))
def test_vocabulary_law(train_col, test_col):
    v = fit_vocab(np.array(train_col))
    assert v.size <= 32 and v.unk != v.nan
    out = merge_categories(np.array(test_col), v)
    assert out.min() >= 0 and out.max() < v.size
    for raw, dense in zip(test_col, out):
        if raw == MISSING_CAT:
            assert dense == v.nan
        elif raw in v.ids:
            assert v.ids[dense] == raw
        else:
            assert dense == v.unk


def test_relative_time():
    assert list(encode_relative_time(np.array([90, 100]), 100)) == [10, 0]


def test_clip_sequence_keeps_latest_and_masks():
    seq = EventSequence("card", np.arange(6), np.zeros((6, 2)), np.zeros((6, 5), dtype=np.int64))
    kept, mask = clip_sequence(seq, 4)
    assert list(kept.dates) == [2, 3, 4, 5]
    assert list(mask) == [True] * 4
    kept, mask = clip_sequence(seq, 8)
    assert len(kept) == 6 and list(mask) == [True] * 6 + [False] * 2


def test_correlation_ranks_signal_first():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 2000)
    X = rng.normal(size=(2000, 10))
    X[:, 7] += 2 * y
    X[:, 2] += y
    X[rng.random(X.shape) < 0.1] = np.nan
    imp = correlation_importance(X, y)
    assert list(np.argsort(-imp)[:2]) == [7, 2]


def test_selector_ties_keep_index_order(small_split):
    train, _ = small_split
    from dataclasses import replace

    flat = replace(train, nonseq_real=np.zeros_like(train.nonseq_real))
    assert fit_feature_selector(flat, k=5, method="correlation") == [0, 1, 2, 3, 4]


def test_xgboost_selector_finds_planted_features():
    data = generate_dataset(small_schema(n_real=200), n_records=6000, seed=4)
    top = fit_feature_selector(data, k=20, method="xgboost", seed=0)
    assert len(set(top) & set(data.signal_indices)) >= 16
    assert top == fit_feature_selector(data, k=20, method="xgboost", seed=0)


def test_selector_validates(small_split):
    train, _ = small_split
    with pytest.raises(ValueError):
        fit_feature_selector(train, k=0)
    with pytest.raises(ValueError):
        fit_feature_selector(train, k=10, method="lasso")


def test_dense_layout(small_artifacts, small_processed):
    a = small_artifacts
    train, test = small_processed
    assert a.k_expanded == 3 * a.k == 60
    assert train.dense.shape[1] == 13 + 60 == a.dense_width
    values = train.dense[:, 13:33]
    is_zero, is_nan = train.dense[:, 33:53], train.dense[:, 53:73]
    assert not np.any((is_zero == 1) & (is_nan == 1))
    assert set(np.unique(is_zero)) <= {0, 1} and set(np.unique(is_nan)) <= {0, 1}
    assert np.all(values[is_nan == 1] == apply_normalize(np.zeros((1, 20)), a.real_mean, a.real_std)[0][np.where(is_nan == 1)[1]])
    for d in (train, test):
        assert np.isfinite(d.dense).all()
        assert np.all(np.abs(d.dense[:, :33]) <= CLIP)


def test_no_indicators_width(small_split):
    train, _ = small_split
    a = fit_preprocess(train, k=20, indicators=False, selection_method="correlation")
    assert a.dense_width == 33
    assert transform(train, a).dense.shape[1] == 33


def test_sequence_tensors(small_processed, small_artifacts):
    train, _ = small_processed
    for kind in KINDS:
        ev = train.seqs[kind]
        assert np.isfinite(ev.time).all() and np.isfinite(ev.real).all()
        assert np.all(np.abs(ev.time) <= CLIP) and np.all(np.abs(ev.real[..., 0]) <= CLIP)
        sizes = [v.size for v in small_artifacts.seq[kind].vocabs]
        for j, size in enumerate(sizes):
            assert ev.cat[:, j].max() < size
        assert np.diff(ev.offsets).max() <= ev.max_len


def test_categories_in_vocab(small_processed, small_dims):
    train, test = small_processed
    for d in (train, test):
        for j, size in enumerate(small_dims.nonseq_vocab_sizes):
            assert 0 <= d.cat[:, j].min() and d.cat[:, j].max() < size <= 32


def test_artifacts_immutable_under_test_transform(small_split):
    train, test = small_split
    a = fit_preprocess(train, k=20, selection_method="correlation")
    before = a.to_json()
    transform(test, a)
    assert a.to_json() == before


def test_artifacts_depend_only_on_train(small_split):
    train, test = small_split
    a = fit_preprocess(train, k=20, selection_method="correlation")
    # refitting on the same train split after seeing test leaves everything unchanged
    transform(test, a)
    b = fit_preprocess(train, k=20, selection_method="correlation")
    assert a.to_json() == b.to_json()


def test_artifacts_json_roundtrip(small_artifacts, small_split):
    back = PreprocessArtifacts.from_json(small_artifacts.to_json())
    assert back.to_json() == small_artifacts.to_json()
    train, _ = small_split
    np.testing.assert_array_equal(transform(train, back).dense, transform(train, small_artifacts).dense)
    d = json.loads(small_artifacts.to_json())
    assert d["k_expanded"] == 60 and len(d["selected_real_features"]) == 20


def test_transform_is_deterministic(small_split, small_artifacts):
    _, test = small_split
    a, b = transform(test, small_artifacts), transform(test, small_artifacts)
    np.testing.assert_array_equal(a.dense, b.dense)
    for kind in KINDS:
        np.testing.assert_array_equal(a.seqs[kind].real, b.seqs[kind].real)


def test_transform_rejects_other_schema(small_artifacts):
    other = generate_dataset(small_schema(n_real=61), n_records=700, seed=0)
    with pytest.raises(ValueError, match="schema"):
        transform(other, small_artifacts)


def test_batch_padding(small_processed):
    train, _ = small_processed
    idx = np.arange(10, 30)
    b = train.batch(idx)
    full = train.batch(idx, pad_to_max_len=True)
    for kind in KINDS:
        lengths = np.diff(train.seqs[kind].offsets)[idx]
        s, f = b.seqs[kind], full.seqs[kind]
        assert s.mask.shape[1] == max(1, lengths.max())
        assert f.mask.shape[1] == train.seqs[kind].max_len
        np.testing.assert_array_equal(s.mask.sum(1).numpy(), lengths)
        L = s.mask.shape[1]
        assert (f.time[:, :L] == s.time).all() and not f.mask[:, L:].any()
        assert (s.time[~s.mask] == 0).all()
    assert len(b) == 20


def test_subset_and_concat_roundtrip(small_processed):
    train, _ = small_processed
    idx = np.random.default_rng(0).permutation(len(train))
    a, b = train.subset(idx[:100]), train.subset(idx[100:250])
    joined = ProcessedData.concat([a, b])
    direct = train.subset(idx[:250])
    np.testing.assert_array_equal(joined.dense, direct.dense)
    for kind in KINDS:
        np.testing.assert_array_equal(joined.seqs[kind].offsets, direct.seqs[kind].offsets)
        np.testing.assert_array_equal(joined.seqs[kind].real, direct.seqs[kind].real)
    x, y = joined.batch(np.arange(250)), direct.batch(np.arange(250))
    for kind in KINDS:
        assert (x.seqs[kind].cat == y.seqs[kind].cat).all()


def test_input_dims_roundtrip(small_dims):
    assert InputDims.from_dict(small_dims.to_dict()) == small_dims
    assert small_dims.seq_real_counts == {"card": 2, "inquiry": 0, "loan": 4}
