import json

import pytest

from credrisk.config import AXIS_DEFAULTS, RunConfig, apply_overrides


def test_defaults():
    c = RunConfig(seed=1)
    assert c.preprocess.k == 500 and c.preprocess.indicators
    assert c.model_nonseq.hidden_sizes == [1028, 256, 128]
    assert (c.model_seq.embedding_size, c.model_seq.num_heads) == (128, 8)
    assert c.training.lr == 5e-4 and c.training.batch_size == 1000
    assert c.training.seq.sampling == "oversample_1_1"
    assert c.data.train_months == list(range(1, 11)) and c.data.test_months == [11, 12]


def test_seed_required():
    with pytest.raises(ValueError, match="seed"):
        RunConfig.from_dict({})


@pytest.mark.parametrize("doc", [
    {"seed": 1, "colour": "red"},
    {"seed": 1, "training": {"lr": 1e-3, "momentum": 0.9}},
    {"seed": 1, "training": {"seq": {"epochs": 2, "warmup": 1}}},
])
def test_unknown_keys_rejected(doc):
    with pytest.raises(ValueError, match="unknown keys"):
        RunConfig.from_dict(doc)


def test_invalid_values_rejected():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"seed": 1, "fusion": {"variant": "gated"}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"seed": 1, "training": {"nonseq": {"loss": "hinge"}}})


def test_roundtrip_and_hash(tmp_path):
    c = RunConfig.from_dict({"seed": 3, "preprocess": {"k": 40}, "training": {"seq": {"epochs": 2}}})
    path = tmp_path / "c.json"
    path.write_text(c.to_json())
    back = RunConfig.load(path)
    assert back == c and back.hash() == c.hash()
    assert c.with_seed(4).hash() != c.hash()
    assert json.loads(c.to_json())["training"]["seq"]["epochs"] == 2


def test_hash_ignores_key_order():
    a = RunConfig.from_dict({"seed": 1, "preprocess": {"k": 5, "indicators": False}})
    b = RunConfig.from_dict({"preprocess": {"indicators": False, "k": 5}, "seed": 1})
    assert a.hash() == b.hash()


def test_apply_overrides_targets_the_studied_stage():
    base = RunConfig(seed=1)
    c = apply_overrides(base, {"loss": "focal", "k": "all", "indicators": False})
    assert c.training.joint.loss == "focal" and c.training.nonseq.loss == "wbce"
    assert c.preprocess.k == base.data.nonseq_real_count and not c.preprocess.indicators
    base.evaluation.model = "seq"
    assert apply_overrides(base, {"sampling": "natural"}).training.seq.sampling == "natural"
    e2e = apply_overrides(RunConfig(seed=1), {"schedule": "end_to_end", "loss": "bce"})
    assert e2e.training.end_to_end.loss == "bce"
    # the base is untouched
    assert base.training.seq.sampling == "oversample_1_1"


def test_unknown_axis():
    with pytest.raises(ValueError, match="axis"):
        apply_overrides(RunConfig(seed=1), {"momentum": 0.9})


def test_axis_defaults_all_apply():
    for axis, (_, values) in AXIS_DEFAULTS.items():
        for v in values:
            apply_overrides(RunConfig(seed=1), {axis: v})
