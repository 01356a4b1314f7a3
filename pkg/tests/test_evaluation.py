import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from credrisk.evaluation import (
    AblationRow,
    AblationTable,
    EvalReport,
    auc,
    auc_null_std,
    bootstrap_auc_std,
    evaluate,
    expand_grid,
    plot_curves,
    predict_proba,
    run_ablation,
    shuffled_control_auc,
)


def brute_force_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def scored_labels(max_n=200, levels=None):
    score = st.integers(0, levels - 1).map(float) if levels else st.floats(-1e3, 1e3)
    return st.integers(2, max_n).flatmap(
        lambda n: st.tuples(st.lists(score, min_size=n, max_size=n),
                            st.lists(st.sampled_from([0, 1]), min_size=n, max_size=n))
    ).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@settings(max_examples=300, deadline=None)
@given(scored_labels())
def test_auc_equals_pairwise_count(t):
    s, y = t
    assert auc(s, y) == brute_force_auc(s, y)


@settings(max_examples=200, deadline=None)
@given(scored_labels(levels=3))
def test_auc_with_heavy_ties(t):
    s, y = t
    assert auc(s, y) == brute_force_auc(s, y)


@settings(max_examples=100, deadline=None)
@given(scored_labels(max_n=60, levels=50))
def test_auc_invariant_under_monotone_transform(t):
    s, y = t
    s = np.asarray(s)
    # strictly increasing and exact on small integers
    assert auc(s**3 + 7 * s - 2, y) == auc(s, y)


@settings(max_examples=100, deadline=None)
@given(scored_labels(max_n=60))
def test_auc_complement_under_negation(t):
    s, y = t
    assert auc(-np.asarray(s), y) == pytest.approx(1 - auc(s, y), abs=1e-12)


def test_auc_known_cases():
    assert auc([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1]) == 1.0
    assert auc([0.4, 0.3, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_single_class_is_nan():
    assert math.isnan(auc([0.1, 0.2], [1, 1]))
    assert math.isnan(auc([0.1, 0.2], [0, 0]))


def test_null_std_matches_simulation():
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(40), np.zeros(400)]
    sims = [auc(rng.random(len(y)), y) for _ in range(3000)]
    assert np.std(sims) == pytest.approx(auc_null_std(40, 400), rel=0.06)


def test_shuffled_control_near_half():
    rng = np.random.default_rng(1)
    y = (rng.random(20000) < 0.1).astype(int)
    s = y + rng.normal(0, 1, len(y))
    assert auc(s, y) > 0.7
    assert abs(shuffled_control_auc(s, y, seed=2) - 0.5) < 4 * auc_null_std(y.sum(), len(y) - y.sum())


def test_bootstrap_std_is_positive_and_seeded():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 2, 300)
    s = y + rng.normal(0, 1, 300)
    a = bootstrap_auc_std(s, y, n_boot=50, seed=3)
    assert a > 0
    assert a == bootstrap_auc_std(s, y, n_boot=50, seed=3)


class ConstantModel:
    def __init__(self, probs):
        self.probs = probs

    def predict_proba(self, data):
        return self.probs


def test_evaluate_reports_every_label(small_processed):
    _, test = small_processed
    probs = np.random.default_rng(0).random(len(test))
    report = evaluate(ConstantModel(probs), test, config_hash="abc", seed=4, bootstrap=True, n_bootstrap=20)
    assert set(report.auc) == {"y_short_eval", "y_short_other2", "y_short_other3"}
    for label, a in report.auc.items():
        assert a == auc(probs, test.labels[label])
        assert report.n_pos[label] == int(test.labels[label].sum())
        assert report.bootstrap_std[label] > 0
    assert report.n == len(test)


def test_eval_report_roundtrip_and_equality():
    r = EvalReport({"y_short_eval": 0.61}, 100, {"y_short_eval": 2}, {"y_short_eval": 49.0},
                   {"y_short_eval": 0.2}, "h", 1, {}, wall_time=1.0)
    back = EvalReport.from_dict(json.loads(r.to_json()))
    assert back == r
    back.wall_time = 99.0
    assert back == r  # elapsed time is not part of the result
    back.auc["y_short_eval"] = 0.62
    assert back != r
    assert "0.6100" in r.to_markdown()


def test_predict_proba_in_unit_interval(small_processed, small_dims):
    from credrisk.nonseq import NonSeqModelConfig, init_nonseq

    train, _ = small_processed
    model = init_nonseq(NonSeqModelConfig(hidden_sizes=[8]), small_dims, 0)
    p = predict_proba(model, train, batch_size=300)
    assert p.shape == (len(train),)
    assert ((p > 0) & (p < 1)).all()


def test_expand_grid_is_cartesian_in_order():
    cells = expand_grid({"loss": ["wbce", "bce"], "k": [500, 100]})
    assert cells == [{"loss": "wbce", "k": 500}, {"loss": "wbce", "k": 100},
                     {"loss": "bce", "k": 500}, {"loss": "bce", "k": 100}]


def fake_cell(cfg, cell, train, test, cache):
    if cell["loss"] == "focal" and cfg.seed == 2:
        raise RuntimeError("diverged")
    bonus = {"wbce": 0.1, "bce": 0.05, "focal": 0.0}[cell["loss"]]
    return EvalReport({lab: 0.5 + bonus + cfg.seed / 100 for lab in cfg.evaluation.labels}, 1, {}, {}, {}, "", cfg.seed)


def test_run_ablation_records_failures_and_averages():
    from credrisk.config import RunConfig

    table = run_ablation({"loss": ["wbce", "bce", "focal"]}, RunConfig(seed=0), data=(None, None),
                         seeds=[1, 2], run_cell=fake_cell)
    assert len(table.rows) == 6
    failed = [r for r in table.rows if r.status == "failed"]
    assert len(failed) == 1 and "diverged" in failed[0].error
    summary = {e["loss"]: e for e in table.summary()}
    assert summary["wbce"]["y_short_eval"] == pytest.approx(0.615)
    assert summary["focal"]["runs"] == 1 and summary["focal"]["failed"] == 1
    assert table.to_csv().splitlines()[0] == "loss,seed,status,y_short_eval,y_short_other2,y_short_other3"
    assert "| wbce |" in table.to_markdown()
    assert json.loads(table.to_json())["axes"] == ["loss"]


def test_ablation_table_nan_when_all_failed():
    t = AblationTable(["loss"], ["y_short_eval"], [AblationRow({"loss": "bce"}, 1, {}, "failed", "x")])
    assert math.isnan(t.summary()[0]["y_short_eval"])


def test_plot_curves_writes_file(tmp_path):
    path = tmp_path / "curves.png"
    plot_curves({"baseline": [0.5, 0.6, 0.65], "pretrained": [0.5, 0.63, 0.66]}, path)
    assert path.stat().st_size > 0
