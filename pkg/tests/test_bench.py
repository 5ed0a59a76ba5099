import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engcap.bench import (
    TrainConfig,
    classification_report,
    confusion_matrix,
    cv_rows,
    evaluate,
    make_split_plan,
    normalize_pixels,
    report_from_confusion,
    run_ablation,
    run_cross_validation,
    snr_f1_report,
    train_model,
    write_csv,
    write_history_csv,
)
from engcap.bench.split import largest_remainder
from engcap.nn import analyze, build_architecture, build_mobilescape, build_variant
from engcap.nn.arch import VARIANTS

SMALL = (16, 20, 1)


def _blobs(n, shape=(56, 100), seed=0, n_classes=2):
    """Class k has a bright patch in a different band of rows."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    x = rng.normal(size=(n, *shape)).astype(np.float32)
    band = shape[0] // n_classes
    for i, k in enumerate(y):
        r = k * band + band // 4
        x[i, r : r + max(2, band // 3), shape[1] // 3 : 2 * shape[1] // 3] += 6.0
    return x, y


def _tiny_arch():
    return build_mobilescape(SMALL, kernels=(3, 3), filters=(4, 8), name="tiny")


# ---------- split ----------


def test_split_balanced_thousand():
    plan = make_split_plan(np.arange(1000) % 2, seed=0)
    assert len(plan.test_indices) == 150
    assert [len(v) for _, v in plan.folds] == [170] * 5


def test_split_stratified_quotas():
    labels = np.repeat([0, 1, 2], [400, 300, 300])
    plan = make_split_plan(labels, seed=4)
    assert np.bincount(labels[plan.test_indices]).tolist() == [60, 45, 45]


def test_largest_remainder_sums_to_rounded_total():
    # remainders 0.05, 0.05, 0.9: the leftover unit goes to the largest
    assert largest_remainder([7, 7, 6], 0.15) == [1, 1, 1]
    # equal remainders: ties broken by class order
    assert largest_remainder([10, 10, 10], 0.15) == [2, 1, 1]
    assert largest_remainder([400, 300, 300], 0.15) == [60, 45, 45]


def test_split_needs_enough_per_class():
    with pytest.raises(ValueError):
        make_split_plan(np.array([0] * 50 + [1] * 4))


@pytest.mark.parametrize("seed", range(100))
def test_split_invariants(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=int(rng.integers(60, 300)))
    if np.bincount(labels, minlength=3).min() < 8:
        labels[:24] = np.repeat([0, 1, 2], 8)
    plan = make_split_plan(labels, seed=seed)
    test = set(plan.test_indices.tolist())
    vals = [set(v.tolist()) for _, v in plan.folds]
    # disjoint and covering
    assert sum(len(v) for v in vals) + len(test) == len(labels)
    assert set().union(*vals, test) == set(range(len(labels)))
    for k, (tr, va) in enumerate(plan.folds):
        assert not set(tr.tolist()) & set(va.tolist())
        assert not set(tr.tolist()) & test
        assert set(tr.tolist()) | set(va.tolist()) == set(plan.pool_indices.tolist())
    counts = np.bincount(labels, minlength=3)
    for c in range(3):
        assert abs(np.sum(labels[plan.test_indices] == c) - 0.15 * counts[c]) <= 1
        pool_c = counts[c] - np.sum(labels[plan.test_indices] == c)
        for _, va in plan.folds:
            assert abs(np.sum(labels[va] == c) - pool_c / 5) <= 1
    again = make_split_plan(labels, seed=seed)
    assert json.dumps(again.to_dict()) == json.dumps(plan.to_dict())


def test_non_stratified_split_is_disjoint():
    labels = np.arange(100) % 3
    plan = make_split_plan(labels, seed=1, stratified=False)
    assert len(plan.test_indices) == 15
    assert not np.intersect1d(plan.pool_indices, plan.test_indices).size


# ---------- normalisation ----------


def test_normalization_midpoint_and_no_clipping():
    train = np.array([[-40.0, 40.0, 0.0]])
    tr, (va,), stats = normalize_pixels(train, np.array([[0.0, 80.0]]))
    assert tr[0, 2] == pytest.approx(0.5)
    assert va[0, 0] == pytest.approx(0.5) and va[0, 1] == pytest.approx(1.5)
    assert not stats["degenerate"]


def test_normalization_degenerate_range():
    tr, (va,), stats = normalize_pixels(np.full((3, 4), 2.0), np.array([7.0]))
    assert stats["degenerate"]
    assert np.all(tr == 0.5) and np.all(va == 0.5)


def test_normalization_rejects_empty():
    with pytest.raises(ValueError):
        normalize_pixels(np.zeros((0, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalization_stats_ignore_test_samples(seed):
    rng = np.random.default_rng(seed)
    train, test = rng.normal(size=(10, 4)), rng.normal(scale=100, size=(6, 4))
    _, (a,), s1 = normalize_pixels(train, test)
    perm = rng.permutation(6)
    _, (b,), s2 = normalize_pixels(train, test[perm] * 3.0)
    assert s1 == s2


# ---------- metrics ----------


def test_perfect_predictions():
    y = np.arange(30) % 3
    rep = classification_report(y, y)
    assert rep.accuracy == 1.0 and rep.macro_f1 == 1.0


def test_diagonal_confusion_gives_unit_f1():
    rep = report_from_confusion(np.diag([10, 10, 10]))
    assert rep.f1.tolist() == [1.0, 1.0, 1.0]


def test_uniform_random_predictions_near_chance():
    rng = np.random.default_rng(0)
    y = np.arange(1000) % 3
    rep = classification_report(y, rng.integers(0, 3, 1000))
    assert abs(rep.accuracy - 1 / 3) <= 0.05


def test_absent_class_scores_zero_not_nan():
    rep = classification_report([0, 0, 1], [0, 0, 0])
    assert rep.f1.tolist()[1:] == [0.0, 0.0]
    assert np.isfinite(rep.macro_f1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=200))
def test_metric_identities(pairs):
    yt, yp = np.array(pairs).T
    cm = confusion_matrix(yt, yp, 3)
    rep = report_from_confusion(cm)
    assert rep.macro_f1 == float(np.mean(rep.f1))
    assert rep.accuracy == np.trace(cm) / cm.sum()
    assert cm.sum() == len(pairs)


# ---------- training ----------


def test_toy_separable_task_reaches_full_accuracy():
    x, y = _blobs(104, seed=0)
    arch = build_architecture("mobilescape")
    state, hist = train_model(arch, x[:64], y[:64], x[64:], y[64:], TrainConfig(max_epochs=20, patience=3))
    assert len(hist) <= 20
    assert max(h["val_accuracy"] for h in hist) >= 0.99
    assert evaluate(state, x[64:], y[64:]).accuracy >= 0.99


def test_best_weights_have_minimum_validation_loss():
    x, y = _blobs(60, SMALL[:2], seed=2, n_classes=3)
    state, hist = train_model(_tiny_arch(), x[:40], y[:40], x[40:], y[40:], TrainConfig(max_epochs=8, patience=7, batch_size=8))
    best = min(hist, key=lambda h: h["val_loss"])
    assert state.metadata["best_epoch"] == best["epoch"]
    assert state.metadata["best_val_loss"] == best["val_loss"]
    assert set(hist[0]) >= {"epoch", "train_loss", "val_loss", "val_macro_f1"}


def test_patience_zero_stops_at_first_non_improving_epoch():
    x, y = _blobs(60, SMALL[:2], seed=3, n_classes=3)
    _, hist = train_model(_tiny_arch(), x[:40], y[:40], x[40:], y[40:], TrainConfig(max_epochs=30, patience=0, batch_size=8, lr=0.05))
    losses = [h["val_loss"] for h in hist]
    assert all(b < a for a, b in zip(losses[:-2], losses[1:-1]))
    if len(hist) < 30:
        assert losses[-1] >= min(losses[:-1])


def test_training_is_deterministic():
    x, y = _blobs(40, SMALL[:2], seed=4, n_classes=3)
    runs = [train_model(_tiny_arch(), x[:30], y[:30], x[30:], y[30:], TrainConfig(max_epochs=3, patience=2, batch_size=8))
            for _ in range(2)]
    for wa, wb in zip(runs[0][0].weights, runs[1][0].weights):
        assert all(np.array_equal(wa[k], wb[k]) for k in wa)
    assert runs[0][1] == runs[1][1]


def test_shape_mismatch_is_rejected():
    x, y = _blobs(10, (8, 8))
    with pytest.raises(ValueError):
        train_model(_tiny_arch(), x, y, x, y, TrainConfig(max_epochs=2, patience=1))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=5, patience=5)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_evaluation_is_pure():
    x, y = _blobs(30, SMALL[:2], seed=5, n_classes=3)
    state, _ = train_model(_tiny_arch(), x[:20], y[:20], x[20:], y[20:], TrainConfig(max_epochs=2, patience=1, batch_size=8))
    a = json.dumps(evaluate(state, x, y).to_dict(), sort_keys=True)
    b = json.dumps(evaluate(state, x, y).to_dict(), sort_keys=True)
    assert a == b


# ---------- cross-validation and ablation ----------


@pytest.fixture(scope="module")
def small_dataset():
    x, y = _blobs(90, SMALL[:2], seed=6, n_classes=3)
    return x, y, make_split_plan(y, seed=0)


def test_cross_validation_cardinality_and_mean(small_dataset, tmp_path):
    x, y, plan = small_dataset
    seen = []
    res = run_cross_validation(_tiny_arch(), x, y, plan, TrainConfig(max_epochs=2, patience=1, batch_size=16),
                               on_fold=lambda k, *_: seen.append(k))
    assert seen == [0, 1, 2, 3, 4]
    assert len(res.states) == len(res.fold_reports) == 5
    f1 = [r.macro_f1 for r in res.fold_reports]
    assert abs(res.macro_f1_mean - np.mean(f1)) <= 1e-12
    assert abs(res.macro_f1_std - np.std(f1)) <= 1e-12
    assert res.aggregate.confusion.sum() == 5 * len(plan.test_indices)
    rows = cv_rows(res)
    write_csv(tmp_path / "r.csv", rows)
    write_history_csv(tmp_path / "h.csv", res.histories[0])
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "model,fold,class,precision,recall,f1,accuracy,macro_f1,params,flops,snr_db"
    assert (tmp_path / "h.csv").read_text().startswith("epoch,train_loss,val_loss,val_macro_f1")


def test_cross_validation_rejects_inconsistent_plan(small_dataset):
    x, y, plan = small_dataset
    with pytest.raises(ValueError):
        run_cross_validation(_tiny_arch(), x[:20], y[:20], plan, TrainConfig(max_epochs=2, patience=1))


def test_ablation_has_six_rows_with_consistent_params(small_dataset):
    x, y, plan = small_dataset
    rows, results = run_ablation(x, y, plan, TrainConfig(max_epochs=1, patience=0, batch_size=32))
    assert [r["variant"] for r in rows] == ["E0", "E1", "E2", "E3", "E4", "E5"]
    for r in rows:
        assert r["params"] == analyze(build_variant(r["variant"].lower(), SMALL)).trainable_params
        assert len(r["fold_macro_f1"]) == 5
    assert set(results) == set(VARIANTS)


# ---------- SNR report ----------


def test_snr_report_consistency():
    pairs = [(0.0, 0.4), (3.0, 0.6), (12.0, 0.95)]
    rep = snr_f1_report(pairs)
    assert rep["f1_mean"] == pytest.approx(np.mean([0.4, 0.6, 0.95]), abs=1e-15)
    assert rep["f1_std"] == pytest.approx(np.std([0.4, 0.6, 0.95]), abs=1e-15)
    assert [(p["snr_db"], p["f1"]) for p in rep["points"]] == pairs
    assert rep["std_undefined"] is False


def test_snr_report_single_point_flags_std():
    rep = snr_f1_report([(6.0, 0.9)])
    assert rep["std_undefined"] and rep["f1_std"] is None
    with pytest.raises(ValueError):
        snr_f1_report([])
