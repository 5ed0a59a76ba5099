"""Cross-validation, the E0-E5 ablation and the SNR-versus-F1 report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..nn.arch import VARIANTS, ArchitectureSpec, build_variant
from ..nn.complexity import analyze
from .metrics import MetricsReport, mean_std, report_from_confusion
from .split import SplitPlan
from .train import TrainConfig, evaluate, train_model

log = logging.getLogger(__name__)


@dataclass
class CrossValidationResult:
    arch: ArchitectureSpec
    fold_reports: list
    states: list
    histories: list
    aggregate: MetricsReport
    params: int = 0
    flops: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def macro_f1_mean(self) -> float:
        return self.aggregate.fold_stats["macro_f1"]["mean"]

    @property
    def macro_f1_std(self) -> float:
        return self.aggregate.fold_stats["macro_f1"]["std"]


def aggregate_folds(reports, class_names=()) -> MetricsReport:
    """Pooled confusion matrix plus mean/std of each fold metric."""
    agg = report_from_confusion(sum(r.confusion for r in reports), class_names)
    agg.fold_stats = {
        "n_folds": len(reports),
        "accuracy": mean_std([r.accuracy for r in reports]),
        "macro_f1": mean_std([r.macro_f1 for r in reports]),
        "f1": [mean_std([r.f1[c] for r in reports]) for c in range(len(agg.f1))],
        "precision": [mean_std([r.precision[c] for r in reports]) for c in range(len(agg.f1))],
        "recall": [mean_std([r.recall[c] for r in reports]) for c in range(len(agg.f1))],
    }
    return agg


def run_cross_validation(
    arch: ArchitectureSpec,
    images,
    labels,
    plan: SplitPlan,
    config: TrainConfig | None = None,
    class_names=(),
    on_fold=None,
) -> CrossValidationResult:
    """One model per fold (trained on the fold's train part, early-stopped
    on its validation part), each scored on the common held-out test set."""
    config = config or TrainConfig()
    images, labels = np.asarray(images), np.asarray(labels)
    pool = plan.pool_indices
    if np.intersect1d(pool, plan.test_indices).size or pool.max(initial=-1) >= len(labels) or plan.test_indices.max(initial=-1) >= len(labels):
        raise ValueError("split plan is inconsistent with the dataset")
    x_test, y_test = images[plan.test_indices], labels[plan.test_indices]
    reports, states, histories = [], [], []
    for k, (tr, va) in enumerate(plan.folds):
        state, hist = train_model(arch, images[tr], labels[tr], images[va], labels[va], config)
        rep = evaluate(state, x_test, y_test, class_names)
        log.info("%s fold %d: accuracy %.4f macro F1 %.4f", arch.name, k, rep.accuracy, rep.macro_f1)
        reports.append(rep)
        states.append(state)
        histories.append(hist)
        if on_fold is not None:
            on_fold(k, state, hist, rep)
    cost = analyze(arch)
    return CrossValidationResult(
        arch, reports, states, histories, aggregate_folds(reports, class_names), cost.trainable_params, cost.headline_flops
    )


def run_ablation(images, labels, plan: SplitPlan, config: TrainConfig | None = None, class_names=(), variants=None, input_shape=None):
    """Cross-validate every optimisation-study variant; one row per variant."""
    images = np.asarray(images)
    input_shape = input_shape or (*images.shape[1:3], 1)
    rows, results = [], {}
    for vid in variants or list(VARIANTS):
        arch = build_variant(vid, input_shape)
        res = run_cross_validation(arch, images, labels, plan, config, class_names)
        results[vid] = res
        rows.append({
            "variant": vid.upper(),
            "macro_f1_mean": res.macro_f1_mean,
            "macro_f1_std": res.macro_f1_std,
            "fold_macro_f1": [r.macro_f1 for r in res.fold_reports],
            "params": res.params,
            "flops": res.flops,
        })
    return rows, results


def snr_f1_report(pairs) -> dict:
    """Scatter data of (snr_db, f1) points with the mean and std of F1.

    A single point has no spread; its std is ``None`` and flagged.
    """
    points = [(float(s), float(f)) for s, f in pairs]
    if not points:
        raise ValueError("no (snr, f1) points")
    f1 = np.array([f for _, f in points])
    single = len(points) < 2
    return {
        "points": [{"snr_db": s, "f1": f} for s, f in points],
        "f1_mean": float(f1.mean()),
        "f1_std": None if single else float(f1.std()),
        "std_undefined": single,
    }
