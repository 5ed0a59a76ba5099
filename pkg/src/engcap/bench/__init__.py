"""Experiment harness: splits, training, metrics, cross-validation, reports."""

from .datasets import EXPERIMENT_GEOMETRY, SignatureDataset, build_signature_dataset, signatures_to_arrays
from .experiments import CrossValidationResult, aggregate_folds, run_ablation, run_cross_validation, snr_f1_report
from .metrics import MetricsReport, classification_report, confusion_matrix, mean_std, report_from_confusion
from .reports import REPORT_FIELDS, cv_rows, metrics_rows, write_csv, write_history_csv, write_json
from .split import SplitPlan, largest_remainder, make_split_plan
from .train import TrainConfig, apply_normalization, evaluate, normalize_pixels, predict, train_model
