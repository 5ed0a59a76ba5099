"""Normalisation, mini-batch training with early stopping, and evaluation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..nn.arch import ArchitectureSpec
from ..nn.model import ModelState, Network, NumericalError
from ..nn.optim import Adam
from .metrics import MetricsReport, classification_report

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 150
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.patience < self.max_epochs:
            raise ValueError("need 0 <= patience < max_epochs")

    def to_dict(self):
        return asdict(self)


def normalize_pixels(train, *others):
    """Min-max scale with the training portion's global range.

    Returns ``(train_scaled, [others_scaled], stats)``.  A constant training
    set maps everything to 0.5 and sets ``stats["degenerate"]``.
    """
    train = np.asarray(train)
    if train.size == 0:
        raise ValueError("training set is empty")
    lo, hi = float(train.min()), float(train.max())
    stats = {"min": lo, "max": hi, "degenerate": hi == lo}
    return apply_normalization(train, stats), [apply_normalization(o, stats) for o in others], stats


def apply_normalization(x, stats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if stats["degenerate"]:
        return np.full_like(x, 0.5)
    lo = np.float32(stats["min"])
    span = np.float32(stats["max"] - stats["min"])
    return (x - lo) / span


def _as_images(x, input_shape):
    """Add the trailing channel axis to an ``(N, L, W)`` stack."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == len(input_shape):
        x = x[..., None]
    return x


def train_model(arch: ArchitectureSpec, x_train, y_train, x_val, y_val, config: TrainConfig | None = None):
    """Train from raw signature images; returns ``(ModelState, history)``.

    Pixels are scaled with the training set's range, which is stored in the
    returned state.  The state holds the weights of the epoch with the lowest
    validation loss.
    """
    config = config or TrainConfig()
    x_train = _as_images(x_train, arch.input_shape)
    x_val = _as_images(x_val, arch.input_shape)
    if x_train.shape[1:] != arch.input_shape:
        raise ValueError(f"signature shape {x_train.shape[1:]} does not match the network input {arch.input_shape}")
    y_train, y_val = np.asarray(y_train), np.asarray(y_val)
    x_train, (x_val,), stats = normalize_pixels(x_train, x_val)

    net = Network(arch, seed=config.seed)
    opt = Adam(config.lr, config.beta1, config.beta2, config.epsilon)
    rng = np.random.default_rng(config.seed)
    history = []
    best_loss, best_weights, best_epoch, wait = np.inf, net.get_weights(), 0, 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x_train))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            try:
                loss = net.loss_and_grads(x_train[idx], y_train[idx])
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}: {exc}") from None
            opt.step(net)
            total += loss * len(idx)
        train_loss = total / len(order)
        p_val = net.predict_proba(x_val)
        val_loss = float(-np.mean(np.log(np.maximum(p_val[np.arange(len(y_val)), y_val].astype(np.float64), 1e-300))))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericalError(f"epoch {epoch}: loss diverged")
        val_report = classification_report(y_val, p_val.argmax(axis=1), net.n_classes)
        history.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_macro_f1": val_report.macro_f1,
            "val_accuracy": val_report.accuracy,
        })
        log.info("epoch %d train %.4f val %.4f f1 %.3f", epoch, train_loss, val_loss, val_report.macro_f1)
        if val_loss < best_loss:
            best_loss, best_weights, best_epoch, wait = val_loss, net.get_weights(), epoch, 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    net.set_weights(best_weights)
    meta = {"best_epoch": best_epoch, "best_val_loss": best_loss, "epochs_run": len(history), "train": config.to_dict()}
    return net.state(norm_stats=stats, metadata=meta), history


def predict(state: ModelState, x, batch_size=128) -> np.ndarray:
    if not state.norm_stats:
        raise ValueError("model state has no normalisation statistics")
    net = Network.from_state(state)
    x = apply_normalization(_as_images(x, state.arch.input_shape), state.norm_stats)
    return net.predict(x, batch_size)


def evaluate(state: ModelState, x, y, class_names=()) -> MetricsReport:
    y = np.asarray(y)
    n_classes = state.arch.layers[-2].units
    return classification_report(y, predict(state, x), n_classes, class_names)
