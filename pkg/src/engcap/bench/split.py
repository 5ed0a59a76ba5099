"""Held-out test extraction and k-fold partition of the remaining pool."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplitPlan:
    test_indices: np.ndarray
    # one (train_indices, val_indices) pair per fold
    folds: tuple
    seed: int
    stratified: bool = True

    @property
    def pool_indices(self) -> np.ndarray:
        return np.sort(np.concatenate([v for _, v in self.folds]))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "stratified": self.stratified,
            "test_indices": self.test_indices.tolist(),
            "folds": [{"train": t.tolist(), "val": v.tolist()} for t, v in self.folds],
        }


def largest_remainder(counts, fraction) -> list[int]:
    """Integer quotas ``~ fraction * counts`` summing to ``round(fraction * total)``."""
    raw = np.asarray(counts, dtype=float) * fraction
    quota = np.floor(raw).astype(int)
    short = int(round(fraction * sum(counts))) - int(quota.sum())
    # ties broken by class order
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - quota[i]), i))
    for i in order[:short]:
        quota[i] += 1
    return quota.tolist()


def make_split_plan(labels, seed: int = 0, test_fraction: float = 0.15, n_folds: int = 5, stratified: bool = True) -> SplitPlan:
    labels = np.asarray(labels)
    n = len(labels)
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    classes = sorted(Counter(labels.tolist()))
    if stratified:
        members = {c: rng.permutation(np.flatnonzero(labels == c)) for c in classes}
        quotas = largest_remainder([len(members[c]) for c in classes], test_fraction)
        test = np.concatenate([members[c][:q] for c, q in zip(classes, quotas)])
        pools = {c: members[c][q:] for c, q in zip(classes, quotas)}
        for c in classes:
            if len(pools[c]) < n_folds:
                raise ValueError(f"class {c!r} has {len(pools[c])} samples in the pool, need >= {n_folds}")
        ordered = np.concatenate([pools[c] for c in classes])
    else:
        if n < n_folds + 1:
            raise ValueError(f"need more than {n_folds} samples")
        perm = rng.permutation(n)
        n_test = int(round(test_fraction * n))
        test, ordered = perm[:n_test], perm[n_test:]
    # class-ordered round robin gives every fold a near-equal share of each class
    fold_of = np.arange(len(ordered)) % n_folds
    folds = []
    for k in range(n_folds):
        val = np.sort(ordered[fold_of == k])
        train = np.sort(ordered[fold_of != k])
        folds.append((train, val))
    return SplitPlan(np.sort(test), tuple(folds), seed, stratified)
