"""Sampling protocol, confusion matrices, overall accuracy and Cohen's kappa."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .tensor import LabeledSamples

#: Share of a class used for training when fewer pixels than requested exist.
SMALL_CLASS_FRACTION = 0.8


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with reference classes on rows and predictions on columns."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def overall_accuracy(self) -> float:
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return float(np.trace(self.counts)) / self.total


def confusion(y_true, y_pred, n_classes: int | None = None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if n_classes is None:
        n_classes = int(max(y_true.max(initial=0), y_pred.max(initial=0)))
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true - 1, y_pred - 1), 1)
    return ConfusionMatrix(counts)


def kappa(cm: ConfusionMatrix | np.ndarray) -> float:
    """Cohen's kappa, ``(p_o - p_e) / (1 - p_e)``.

    When chance agreement is total (``p_e == 1``) the result is 1 for perfect
    agreement and 0 otherwise.
    """
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    total = counts.sum()
    if counts.size == 0 or total <= 0:
        raise ValueError("empty confusion matrix")
    total = float(total)
    p_o = np.trace(counts) / total
    p_e = float(np.dot(counts.sum(axis=1), counts.sum(axis=0))) / total ** 2
    if p_e >= 1.0:
        return 1.0 if p_o >= 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def stratified_sample(samples: LabeledSamples, per_class: int,
                      rng: np.random.Generator) -> tuple[LabeledSamples, LabeledSamples]:
    """Split off ``per_class`` training pixels per class.

    Classes with fewer than ``per_class`` pixels contribute
    ``floor(0.8 * available)`` instead.
    """
    train_idx = []
    for c in range(1, samples.n_classes + 1):
        idx = np.flatnonzero(samples.labels == c)
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} labeled pixels; at least 2 are needed")
        n = per_class if idx.size >= per_class else int(np.floor(SMALL_CLASS_FRACTION * idx.size))
        train_idx.append(rng.choice(idx, size=n, replace=False))
    train_idx = np.sort(np.concatenate(train_idx))
    mask = np.zeros(len(samples), dtype=bool)
    mask[train_idx] = True
    return samples.subset(mask), samples.subset(~mask)


def spatial_exclusion(rest: LabeledSamples, train: LabeledSamples, window: int,
                      shape: tuple[int, int] | None = None) -> LabeledSamples:
    """Drop pixels of ``rest`` within Chebyshev distance ``(window-1)//2`` of training pixels."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if len(rest) == 0:
        return rest
    if shape is None:
        h = int(max(rest.rows.max(), train.rows.max(initial=0))) + 1
        w = int(max(rest.cols.max(), train.cols.max(initial=0))) + 1
    else:
        h, w = shape
    near = np.zeros((h, w), dtype=bool)
    near[train.rows, train.cols] = True
    if window > 1:
        near = ndimage.binary_dilation(near, structure=np.ones((window, window), dtype=bool))
    return rest.subset(~near[rest.rows, rest.cols])


def evaluate(y_true, y_pred, n_classes: int) -> dict:
    cm = confusion(y_true, y_pred, n_classes)
    return {"kappa": kappa(cm), "accuracy": cm.overall_accuracy(), "confusion": cm}


@dataclass
class RunSummary:
    seed: int
    kappa: float
    accuracy: float
    n_features: int


def repeated_runs(cube, samples: LabeledSamples, config, per_class: int, window: int,
                  seeds: Sequence[int] = range(5)) -> list[RunSummary]:
    """Repeat sampling and active-set training once per seed (5 seeds by default).

    Each seed draws its own stratified training set and spatially excluded
    test set, and seeds the filter sampler.
    """
    from dataclasses import replace

    from .active_set import run
    from .classify import feature_stack
    from .glasso import predict

    out = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        train, rest = stratified_sample(samples, per_class, rng)
        test = spatial_exclusion(rest, train, window, cube.shape)
        result = run(cube, train, replace(config, seed=int(seed)))
        X = feature_stack(cube, result.state)
        flat = test.rows * cube.width + test.cols
        labels, _ = predict(result.state, X[flat])
        scores = evaluate(test.labels, labels, samples.n_classes)
        out.append(RunSummary(int(seed), scores["kappa"], scores["accuracy"],
                              result.state.n_features))
    return out


def format_report(runs: Sequence[RunSummary]) -> str:
    """Per-run table followed by mean and standard deviation rows."""
    lines = ["seed\tkappa\taccuracy\tfeatures"]
    for r in runs:
        lines.append(f"{r.seed}\t{r.kappa:.4f}\t{r.accuracy:.4f}\t{r.n_features}")
    if runs:
        k = np.array([r.kappa for r in runs])
        a = np.array([r.accuracy for r in runs])
        f = np.array([r.n_features for r in runs], dtype=float)
        lines.append(f"mean\t{k.mean():.4f}\t{a.mean():.4f}\t{f.mean():.1f}")
        lines.append(f"std\t{k.std():.4f}\t{a.std():.4f}\t{f.std():.1f}")
    return "\n".join(lines) + "\n"
