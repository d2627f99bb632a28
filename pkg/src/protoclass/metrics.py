"""Clustering evaluation: optimally matched accuracy, NMI, purity, confusion.

Predicted cluster ids are arbitrary, so accuracy is computed under the best
one-to-one matching between cluster ids and true classes (optimal assignment
on the k x k agreement matrix).  NMI is normalized by the geometric mean of
the marginal entropies, natural logs, and defined as 0 when either marginal
entropy is 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


def _check_ids(pred, truth, k: int | None = None):
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.ndim != 1 or pred.shape != truth.shape:
        raise ValueError(
            f"prediction and truth must be equal-length vectors, got {pred.shape} vs {truth.shape}"
        )
    if pred.size == 0:
        raise ValueError("empty label vectors")
    if k is not None:
        for name, ids in (("predicted", pred), ("true", truth)):
            if ids.min() < 0 or ids.max() >= k:
                raise ValueError(f"{name} id out of range [0, {k})")
    return pred, truth


def contingency(pred: np.ndarray, truth: np.ndarray, k: int) -> np.ndarray:
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def hungarian_accuracy(pred, truth, k: int) -> tuple[float, np.ndarray]:
    """Maximum-agreement accuracy and the predicted->true matching used."""
    pred, truth = _check_ids(pred, truth, k)
    table = contingency(pred, truth, k)
    rows, cols = linear_sum_assignment(table, maximize=True)
    matching = np.empty(k, dtype=np.int64)
    matching[rows] = cols
    accuracy = float(table[rows, cols].sum() / pred.size)
    return accuracy, matching


def nmi(pred, truth) -> float:
    """I(pred; truth) / sqrt(H(pred) H(truth)) from the joint count table."""
    pred, truth = _check_ids(pred, truth)
    k = int(max(pred.max(), truth.max())) + 1
    joint = contingency(pred, truth, k) / pred.size
    p_pred = joint.sum(axis=1)
    p_truth = joint.sum(axis=0)
    h_pred = float(-(p_pred[p_pred > 0] * np.log(p_pred[p_pred > 0])).sum())
    h_truth = float(-(p_truth[p_truth > 0] * np.log(p_truth[p_truth > 0])).sum())
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    nz = joint > 0
    outer = np.outer(p_pred, p_truth)
    info = float((joint[nz] * (np.log(joint[nz]) - np.log(outer[nz]))).sum())
    return min(1.0, max(0.0, info / np.sqrt(h_pred * h_truth)))


def purity(pred, truth) -> float:
    """Fraction of samples matching their cluster's majority true class."""
    pred, truth = _check_ids(pred, truth)
    k = int(max(pred.max(), truth.max())) + 1
    table = contingency(pred, truth, k)
    return float(table.max(axis=1).sum() / pred.size)


@dataclass
class MetricsReport:
    accuracy: float
    nmi: float
    purity_per_cluster: list[float]
    confusion: np.ndarray  # (k, k) counts, predicted x true
    matching: list[int]  # predicted id -> matched true class

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "nmi": self.nmi,
            "purity_per_cluster": self.purity_per_cluster,
            "confusion": self.confusion.tolist(),
            "matching": self.matching,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def report(pred, truth, k: int) -> MetricsReport:
    """Assemble the full evaluation report.

    Per-cluster purity is the max true-class fraction within the cluster
    (0.0 for empty clusters).
    """
    pred, truth = _check_ids(pred, truth, k)
    accuracy, matching = hungarian_accuracy(pred, truth, k)
    table = contingency(pred, truth, k)
    sizes = table.sum(axis=1)
    purities = [
        float(table[c].max() / sizes[c]) if sizes[c] > 0 else 0.0 for c in range(k)
    ]
    return MetricsReport(
        accuracy=accuracy,
        nmi=nmi(pred, truth),
        purity_per_cluster=purities,
        confusion=table,
        matching=[int(m) for m in matching],
    )
