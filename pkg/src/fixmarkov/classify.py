"""Colour vs grayscale classification by thresholding Bayes factors."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Verdict(str, enum.Enum):
    COLOURED = "coloured"
    GRAYSCALE = "grayscale"


def classify_at(bf: float, threshold: float = 0.2) -> Verdict:
    """Coloured when the Bayes factor is strictly below the threshold."""
    return Verdict.COLOURED if bf < threshold else Verdict.GRAYSCALE


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.tpr.tolist(), self.fpr.tolist()))

    def best_threshold(self) -> tuple[float, float, float]:
        """(threshold, tpr, fpr) maximising TPR - FPR; the lowest threshold wins ties."""
        finite = np.isfinite(self.thresholds)
        j = np.where(finite, self.tpr - self.fpr, -np.inf)
        i = int(np.argmax(j))
        return float(self.thresholds[i]), float(self.tpr[i]), float(self.fpr[i])

    def rates_at(self, threshold: float) -> tuple[float, float]:
        """(TPR, FPR) for an arbitrary threshold."""
        # any threshold in (t[i-1], t[i]] selects the same values as t[i]
        i = min(int(np.searchsorted(self.thresholds, threshold, side="left")), len(self.thresholds) - 1)
        return float(self.tpr[i]), float(self.fpr[i])


def roc(coloured_bfs, grayscale_bfs) -> RocCurve:
    """ROC of the rule "coloured iff BF < threshold".

    Thresholds run over the distinct observed values plus -inf and +inf.
    Tied values across the two groups produce a diagonal step, so the
    trapezoid AUC counts ties as one half.
    """
    pos = np.sort(np.asarray(coloured_bfs, float))
    neg = np.sort(np.asarray(grayscale_bfs, float))
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both groups need at least one Bayes factor")
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([pos, neg])), [np.inf]])
    tpr = np.searchsorted(pos, thresholds, side="left") / len(pos)
    fpr = np.searchsorted(neg, thresholds, side="left") / len(neg)
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(thresholds, tpr, fpr, auc)


def rank_images(reports) -> list[tuple[int, float]]:
    """(image, strongest BF) pairs, best-fitting (smallest BF) first; ties by image id."""
    rows = [(r.image_id, r.strongest_log2_bf, r.strongest_bf) for r in reports]
    rows.sort(key=lambda row: (row[1], row[0]))
    return [(image, bf) for image, _, bf in rows]
