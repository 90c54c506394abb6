"""Distribution metrics over embeddings and classifier scores.

Frechet distance between Gaussian feature fits, split-based
inception-style score, centroid separation, and ROC/PR machinery with
tie grouping. Synthetic ("fake") is the positive class everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise DataError("inconsistent Gaussian parameter shapes")
        if not np.allclose(self.cov, self.cov.T, atol=1e-9):
            raise DataError("covariance must be symmetric")


@dataclass(frozen=True)
class ScoredLabel:
    """A predicted probability of "fake" attached to the ground truth."""

    score: float
    label: Literal["real", "fake"]

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"score must be in [0, 1], got {self.score}")
        if self.label not in ("real", "fake"):
            raise DataError(f"label must be 'real' or 'fake', got {self.label!r}")


def fit_gaussian(features: np.ndarray) -> GaussianFit:
    """Sample mean and unbiased (n-1) covariance of row-vector features."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise DataError(f"expected (n, d) feature matrix, got shape {feats.shape}")
    n = feats.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 samples for a covariance estimate, got {n}")
    mu = feats.mean(axis=0)
    centered = feats - mu
    cov = centered.T @ centered / (n - 1)
    return GaussianFit(mean=mu, cov=(cov + cov.T) / 2.0, n=n)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.maximum(w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The cross term uses the symmetric product root
    tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}) by eigendecomposition, negative
    eigenvalues (roundoff) clamped to zero, which never leaves the real
    axis for PSD inputs.
    """
    if a.mean.shape != b.mean.shape:
        raise DataError("Gaussian fits have different dimensions")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    cross = np.sqrt(np.maximum(w, 0.0)).sum()
    fid = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross)
    return max(fid, 0.0)


def inception_score(probs: np.ndarray, splits: int = 10) -> tuple[float, float]:
    """exp(mean KL(p(y|x) || split marginal)) per split; (mean, std) over splits."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise DataError(f"expected (n, k) probability matrix, got shape {probs.shape}")
    if np.any(probs < -1e-9):
        raise DataError("negative class probabilities")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("class probability rows must sum to 1")
    n = probs.shape[0]
    if splits < 1 or n < splits:
        raise DataError(f"cannot take {splits} splits of {n} samples")
    scores = []
    for chunk in np.array_split(probs, splits):
        marginal = chunk.mean(axis=0)
        # 0 * log 0 = 0; marginal is 0 only where every row in the chunk is 0.
        ratio = np.divide(chunk, marginal, out=np.ones_like(chunk), where=marginal > 0)
        kl = np.where(chunk > 0, chunk * np.log(np.maximum(ratio, 1e-300)), 0.0).sum(axis=1)
        scores.append(np.exp(kl.mean()))
    arr = np.asarray(scores)
    return float(arr.mean()), float(arr.std())


def centroid_distance(points_a: np.ndarray, points_b: np.ndarray) -> float:
    a = np.atleast_2d(np.asarray(points_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(points_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise DataError("centroid distance needs nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise DataError("point sets have different dimensions")
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))


def _ranked_counts(items: list[ScoredLabel]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (tp, fp) at each distinct descending score, ties grouped."""
    if not items:
        raise DataError("empty score set")
    scores = np.array([it.score for it in items], dtype=np.float64)
    positive = np.array([it.label == "fake" for it in items])
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positive[order]
    last_of_group = np.concatenate([np.nonzero(np.diff(s))[0], [s.size - 1]])
    tp = np.cumsum(y)[last_of_group].astype(np.float64)
    fp = np.cumsum(~y)[last_of_group].astype(np.float64)
    return tp, fp, s[last_of_group]


def roc_curve(
    items: list[ScoredLabel],
) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], float]:
    """((fpr, tpr, thresholds), trapezoid AUC), anchored at (0, 0)."""
    tp, fp, thr = _ranked_counts(items)
    if tp[-1] == 0 or fp[-1] == 0:
        raise DataError("need both real and fake items")
    tpr = np.concatenate([[0.0], tp / tp[-1]])
    fpr = np.concatenate([[0.0], fp / fp[-1]])
    thresholds = np.concatenate([[np.inf], thr])
    auc = float(np.trapezoid(tpr, fpr))
    return (fpr, tpr, thresholds), auc


def pr_curve(
    items: list[ScoredLabel],
) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], float]:
    """((precision, recall, thresholds), step-interpolated average precision)."""
    tp, fp, thr = _ranked_counts(items)
    if tp[-1] == 0:
        raise DataError("need at least one fake item")
    precision = np.concatenate([[1.0], tp / (tp + fp)])
    recall = np.concatenate([[0.0], tp / tp[-1]])
    thresholds = np.concatenate([[np.inf], thr])
    ap = float((np.diff(recall) * precision[1:]).sum())
    return (precision, recall, thresholds), ap


def average_roc(
    curves: list[tuple], grid_points: int = 101
) -> tuple[np.ndarray, np.ndarray]:
    """Vertical average of ROC curves over a shared fpr grid.

    Each curve is (fpr, tpr) or the full (fpr, tpr, thresholds) triple that
    roc_curve returns; thresholds are ignored.
    """
    if not curves:
        raise DataError("no curves to average")
    grid = np.linspace(0.0, 1.0, grid_points)
    stack = np.stack([np.interp(grid, c[0], c[1]) for c in curves])
    return grid, stack.mean(axis=0)
