"""Exact t-SNE for small feature sets.

O(n^2) implementation: Gaussian input affinities with per-point bandwidth
found by binary search to hit a target perplexity, Student-t output
affinities, gradient descent with early exaggeration, momentum switching,
and per-coordinate gains. Suitable for the corpus sizes used here (a few
hundred points); no tree approximations.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, NumericError

_EPS = 1e-12


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _row_affinities(d2_row: np.ndarray, target_entropy: float, tol: float = 1e-4,
                    max_iter: int = 100) -> np.ndarray:
    """Conditional p_{j|i} for one point, bandwidth beta found by bisection.

    Entropy here is the natural-log Shannon entropy of the row; the target
    is log(perplexity).
    """
    beta_lo, beta_hi = 0.0, np.inf
    beta = 1.0
    p = np.zeros_like(d2_row)
    for _ in range(max_iter):
        p = np.exp(-d2_row * beta)
        total = p.sum()
        if total <= 0:
            raise NumericError("degenerate affinity row: all distances too large")
        p = p / total
        entropy = float(-(p * np.log(np.maximum(p, _EPS))).sum())
        if abs(entropy - target_entropy) < tol:
            break
        if entropy > target_entropy:
            beta_lo = beta
            beta = beta * 2.0 if not np.isfinite(beta_hi) else (beta_lo + beta_hi) / 2.0
        else:
            beta_hi = beta
            beta = (beta_lo + beta_hi) / 2.0
    return p


def joint_probabilities(feats: np.ndarray, perplexity: float) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    n = feats.shape[0]
    if n < 5:
        raise DataError(f"need at least 5 points, got {n}")
    if n > 5000:
        raise DataError(
            f"{n} points exceed the exact O(n^2) budget of 5000; subsample first"
        )
    if not 1.0 < perplexity < n / 3.0:
        raise DataError(f"perplexity {perplexity} out of range for {n} points (need < n/3)")
    d2 = _pairwise_sq_dists(feats)
    target = float(np.log(perplexity))
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        p = _row_affinities(row, target)
        cond[i, np.arange(n) != i] = p
    joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(joint, _EPS)


def tsne_embed(
    feats: np.ndarray,
    n_components: int = 2,
    perplexity: float = 30.0,
    learning_rate: float = 200.0,
    n_iter: int = 1000,
    seed: int = 0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
) -> np.ndarray:
    """Low-dimensional layout of feats, shape (n, n_components)."""
    p = joint_probabilities(feats, perplexity)
    n = p.shape[0]
    rng = np.random.Generator(np.random.Philox(seed))
    y = rng.normal(0.0, 1e-2, (n, n_components))
    update = np.zeros_like(y)
    gains = np.ones_like(y)

    p_run = p * early_exaggeration
    for it in range(n_iter):
        if it == exaggeration_iters:
            p_run = p
        d2 = _pairwise_sq_dists(y)
        num = 1.0 / (1.0 + d2)
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), _EPS)
        # grad_i = 4 sum_j (p_ij - q_ij) num_ij (y_i - y_j)
        pq = (p_run - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)

        momentum = 0.5 if it < 250 else 0.8
        agree = np.sign(grad) == np.sign(update)
        gains = np.where(agree, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
    return y


def tsne_2d(
    features: np.ndarray, perplexity: float = 30.0, iterations: int = 1000, seed: int = 0
) -> np.ndarray:
    """2-D layout with the default optimizer settings; see tsne_embed for knobs."""
    return tsne_embed(
        features, n_components=2, perplexity=perplexity, n_iter=iterations, seed=seed
    )


def kl_divergence(feats: np.ndarray, layout: np.ndarray, perplexity: float) -> float:
    """Objective value of a finished layout, for regression tests."""
    p = joint_probabilities(feats, perplexity)
    d2 = _pairwise_sq_dists(np.asarray(layout, dtype=np.float64))
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), _EPS)
    return float((p * np.log(p / q)).sum())
