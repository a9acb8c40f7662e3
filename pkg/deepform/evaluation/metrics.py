"""
Ranking and clustering metrics.
"""

import numpy as np
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score


def _discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def ndcg_at_k(ranked_items, relevant, k: int) -> float:
    """Binary-relevance NDCG; the ideal DCG fills min(k, |relevant|) slots."""
    relevant = set(int(item) for item in relevant)
    if not relevant or k <= 0:
        return 0.0
    top = np.asarray(ranked_items)[:k]
    gains = np.array([int(item) in relevant for item in top], dtype=float)
    dcg = float(np.sum(gains * _discounts(len(top))))
    idcg = float(np.sum(_discounts(min(k, len(relevant)))))
    return dcg / idcg


def hr_at_k(ranked_items, relevant, k: int) -> float:
    """1.0 if any relevant item is in the top k, else 0.0."""
    relevant = set(int(item) for item in relevant)
    top = np.asarray(ranked_items)[:k]
    return float(any(int(item) in relevant for item in top))


def clustering_quality(predicted, truth) -> tuple[float, float]:
    """(adjusted Rand index, normalized mutual information)."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    return float(adjusted_rand_score(truth, predicted)), float(normalized_mutual_info_score(truth, predicted))
