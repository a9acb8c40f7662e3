"""
Cluster-guided contrastive sampling with triplet and InfoNCE losses.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.special import logsumexp, softmax

from deepform.models.state.config import NceDenominator

logger = logging.getLogger(__name__)


@dataclass
class ContrastBatch:
    """
    Sampled contrastive tuples.

    Triplets are (anchor, anchor's cluster, negative user); InfoNCE tuples are
    (anchor, positive user, ``n_neg`` negative users).
    """
    triplet_anchors: np.ndarray
    triplet_clusters: np.ndarray
    triplet_negatives: np.ndarray
    nce_anchors: np.ndarray
    nce_positives: np.ndarray
    nce_negatives: np.ndarray
    n_neg: int

    @classmethod
    def empty(cls, n_neg: int) -> 'ContrastBatch':
        none = np.empty(0, dtype=np.int64)
        return cls(none, none, none, none, none, np.empty((0, n_neg), dtype=np.int64), n_neg)

    @property
    def n_triplets(self) -> int:
        return len(self.triplet_anchors)

    @property
    def n_tuples(self) -> int:
        return len(self.nce_anchors)

    def is_empty(self) -> bool:
        return self.n_triplets == 0 and self.n_tuples == 0


class ContrastiveEngine:
    """
    Sampling and losses for the contrastive term.
    """

    @staticmethod
    def sample_batch(hard_assign: np.ndarray, rng: np.random.Generator, n_neg: int = 5) -> ContrastBatch:
        """
        One triplet per user and one InfoNCE tuple per user whose cluster has
        another member. Positives and negatives are drawn uniformly (negatives
        with replacement) from the eligible users.
        """
        labels = np.asarray(hard_assign, dtype=np.int64)
        n = len(labels)
        if n == 0 or np.unique(labels).size < 2:
            logger.warning("All users share one cluster; contrastive batch skipped")
            return ContrastBatch.empty(n_neg)

        order = np.argsort(labels, kind="stable")
        sizes = np.bincount(labels)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        position = np.empty(n, dtype=np.int64)
        position[order] = np.arange(n)

        users = np.arange(n)
        own_size = sizes[labels]
        own_start = starts[labels]

        def draw_outside(anchor_labels: np.ndarray, count: int) -> np.ndarray:
            size = sizes[anchor_labels][:, None]
            start = starts[anchor_labels][:, None]
            r = (rng.random((len(anchor_labels), count)) * (n - size)).astype(np.int64)
            return order[np.where(r < start, r, r + size)]

        triplet_negatives = draw_outside(labels, 1)[:, 0]

        eligible = own_size > 1
        anchors = users[eligible]
        offset = (rng.random(len(anchors)) * (own_size[eligible] - 1)).astype(np.int64)
        own_offset = position[anchors] - own_start[eligible]
        offset = offset + (offset >= own_offset)
        positives = order[own_start[eligible] + offset]
        negatives = draw_outside(labels[eligible], n_neg)

        skipped = int((~eligible).sum())
        if skipped:
            logger.debug(f"{skipped} users in singleton clusters get no InfoNCE tuple")
        return ContrastBatch(
            triplet_anchors=users,
            triplet_clusters=labels.copy(),
            triplet_negatives=triplet_negatives,
            nce_anchors=anchors,
            nce_positives=positives,
            nce_negatives=negatives,
            n_neg=n_neg,
        )

    @staticmethod
    def triplet_loss(batch: ContrastBatch, points: np.ndarray, centroids: np.ndarray,
                     margin: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
        """
        Mean hinge max(0, ||z_u - mu_c|| - ||z_n - mu_c|| + margin).

        Inactive hinges, including the kink itself, contribute a zero subgradient.

        Returns:
            (loss, d_points, d_centroids)
        """
        points = np.asarray(points, dtype=np.float64)
        centroids = np.asarray(centroids, dtype=np.float64)
        d_points = np.zeros_like(points)
        d_centroids = np.zeros_like(centroids)
        count = batch.n_triplets
        if count == 0:
            return 0.0, d_points, d_centroids

        mu = centroids[batch.triplet_clusters]
        to_anchor = points[batch.triplet_anchors] - mu
        to_negative = points[batch.triplet_negatives] - mu
        dist_anchor = np.linalg.norm(to_anchor, axis=1)
        dist_negative = np.linalg.norm(to_negative, axis=1)
        hinge = dist_anchor - dist_negative + margin
        loss = float(np.maximum(hinge, 0.0).sum() / count)

        active = hinge > 0
        unit_anchor = np.divide(to_anchor, dist_anchor[:, None], out=np.zeros_like(to_anchor),
                                where=dist_anchor[:, None] > 0)
        unit_negative = np.divide(to_negative, dist_negative[:, None], out=np.zeros_like(to_negative),
                                  where=dist_negative[:, None] > 0)
        scale = active[:, None] / count
        np.add.at(d_points, batch.triplet_anchors, scale * unit_anchor)
        np.add.at(d_points, batch.triplet_negatives, -scale * unit_negative)
        np.add.at(d_centroids, batch.triplet_clusters, scale * (unit_negative - unit_anchor))
        return loss, d_points, d_centroids

    @staticmethod
    def infonce_loss(batch: ContrastBatch, points: np.ndarray, tau: float = 0.5,
                     denominator: NceDenominator = NceDenominator.WITH_POSITIVE) -> tuple[float, np.ndarray]:
        """
        Mean InfoNCE over the batch tuples, computed with log-sum-exp.

        ``WITH_POSITIVE`` puts the positive logit into the denominator (loss >= 0);
        ``NEGATIVES_ONLY`` sums over negatives only and may go negative.

        Returns:
            (loss, d_points)
        """
        points = np.asarray(points, dtype=np.float64)
        d_points = np.zeros_like(points)
        count = batch.n_tuples
        if count == 0:
            return 0.0, d_points

        anchors = points[batch.nce_anchors]
        positives = points[batch.nce_positives]
        negatives = points[batch.nce_negatives]
        pos_logit = np.einsum("ij,ij->i", anchors, positives) / tau
        neg_logits = np.einsum("ij,ikj->ik", anchors, negatives) / tau

        if denominator is NceDenominator.WITH_POSITIVE:
            logits = np.concatenate([pos_logit[:, None], neg_logits], axis=1)
            per_tuple = logsumexp(logits, axis=1) - pos_logit
            weights = softmax(logits, axis=1)
            d_pos = weights[:, 0] - 1.0
            d_neg = weights[:, 1:]
        else:
            per_tuple = logsumexp(neg_logits, axis=1) - pos_logit
            d_pos = -np.ones(count)
            d_neg = softmax(neg_logits, axis=1)
        loss = float(per_tuple.sum() / count)

        d_pos = d_pos / (tau * count)
        d_neg = d_neg / (tau * count)
        d_anchor = d_pos[:, None] * positives + np.einsum("ik,ikj->ij", d_neg, negatives)
        np.add.at(d_points, batch.nce_anchors, d_anchor)
        np.add.at(d_points, batch.nce_positives, d_pos[:, None] * anchors)
        np.add.at(d_points, batch.nce_negatives.ravel(),
                  (d_neg[:, :, None] * anchors[:, None, :]).reshape(-1, points.shape[1]))
        return loss, d_points
