"""
Stochastic cluster-count sampling, K-Means and the Student's-t clustering
loss.
"""

from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import rel_entr

from deepform.errors import ConfigError, UsageError

logger = logging.getLogger(__name__)


@dataclass
class KMeansResult:
    """Lloyd output; ``inertia_history`` has one value per assignment step."""
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


@dataclass
class ClusterState:
    """
    Provisional clustering used by the cluster and contrastive terms.

    ``centroids`` start at the K-Means solution and are then moved by gradient
    steps until the next resample. ``q`` and ``p`` are refreshed every epoch.
    """
    k: int
    centroids: np.ndarray
    hard_assign: np.ndarray
    q: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None

    @classmethod
    def from_kmeans(cls, result: KMeansResult) -> 'ClusterState':
        return cls(k=result.k, centroids=result.centroids.copy(), hard_assign=result.labels.copy())


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return cdist(points, centroids, metric="sqeuclidean")


class ClusterEngine:
    """
    Cluster-count sampling, K-Means and the KL clustering objective.
    """

    @staticmethod
    def sample_k(k_max: int, rng: np.random.Generator) -> int:
        """
        Draw K uniformly from [2, k_max].

        Raises:
            ConfigError: If k_max < 2
        """
        if k_max < 2:
            raise ConfigError(f"k_max must be >= 2, got {k_max}")
        return int(rng.integers(2, k_max + 1))

    @staticmethod
    def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        """k-means++ seeding; returns the indices of the chosen points."""
        n = points.shape[0]
        chosen = [int(rng.integers(n))]
        closest = _squared_distances(points, points[chosen]).ravel()
        for _ in range(1, k):
            total = closest.sum()
            if total > 0:
                candidate = int(rng.choice(n, p=closest / total))
            else:
                # every point coincides with a chosen centre
                remaining = np.setdiff1d(np.arange(n), chosen)
                candidate = int(rng.choice(remaining))
            chosen.append(candidate)
            closest = np.minimum(closest, _squared_distances(points, points[[candidate]]).ravel())
        return np.asarray(chosen)

    @staticmethod
    def assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest centroid per point (ties go to the lower index) and its squared distance."""
        distances = _squared_distances(points, centroids)
        labels = np.argmin(distances, axis=1)
        return labels, distances[np.arange(len(points)), labels]

    @staticmethod
    def repair_empty(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray,
                     nearest: np.ndarray) -> int:
        """
        Re-seed empty clusters in place from the point farthest from its centroid.

        Only points of clusters with more than one member are moved. Returns the
        number of clusters repaired.
        """
        k = centroids.shape[0]
        sizes = np.bincount(labels, minlength=k)
        repaired = 0
        for cluster in np.flatnonzero(sizes == 0):
            movable = sizes[labels] > 1
            if not movable.any():
                break
            candidates = np.where(movable, nearest, -np.inf)
            point = int(np.argmax(candidates))
            sizes[labels[point]] -= 1
            labels[point] = cluster
            sizes[cluster] = 1
            centroids[cluster] = points[point]
            nearest[point] = 0.0
            repaired += 1
        if repaired:
            logger.debug(f"Re-seeded {repaired} empty clusters")
        return repaired

    @staticmethod
    def kmeans(
        points: np.ndarray,
        k: int,
        seed: int | np.random.Generator = 0,
        max_iter: int = 100,
        tol: float = 1e-6
    ) -> KMeansResult:
        """
        Lloyd's algorithm with k-means++ seeding and empty-cluster repair.

        Stops when the summed squared centroid shift drops below tol or after
        max_iter iterations.

        Raises:
            UsageError: If k < 1 or k exceeds the number of points
        """
        points = np.asarray(points, dtype=np.float64)
        n = points.shape[0]
        if k < 1 or k > n:
            raise UsageError(f"K must be in [1, {n}], got {k}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

        centroids = points[ClusterEngine.kmeans_plusplus(points, k, rng)].copy()
        history: list[float] = []
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            labels, nearest = ClusterEngine.assign(points, centroids)
            ClusterEngine.repair_empty(points, centroids, labels, nearest)
            history.append(float(nearest.sum()))

            sums = np.zeros_like(centroids)
            np.add.at(sums, labels, points)
            counts = np.bincount(labels, minlength=k)[:, None]
            updated = sums / counts
            shift = float(np.sum((updated - centroids) ** 2))
            centroids = updated
            if shift < tol:
                break

        labels, nearest = ClusterEngine.assign(points, centroids)
        ClusterEngine.repair_empty(points, centroids, labels, nearest)
        inertia = float(nearest.sum())
        history.append(inertia)
        logger.debug(f"K-Means K={k} finished after {n_iter} iterations, inertia {inertia:.6g}")
        return KMeansResult(centroids=centroids, labels=labels, inertia=inertia,
                            n_iter=n_iter, inertia_history=history)

    @staticmethod
    def kernel(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        """Student's t kernel (1 + ||z - mu||^2)^-1."""
        return 1.0 / (1.0 + _squared_distances(np.asarray(points, dtype=np.float64),
                                                np.asarray(centroids, dtype=np.float64)))

    @staticmethod
    def soft_assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        """Row-normalized Student's t kernel Q."""
        kappa = ClusterEngine.kernel(points, centroids)
        return kappa / kappa.sum(axis=1, keepdims=True)

    @staticmethod
    def target_distribution(q: np.ndarray) -> np.ndarray:
        """Sharpened targets: q^2 divided by column mass, then row-normalized."""
        weight = q ** 2 / q.sum(axis=0)
        return weight / weight.sum(axis=1, keepdims=True)

    @staticmethod
    def cluster_loss(p: np.ndarray, q: np.ndarray) -> float:
        """KL(P || Q) summed over users; 0 log 0 counts as 0."""
        return float(np.sum(rel_entr(p, q)))

    @staticmethod
    def cluster_loss_grad(points: np.ndarray, centroids: np.ndarray,
                          p: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """
        KL loss and its gradients with P held constant.

        Returns:
            (loss, d_points, d_centroids)
        """
        points = np.asarray(points, dtype=np.float64)
        centroids = np.asarray(centroids, dtype=np.float64)
        kappa = ClusterEngine.kernel(points, centroids)
        q = kappa / kappa.sum(axis=1, keepdims=True)
        loss = ClusterEngine.cluster_loss(p, q)

        w = (p - q) * kappa
        d_points = 2.0 * (w.sum(axis=1, keepdims=True) * points - w @ centroids)
        d_centroids = -2.0 * (w.T @ points - w.sum(axis=0)[:, None] * centroids)
        return loss, d_points, d_centroids
