"""
Classical group formation baselines on the rating matrix.
"""

import logging
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from deepform.cluster.cluster_engine import ClusterEngine
from deepform.errors import UsageError
from deepform.groupform.formation_types import GroupAssignment

from .gmm import DiagonalGMM

logger = logging.getLogger(__name__)

MIN_CO_RATED = 2
SPECTRAL_RANK = 32


def _check_k(k: int, n_users: int, minimum: int = 2) -> None:
    if not minimum <= k <= n_users:
        raise UsageError(f"K must be in [{minimum}, {n_users}], got {k}")


def pearson_similarity(x_train: sp.spmatrix, min_co_rated: int = MIN_CO_RATED) -> np.ndarray:
    """
    Pearson correlation of every user pair over their co-rated items.

    Pairs with fewer than ``min_co_rated`` common items or zero variance on
    them get 0. The diagonal is 1.
    """
    x = sp.csr_matrix(x_train, dtype=np.float64)
    mask = x.copy()
    mask.data = np.ones_like(mask.data)
    squares = x.multiply(x).tocsr()

    count = (mask @ mask.T).toarray()
    sum_u = (x @ mask.T).toarray()
    sum_v = sum_u.T
    sq_u = (squares @ mask.T).toarray()
    sq_v = sq_u.T
    cross = (x @ x.T).toarray()

    with np.errstate(divide="ignore", invalid="ignore"):
        cov = cross - sum_u * sum_v / count
        var_u = sq_u - sum_u ** 2 / count
        var_v = sq_v - sum_v ** 2 / count
        corr = cov / np.sqrt(var_u * var_v)
    scale = np.maximum(sq_u, sq_v)
    valid = (count >= min_co_rated) & (var_u > 1e-12 * scale) & (var_v > 1e-12 * scale)
    corr = np.where(valid, np.clip(corr, -1.0, 1.0), 0.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def baseline_similarity_groups(x_train: sp.spmatrix, k: int, seed: int = 0) -> GroupAssignment:
    """
    Farthest-first seeding on 1 - Pearson, then every user joins the seed it
    correlates with most (ties to the earlier seed).
    """
    n_users = x_train.shape[0]
    _check_k(k, n_users)
    started = time.perf_counter()
    corr = pearson_similarity(x_train)
    dissimilarity = 1.0 - corr

    rng = np.random.default_rng(seed)
    seeds = [int(rng.integers(n_users))]
    closest = dissimilarity[seeds[0]].copy()
    closest[seeds[0]] = -np.inf
    for _ in range(1, k):
        candidate = int(np.argmax(closest))
        seeds.append(candidate)
        closest = np.minimum(closest, dissimilarity[candidate])
        closest[seeds] = -np.inf

    membership = np.argmax(corr[:, seeds], axis=1).astype(np.int64)
    membership[seeds] = np.arange(k)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    logger.info(f"Similarity baseline formed {k} groups")
    return GroupAssignment(k=k, membership=membership, wall_time_ms=elapsed_ms, method="similarity")


def baseline_kmeans_groups(x_train: sp.spmatrix, k: int, seed: int = 0,
                           max_iter: int = 100, tol: float = 1e-6) -> GroupAssignment:
    """K-Means directly on the normalized rating rows."""
    n_users = x_train.shape[0]
    _check_k(k, n_users)
    started = time.perf_counter()
    result = ClusterEngine.kmeans(sp.csr_matrix(x_train).toarray(), k, seed, max_iter, tol)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return GroupAssignment(k=k, membership=result.labels.astype(np.int64), wall_time_ms=elapsed_ms,
                           inertia=result.inertia, n_iter=result.n_iter, method="kmeans")


def spectral_projection(x_train: sp.spmatrix, rank: int = SPECTRAL_RANK, seed: int = 0) -> np.ndarray:
    """Rows of X projected on their top singular directions (U * s)."""
    x = sp.csr_matrix(x_train, dtype=np.float64)
    rank = max(1, min(rank, min(x.shape) - 1))
    if min(x.shape) <= 2 or rank >= min(x.shape) - 1:
        u, s, _ = np.linalg.svd(x.toarray(), full_matrices=False)
        rank = min(rank, len(s))
        return u[:, :rank] * s[:rank]
    u, s, _ = svds(x, k=rank, random_state=seed)
    order = np.argsort(s)[::-1]
    return u[:, order] * s[order]


def baseline_gmm_groups(x_train: sp.spmatrix, k: int, seed: int = 0, rank: int = SPECTRAL_RANK,
                        max_iter: int = 100) -> GroupAssignment:
    """Diagonal-covariance mixture on a spectral reduction of the ratings."""
    n_users = x_train.shape[0]
    _check_k(k, n_users, minimum=1)
    started = time.perf_counter()
    reduced = spectral_projection(x_train, rank, seed)
    model = DiagonalGMM(k, max_iter=max_iter, seed=seed)
    result = model.fit(reduced)
    membership = model.predict(reduced).astype(np.int64)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    logger.info(f"GMM baseline: {k} components, log-likelihood {result.log_likelihood:.4f} "
                f"after {result.n_iter} iterations")
    return GroupAssignment(k=k, membership=membership, wall_time_ms=elapsed_ms, n_iter=result.n_iter,
                           method="gmm", metadata={"log_likelihood": result.log_likelihood})
