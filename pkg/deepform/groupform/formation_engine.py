"""
Inference-time group formation on a fixed final embedding.

Answering a new K only re-runs K-Means; the model is never retrained and the
embedding is never recomputed.
"""

import logging
import time
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import linregress

from deepform.cluster.cluster_engine import ClusterEngine
from deepform.encoder.encoder_engine import EncoderEngine
from deepform.errors import ShapeMismatchError, UsageError
from deepform.graph.graph_engine import UserGraph
from deepform.models.data.checkpoint import Checkpoint
from deepform.models.data.dataset import Dataset
from deepform.models.state.config import Activation
from deepform.services.data_managers.checkpoint_manager import CheckpointManager

from .formation_types import BenchResult, GroupAssignment

logger = logging.getLogger(__name__)

DEFAULT_K = 128
DEFAULT_BENCH_K = (2, 4, 8, 16, 32, 64, 128)


class FormationEngine:
    """
    Embedding and K-Means group formation.
    """

    @staticmethod
    def embed(checkpoint: Checkpoint, dataset: Dataset, graph: UserGraph) -> np.ndarray:
        """
        Z_final = Z_gcn + Z_ae from a trained checkpoint, as float32.

        Raises:
            ShapeMismatchError: If checkpoint, dataset and graph disagree on sizes
        """
        CheckpointManager.check_compatible(checkpoint, dataset)
        if graph.n_users != dataset.n_users:
            raise ShapeMismatchError("user graph does not match dataset users",
                                     expected=(dataset.n_users,), actual=(graph.n_users,))
        model = checkpoint.meta.get("model", {})
        hops = int(model.get("hops", checkpoint.config_dict.get("hops", 2)))
        activation = Activation(model.get("activation", checkpoint.config_dict.get("activation", "tanh")))
        z_final = EncoderEngine.final_embedding(graph.normalized, dataset.x_train, checkpoint.params,
                                                hops, activation)
        logger.info(f"Embedded {z_final.shape[0]} users into {z_final.shape[1]} dimensions")
        return z_final.astype(np.float32)

    @staticmethod
    def form_groups(
        z_final: np.ndarray,
        k: int = DEFAULT_K,
        seed: int = 0,
        max_iter: int = 100,
        tol: float = 1e-6,
        max_group_size: Optional[int] = None
    ) -> GroupAssignment:
        """
        Partition users into k groups by K-Means on the final embedding.

        With ``max_group_size`` set, oversized groups are split by K-Means on
        their own members until every group fits, which can add groups.

        Raises:
            UsageError: If k is outside [2, |U|] or max_group_size < 1
        """
        points = np.asarray(z_final, dtype=np.float64)
        n_users = points.shape[0]
        if not 2 <= k <= n_users:
            raise UsageError(f"K must be in [2, {n_users}], got {k}")
        if max_group_size is not None and max_group_size < 1:
            raise UsageError(f"max_group_size must be >= 1, got {max_group_size}")

        started = time.perf_counter()
        result = ClusterEngine.kmeans(points, k, seed, max_iter, tol)
        membership = result.labels.astype(np.int64)
        if max_group_size is not None:
            membership = FormationEngine.split_oversized(points, membership, max_group_size, seed,
                                                         max_iter, tol)
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        assignment = GroupAssignment(k=k, membership=membership, wall_time_ms=elapsed_ms,
                                     inertia=result.inertia, n_iter=result.n_iter)
        logger.debug(f"Formed {assignment.n_groups} groups for K={k} in {elapsed_ms:.2f} ms")
        return assignment

    @staticmethod
    def split_oversized(points: np.ndarray, membership: np.ndarray, max_size: int, seed: int = 0,
                        max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
        """Split every group larger than max_size into ceil(size / max_size) parts; new ids go last."""
        membership = membership.copy()
        rng = np.random.default_rng(seed)
        while True:
            sizes = np.bincount(membership)
            oversized = np.flatnonzero(sizes > max_size)
            if len(oversized) == 0:
                return membership
            next_id = len(sizes)
            for group in oversized:
                members = np.flatnonzero(membership == group)
                parts = int(np.ceil(len(members) / max_size))
                sub = ClusterEngine.kmeans(points[members], parts, rng, max_iter, tol)
                relabel = np.where(sub.labels == 0, group, next_id + sub.labels - 1)
                membership[members] = relabel
                next_id += parts - 1
            logger.debug(f"Split {len(oversized)} groups above {max_size} members")

    @staticmethod
    def bench_formation(z_final: np.ndarray, k_list: Sequence[int] = DEFAULT_BENCH_K, seed: int = 0,
                        max_iter: int = 100, tol: float = 1e-6) -> BenchResult:
        """
        Time formation alone for every K and fit a linear cost model in K.

        Raises:
            UsageError: If k_list is empty or holds an out-of-range K
        """
        k_list = [int(k) for k in k_list]
        if not k_list:
            raise UsageError("k_list must not be empty")
        n_users = np.asarray(z_final).shape[0]
        bad = [k for k in k_list if not 2 <= k <= n_users]
        if bad:
            raise UsageError(f"K values {bad} are outside [2, {n_users}]")

        rows = []
        for k in k_list:
            assignment = FormationEngine.form_groups(z_final, k, seed, max_iter, tol)
            rows.append({
                "k": k,
                "seconds": assignment.wall_time_ms / 1000.0,
                "inertia": assignment.inertia,
                "iterations": assignment.n_iter,
            })
        frame = pd.DataFrame(rows, columns=["k", "seconds", "inertia", "iterations"])

        if len(set(k_list)) >= 2:
            fit = linregress(frame["k"].to_numpy(dtype=float), frame["seconds"].to_numpy())
            intercept, slope, r_squared = float(fit.intercept), float(fit.slope), float(fit.rvalue ** 2)
        else:
            intercept, slope, r_squared = float(frame["seconds"].mean()), 0.0, 1.0
        logger.info(f"Benchmarked {len(k_list)} K values, time ~ {intercept:.3g} + {slope:.3g}*K "
                    f"(R^2 {r_squared:.3f})")
        return BenchResult(frame=frame, intercept=intercept, slope=slope, r_squared=r_squared)
