"""
Group recommendation evaluation.

Each group gets one ranked list; the same list is scored against the held-out
items of every member and metrics are averaged over users.
"""

from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from deepform.errors import DataError, UsageError
from deepform.graph.graph_engine import GraphEngine
from deepform.groupform.formation_engine import FormationEngine
from deepform.groupform.formation_types import GroupAssignment
from deepform.grouprec.aggregation import AggregationStrategy, GroupRecommender, rank_items
from deepform.grouprec.preferences import user_knn_preferences
from deepform.models.data.dataset import Dataset

from .metrics import clustering_quality, hr_at_k, ndcg_at_k

logger = logging.getLogger(__name__)

DEFAULT_K_LIST = (5, 10, 20)
DEFAULT_NEGATIVES = 99


class EvaluationMode(Enum):
    """FULL ranks every candidate; SAMPLED ranks test items among sampled negatives."""
    FULL = "full"
    SAMPLED = "sampled"


@dataclass
class MetricsReport:
    """Per-k NDCG and HR averaged over evaluated users."""
    k_list: tuple[int, ...]
    ndcg: Dict[int, float]
    hr: Dict[int, float]
    n_groups: int
    users_evaluated: int
    users_excluded: int
    strategy: str
    mode: str = EvaluationMode.FULL.value
    seed: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "k": list(self.k_list),
            "ndcg": [self.ndcg[k] for k in self.k_list],
            "hr": [self.hr[k] for k in self.k_list],
        })

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {
            "strategy": self.strategy,
            "mode": self.mode,
            "seed": self.seed,
            "groups": self.n_groups,
            "users_evaluated": self.users_evaluated,
            "users_excluded": self.users_excluded,
        }
        for k in self.k_list:
            result[f"ndcg@{k}"] = self.ndcg[k]
            result[f"hr@{k}"] = self.hr[k]
        result.update(self.extra)
        return result

    def to_text(self) -> str:
        lines = [
            f"strategy {self.strategy}, mode {self.mode}, {self.n_groups} groups, "
            f"{self.users_evaluated} users evaluated ({self.users_excluded} without test items)",
            f"{'k':>4}  {'NDCG':>8}  {'HR':>8}",
        ]
        for k in self.k_list:
            lines.append(f"{k:>4}  {self.ndcg[k]:>8.4f}  {self.hr[k]:>8.4f}")
        return "\n".join(lines)


def default_preferences(dataset: Dataset, top_k: int = 50) -> np.ndarray:
    adjacency = GraphEngine.build_adjacency(dataset.x_train, top_k)
    return user_knn_preferences(dataset.x_train, adjacency)


def _sampled_ranking(relevant: np.ndarray, candidates: np.ndarray, score_of: np.ndarray,
                     n_negatives: int, rng: np.random.Generator) -> np.ndarray:
    pool_negatives = np.setdiff1d(candidates, relevant, assume_unique=True)
    count = min(n_negatives, len(pool_negatives))
    negatives = rng.choice(pool_negatives, size=count, replace=False) if count else pool_negatives[:0]
    pool = np.concatenate([np.intersect1d(relevant, candidates), negatives])
    order = np.lexsort((pool, -score_of[pool]))
    return pool[order]


def evaluate_pipeline(
    assignment: GroupAssignment,
    strategy: AggregationStrategy,
    dataset: Dataset,
    k_list: Sequence[int] = DEFAULT_K_LIST,
    preferences=None,
    mode: EvaluationMode = EvaluationMode.FULL,
    n_negatives: int = DEFAULT_NEGATIVES,
    seed: int = 0
) -> MetricsReport:
    """
    Raises:
        DataError: If the assignment does not cover the dataset users
        UsageError: If k_list is empty or holds a non-positive k
    """
    k_list = tuple(int(k) for k in k_list)
    if not k_list or min(k_list) < 1:
        raise UsageError(f"k_list must hold positive integers, got {k_list}")
    if assignment.n_users != dataset.n_users:
        raise DataError(f"assignment covers {assignment.n_users} users, dataset has {dataset.n_users}")
    if preferences is None:
        preferences = default_preferences(dataset)

    recommender = GroupRecommender(preferences, dataset.x_train, strategy)
    ndcg_sum = {k: 0.0 for k in k_list}
    hr_sum = {k: 0.0 for k in k_list}
    evaluated = 0
    excluded = 0
    n_groups = 0
    score_of = np.full(dataset.n_items, -np.inf)

    for group_id, members in enumerate(assignment.groups()):
        if len(members) == 0:
            continue
        n_groups += 1
        profile = recommender.profile(group_id, members)
        score_of[:] = -np.inf
        score_of[profile.candidates] = profile.scores[strategy]
        ranked_items, _ = rank_items(profile.candidates, profile.scores[strategy])
        for user in members:
            relevant = dataset.test_items(int(user))
            if len(relevant) == 0:
                excluded += 1
                continue
            if mode is EvaluationMode.SAMPLED:
                rng = np.random.default_rng([seed, int(user)])
                items = _sampled_ranking(relevant, profile.candidates, score_of, n_negatives, rng)
            else:
                items = ranked_items
            for k in k_list:
                ndcg_sum[k] += ndcg_at_k(items, relevant, k)
                hr_sum[k] += hr_at_k(items, relevant, k)
            evaluated += 1

    if excluded:
        logger.warning(f"{excluded} users have no test items and were excluded")
    denominator = max(evaluated, 1)
    report = MetricsReport(
        k_list=k_list,
        ndcg={k: ndcg_sum[k] / denominator for k in k_list},
        hr={k: hr_sum[k] / denominator for k in k_list},
        n_groups=n_groups,
        users_evaluated=evaluated,
        users_excluded=excluded,
        strategy=strategy.value,
        mode=mode.value,
        seed=seed,
    )
    logger.info(f"Evaluated {evaluated} users in {n_groups} groups: " +
                ", ".join(f"HR@{k}={report.hr[k]:.4f}" for k in k_list))
    return report


def sweep_k(
    z_final: np.ndarray,
    k_values: Sequence[int],
    dataset: Dataset,
    strategy: AggregationStrategy = AggregationStrategy.AVG,
    k_list: Sequence[int] = DEFAULT_K_LIST,
    preferences=None,
    seed: int = 0,
    truth: Optional[np.ndarray] = None
) -> pd.DataFrame:
    """
    Accuracy as a function of the number of groups, all from one embedding.

    With ``truth`` labels the ARI and NMI of each grouping are added.
    """
    if preferences is None:
        preferences = default_preferences(dataset)
    rows = []
    for k in k_values:
        assignment = FormationEngine.form_groups(z_final, int(k), seed)
        report = evaluate_pipeline(assignment, strategy, dataset, k_list, preferences, seed=seed)
        row: Dict[str, Any] = {"groups": int(k), "formation_ms": assignment.wall_time_ms}
        for top in report.k_list:
            row[f"ndcg@{top}"] = report.ndcg[top]
            row[f"hr@{top}"] = report.hr[top]
        if truth is not None:
            row["ari"], row["nmi"] = clustering_quality(assignment.membership, truth)
        rows.append(row)
    return pd.DataFrame(rows)
