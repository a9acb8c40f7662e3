"""
Group preference aggregation and ranked group lists.

Member preferences come from a |U| x |I| matrix (observed ratings or
neighbourhood predictions); a missing preference counts as 0.
"""

from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.stats import rankdata

from deepform.errors import DataError, UsageError
from deepform.groupform.formation_types import GroupAssignment

logger = logging.getLogger(__name__)

RANKING_COLUMNS = ["group_id", "rank", "item_id", "score"]


class AggregationStrategy(Enum):
    """Rules turning member preferences into one group score per item."""
    AVG = "avg"
    BORDA = "bc"
    LEAST_MISERY = "lm"

    @staticmethod
    def from_name(name: str) -> 'AggregationStrategy':
        aliases = {"avg": "avg", "average": "avg", "bc": "bc", "borda": "bc",
                   "lm": "lm", "least_misery": "lm"}
        key = aliases.get(str(name).strip().lower())
        if key is None:
            raise UsageError(f"Unknown aggregation strategy {name!r}; choose avg, bc or lm")
        return AggregationStrategy(key)


@dataclass
class GroupProfile:
    """Members of one group, its candidate items and the group scores per strategy."""
    group_id: int
    members: np.ndarray
    candidates: np.ndarray
    scores: Dict[AggregationStrategy, np.ndarray] = field(default_factory=dict)


@dataclass
class RankedList:
    """Candidate items best first; ties resolved by ascending item index."""
    group_id: int
    items: np.ndarray
    scores: np.ndarray

    def top(self, k: int) -> np.ndarray:
        return self.items[:k]


def _member_block(members: np.ndarray, preferences, candidates: np.ndarray) -> np.ndarray:
    """Dense members x candidates preference block, zeros where missing."""
    members = np.asarray(members, dtype=np.int64)
    if len(members) == 0:
        raise DataError("cannot aggregate an empty group")
    if sp.issparse(preferences):
        return sp.csr_matrix(preferences)[members][:, candidates].toarray().astype(np.float64)
    return np.asarray(preferences, dtype=np.float64)[np.ix_(members, candidates)]


def candidate_items(members: np.ndarray, x_train: sp.csr_matrix) -> np.ndarray:
    """Items absent from every member's training profile, ascending."""
    x_train = sp.csr_matrix(x_train)
    consumed = np.unique(x_train[np.asarray(members, dtype=np.int64)].indices)
    return np.setdiff1d(np.arange(x_train.shape[1]), consumed, assume_unique=True)


def aggregate_avg(members: np.ndarray, preferences, candidates: np.ndarray) -> np.ndarray:
    """Mean member preference per candidate."""
    return _member_block(members, preferences, candidates).mean(axis=0)


def aggregate_borda(members: np.ndarray, preferences, candidates: np.ndarray) -> np.ndarray:
    """
    Summed Borda points: out of m candidates a member's favourite gets m - 1
    points and the least liked 0; tied items share the mean of their points.
    """
    block = _member_block(members, preferences, candidates)
    if block.shape[1] == 0:
        return np.zeros(0)
    points = rankdata(block, method="average", axis=1) - 1.0
    return points.sum(axis=0)


def aggregate_least_misery(members: np.ndarray, preferences, candidates: np.ndarray) -> np.ndarray:
    """Lowest member preference per candidate."""
    block = _member_block(members, preferences, candidates)
    if block.shape[1] == 0:
        return np.zeros(0)
    return block.min(axis=0)


_AGGREGATORS = {
    AggregationStrategy.AVG: aggregate_avg,
    AggregationStrategy.BORDA: aggregate_borda,
    AggregationStrategy.LEAST_MISERY: aggregate_least_misery,
}


def aggregate(strategy: AggregationStrategy, members: np.ndarray, preferences,
              candidates: np.ndarray) -> np.ndarray:
    return _AGGREGATORS[strategy](members, preferences, candidates)


def rank_items(candidates: np.ndarray, scores: np.ndarray, top_k: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Order by score descending, then item index ascending."""
    candidates = np.asarray(candidates)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((candidates, -scores))
    if top_k is not None:
        order = order[:top_k]
    return candidates[order], scores[order]


class GroupRecommender:
    """
    Builds one ranked list per group with a single aggregation strategy.
    """

    def __init__(self, preferences, x_train: sp.csr_matrix,
                 strategy: AggregationStrategy = AggregationStrategy.AVG):
        self.preferences = preferences
        self.x_train = sp.csr_matrix(x_train)
        self.strategy = strategy

    def profile(self, group_id: int, members: np.ndarray) -> GroupProfile:
        candidates = candidate_items(members, self.x_train)
        scores = aggregate(self.strategy, members, self.preferences, candidates)
        return GroupProfile(group_id=group_id, members=np.asarray(members), candidates=candidates,
                            scores={self.strategy: scores})

    def ranked_list(self, group_id: int, members: np.ndarray, top_k: Optional[int] = None) -> RankedList:
        profile = self.profile(group_id, members)
        items, scores = rank_items(profile.candidates, profile.scores[self.strategy], top_k)
        return RankedList(group_id=group_id, items=items, scores=scores)

    def recommend(self, assignment: GroupAssignment, top_k: Optional[int] = None) -> list[RankedList]:
        lists = [self.ranked_list(group_id, members, top_k)
                 for group_id, members in enumerate(assignment.groups()) if len(members)]
        logger.info(f"Built {len(lists)} group lists with strategy {self.strategy.value}")
        return lists


def recommendations_frame(lists: Sequence[RankedList], item_ids: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """``group_id,rank,item_id,score`` rows, rank starting at 1."""
    frames = []
    for ranked in lists:
        items = ranked.items if item_ids is None else np.asarray(item_ids, dtype=object)[ranked.items]
        frames.append(pd.DataFrame({
            "group_id": ranked.group_id,
            "rank": np.arange(1, len(ranked.items) + 1),
            "item_id": items,
            "score": ranked.scores,
        }))
    if not frames:
        return pd.DataFrame(columns=RANKING_COLUMNS)
    return pd.concat(frames, ignore_index=True)[RANKING_COLUMNS]


def recommend_for_groups(assignment: GroupAssignment, preferences, x_train: sp.csr_matrix,
                         strategy: AggregationStrategy = AggregationStrategy.AVG,
                         top_k: Optional[int] = None) -> list[RankedList]:
    return GroupRecommender(preferences, x_train, strategy).recommend(assignment, top_k)
