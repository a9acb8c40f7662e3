"""
Dataset model: indexed users and items, the normalized training matrix and
the held-out test items.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

INTERACTION_COLUMNS = ["user_id", "item_id", "rating", "timestamp"]


@dataclass(frozen=True)
class InteractionRecord:
    """One parsed interaction line."""
    user_id: str
    item_id: str
    rating: float
    timestamp: Optional[int] = None

    @classmethod
    def from_row(cls, row: Any) -> 'InteractionRecord':
        timestamp = getattr(row, "timestamp", None)
        return cls(
            user_id=str(row.user_id),
            item_id=str(row.item_id),
            rating=float(row.rating),
            timestamp=None if timestamp is None or pd.isna(timestamp) else int(timestamp),
        )


def to_records(frame: pd.DataFrame) -> List[InteractionRecord]:
    """Materialise an interaction frame as a list of records."""
    return [InteractionRecord.from_row(row) for row in frame.itertuples(index=False)]


def records_frame(records: List[InteractionRecord]) -> pd.DataFrame:
    """Inverse of to_records, used mainly by tests and the generator."""
    frame = pd.DataFrame(
        [(r.user_id, r.item_id, r.rating, r.timestamp) for r in records],
        columns=INTERACTION_COLUMNS,
    )
    frame["rating"] = frame["rating"].astype(float)
    frame["timestamp"] = frame["timestamp"].astype("Int64")
    return frame


@dataclass(frozen=True)
class DatasetStats:
    """Counts reported after ingestion."""
    n_users: int
    n_items: int
    n_interactions: int
    n_train: int
    n_test: int

    def to_dict(self) -> Dict[str, int]:
        return {
            'users': self.n_users,
            'items': self.n_items,
            'interactions': self.n_interactions,
            'train': self.n_train,
            'test': self.n_test,
        }


@dataclass
class Dataset:
    """
    Indexed interaction data.

    ``x_train`` is a CSR matrix of shape (|U|, |I|) with sorted column indices;
    ``x_test`` holds the held-out interactions in the same layout. Users are
    indexed 0..|U|-1 in ``user_ids`` order and items likewise.
    """
    user_ids: np.ndarray
    item_ids: np.ndarray
    x_train: sp.csr_matrix
    x_test: sp.csr_matrix
    normalized: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.x_train = sp.csr_matrix(self.x_train)
        self.x_test = sp.csr_matrix(self.x_test)
        self.x_train.sort_indices()
        self.x_test.sort_indices()

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def stats(self) -> DatasetStats:
        return DatasetStats(
            n_users=self.n_users,
            n_items=self.n_items,
            n_interactions=int(self.x_train.nnz + self.x_test.nnz),
            n_train=int(self.x_train.nnz),
            n_test=int(self.x_test.nnz),
        )

    def train_items(self, user: int) -> np.ndarray:
        """Item indices in the user's training profile."""
        return self.x_train.indices[self.x_train.indptr[user]:self.x_train.indptr[user + 1]]

    def test_items(self, user: int) -> np.ndarray:
        """Held-out item indices of a user (possibly empty)."""
        return self.x_test.indices[self.x_test.indptr[user]:self.x_test.indptr[user + 1]]

    def iter_test_sets(self) -> Iterator[tuple[int, np.ndarray]]:
        for user in range(self.n_users):
            yield user, self.test_items(user)

    def users_with_test(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.x_test.indptr) > 0)

    def user_index(self) -> Dict[str, int]:
        return {str(uid): i for i, uid in enumerate(self.user_ids)}

    def item_index(self) -> Dict[str, int]:
        return {str(iid): i for i, iid in enumerate(self.item_ids)}

    def __str__(self):
        s = self.stats
        return f"Dataset(users={s.n_users}, items={s.n_items}, train={s.n_train}, test={s.n_test})"
