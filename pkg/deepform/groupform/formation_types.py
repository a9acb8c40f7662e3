"""
Result types for inference-time group formation.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from deepform.errors import DataError


@dataclass
class GroupAssignment:
    """Every user belongs to exactly one group; group ids are 0..n_groups-1."""
    k: int
    membership: np.ndarray
    wall_time_ms: float = 0.0
    inertia: Optional[float] = None
    n_iter: int = 0
    method: str = "deepform"
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return len(self.membership)

    @property
    def n_groups(self) -> int:
        """Number of non-empty groups; can exceed k after a group size repair."""
        return int(len(np.unique(self.membership)))

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.membership, minlength=self.n_groups)

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.membership == group)

    def groups(self) -> list[np.ndarray]:
        """Member index arrays, one per group id."""
        order = np.argsort(self.membership, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds)

    def to_frame(self, user_ids: Optional[Sequence[str]] = None) -> pd.DataFrame:
        ids = np.arange(self.n_users) if user_ids is None else np.asarray(user_ids, dtype=object)
        return pd.DataFrame({"user_id": ids, "group_id": self.membership.astype(np.int64)})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, user_ids: Sequence[str], method: str = "file") -> 'GroupAssignment':
        """Align a ``user_id,group_id`` table to a user order; group ids are compacted."""
        missing_columns = {"user_id", "group_id"} - set(frame.columns)
        if missing_columns:
            raise DataError(f"group table lacks columns {sorted(missing_columns)}")
        lookup = frame.assign(user_id=frame["user_id"].astype(str)).set_index("user_id")["group_id"]
        missing = [uid for uid in map(str, user_ids) if uid not in lookup.index]
        if missing:
            raise DataError(f"{len(missing)} users have no group, e.g. {missing[:3]}")
        raw = lookup.loc[[str(uid) for uid in user_ids]].to_numpy()
        _, membership = np.unique(raw, return_inverse=True)
        membership = membership.astype(np.int64)
        return cls(k=int(membership.max()) + 1, membership=membership, method=method)


@dataclass
class BenchResult:
    """Formation time per K plus a least-squares fit time ~ a + b*K."""
    frame: pd.DataFrame
    intercept: float
    slope: float
    r_squared: float

    def summary(self) -> Dict[str, float]:
        return {
            "intercept_seconds": self.intercept,
            "slope_seconds_per_k": self.slope,
            "r_squared": self.r_squared,
            "total_seconds": float(self.frame["seconds"].sum()),
        }
