"""
Member preference matrices used for aggregation.

Held-out items are never in a user's training profile, so observed ratings
alone score every candidate 0. ``USER_KNN`` fills unrated cells with the
similarity-weighted mean rating of the user's graph neighbours.
"""

from enum import Enum
import logging

import numpy as np
import scipy.sparse as sp

from deepform.errors import UsageError

logger = logging.getLogger(__name__)


class PreferenceSource(Enum):
    OBSERVED = "observed"
    USER_KNN = "user_knn"

    @staticmethod
    def from_name(name: str) -> 'PreferenceSource':
        try:
            return PreferenceSource(str(name).strip().lower())
        except ValueError as e:
            raise UsageError(f"Unknown preference source {name!r}; choose observed or user_knn") from e


def observed_preferences(x_train: sp.spmatrix) -> sp.csr_matrix:
    return sp.csr_matrix(x_train, dtype=np.float64)


def user_knn_preferences(x_train: sp.spmatrix, adjacency: sp.spmatrix) -> np.ndarray:
    """
    Dense |U| x |I| preferences: observed ratings where present, otherwise
    sum_v a_uv x_vi / sum_v a_uv over the user's neighbours (0 without neighbours).
    """
    x = sp.csr_matrix(x_train, dtype=np.float64)
    a = sp.csr_matrix(adjacency, dtype=np.float64)
    weight = np.asarray(a.sum(axis=1)).ravel()
    predicted = np.asarray((a @ x).todense())
    predicted = np.divide(predicted, weight[:, None], out=np.zeros_like(predicted),
                          where=weight[:, None] > 0)
    observed = x.toarray()
    rated = np.zeros(x.shape, dtype=bool)
    rows = np.repeat(np.arange(x.shape[0]), np.diff(x.indptr))
    rated[rows, x.indices] = True
    preferences = np.where(rated, observed, predicted)
    logger.debug(f"User-kNN preferences filled {int((~rated & (predicted > 0)).sum())} cells")
    return preferences


def build_preferences(source: PreferenceSource, x_train: sp.spmatrix, adjacency: sp.spmatrix | None = None):
    if source is PreferenceSource.OBSERVED:
        return observed_preferences(x_train)
    if adjacency is None:
        raise UsageError("user_knn preferences need the user graph")
    return user_knn_preferences(x_train, adjacency)
