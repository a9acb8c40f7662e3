"""
Planted-structure interaction generators for acceptance runs.

Users and items are both split over the leaves of a balanced tree given by
``branching``; ``(3,)`` gives three flat blocks, ``(3, 2, 2)`` a three-level
hierarchy with 3, 6 and 12 groups. A user interacts with an item with a
probability that decays with the tree distance between their leaves.
"""

from dataclasses import dataclass
import logging
from typing import Sequence

import numpy as np
import pandas as pd

from deepform.errors import UsageError

logger = logging.getLogger(__name__)

BASE_TIMESTAMP = 1_600_000_000


@dataclass
class PlantedData:
    """Generated interactions and the ground-truth labels per level."""
    interactions: pd.DataFrame
    labels: pd.DataFrame

    def level_labels(self, level: int) -> np.ndarray:
        """Labels of one level (1 = coarsest), ordered like labels.user_id."""
        return self.labels[f"level_{level}"].to_numpy()


def leaf_paths(n_leaves_of: Sequence[int], leaf: np.ndarray) -> list[np.ndarray]:
    """Ancestor index at every level for each leaf index (coarsest first)."""
    paths = []
    for level in range(len(n_leaves_of)):
        below = int(np.prod(n_leaves_of[level + 1:])) if level + 1 < len(n_leaves_of) else 1
        paths.append(leaf // below)
    return paths


def generate_planted(
    n_users: int = 300,
    branching: Sequence[int] = (3,),
    n_items: int = 60,
    noise: float = 0.1,
    seed: int = 0,
    density: float = 0.5,
    decay: float = 0.5,
    min_interactions: int = 10
) -> PlantedData:
    """
    Generate a planted-block interaction log.

    Args:
        n_users: Number of users
        branching: Children per level, coarsest first
        n_items: Number of items, split evenly over the leaves
        noise: Relative interaction probability across top-level blocks
        seed: Random seed
        density: Interaction probability inside a user's own leaf
        decay: Probability factor per level of tree distance inside a top block
        min_interactions: Each user is topped up to at least this many items

    Returns:
        PlantedData with interactions (user_id, item_id, rating, timestamp)
        and labels (user_id, level_1..level_n)
    """
    branching = tuple(int(b) for b in branching)
    if not branching or any(b < 1 for b in branching):
        raise UsageError(f"branching must be positive integers, got {branching}")
    n_leaves = int(np.prod(branching))
    if n_users < n_leaves or n_items < n_leaves:
        raise UsageError(f"need at least {n_leaves} users and items for branching {branching}")
    if not 0 <= noise <= 1:
        raise UsageError(f"noise must be in [0, 1], got {noise}")
    if min_interactions > n_items:
        raise UsageError(f"min_interactions {min_interactions} exceeds n_items {n_items}")

    rng = np.random.default_rng(seed)
    user_leaf = np.arange(n_users) * n_leaves // n_users
    item_leaf = np.arange(n_items) * n_leaves // n_items
    user_paths = leaf_paths(branching, user_leaf)
    item_paths = leaf_paths(branching, item_leaf)

    # depth of the deepest shared ancestor: len(branching) means same leaf, 0 means none
    shared = np.zeros((n_users, n_items), dtype=int)
    for level in range(len(branching)):
        same = user_paths[level][:, None] == item_paths[level][None, :]
        shared = np.where(same & (shared == level), level + 1, shared)
    depth = len(branching)
    affinity = np.where(shared > 0, density * decay ** (depth - shared), noise * density)

    interacted = rng.random((n_users, n_items)) < affinity
    for user in range(n_users):
        missing = min_interactions - int(interacted[user].sum())
        if missing > 0:
            candidates = np.flatnonzero(~interacted[user])
            order = np.lexsort((rng.random(len(candidates)), -affinity[user, candidates]))
            interacted[user, candidates[order[:missing]]] = True

    users, items = np.nonzero(interacted)
    level_of = shared[users, items]
    ratings = np.where(
        level_of == depth, rng.integers(4, 6, size=len(users)),
        np.where(level_of > 0, rng.integers(3, 5, size=len(users)), rng.integers(1, 3, size=len(users)))
    ).astype(float)
    timestamps = BASE_TIMESTAMP + rng.permutation(len(users)).astype(np.int64)

    width_u = len(str(n_users))
    width_i = len(str(n_items))
    user_ids = np.array([f"u{u:0{width_u}d}" for u in range(n_users)], dtype=object)
    item_ids = np.array([f"i{i:0{width_i}d}" for i in range(n_items)], dtype=object)

    interactions = pd.DataFrame({
        "user_id": user_ids[users],
        "item_id": item_ids[items],
        "rating": ratings,
        "timestamp": pd.array(timestamps, dtype="Int64"),
    })
    labels = pd.DataFrame({"user_id": user_ids})
    for level, path in enumerate(user_paths, start=1):
        labels[f"level_{level}"] = path
    logger.info(
        f"Generated {len(interactions)} interactions for {n_users} users, {n_items} items, "
        f"branching {branching}, noise {noise}"
    )
    return PlantedData(interactions=interactions, labels=labels)


def labels_for(dataset_user_ids: Sequence[str], labels: pd.DataFrame, level: int = 1) -> np.ndarray:
    """Align a label table to the user order of a Dataset."""
    lookup = labels.set_index("user_id")[f"level_{level}"]
    return lookup.loc[list(dataset_user_ids)].to_numpy()
