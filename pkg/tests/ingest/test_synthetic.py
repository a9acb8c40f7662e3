import numpy as np
import pandas as pd
import pytest

from deepform.errors import UsageError
from deepform.ingest.synthetic import generate_planted, labels_for, leaf_paths


def block_of(identifier: str, count: int, n_blocks: int) -> int:
    return int(identifier[1:]) * n_blocks // count


class TestGeneratePlanted:

    def test_noise_free_blocks_are_separable(self, planted):
        frame = planted.interactions
        users = frame["user_id"].map(lambda u: block_of(u, 30, 3))
        items = frame["item_id"].map(lambda i: block_of(i, 30, 3))
        assert (users == items).all()

    def test_every_user_reaches_minimum(self, planted):
        counts = planted.interactions["user_id"].value_counts()
        assert len(counts) == 30
        assert counts.min() >= 5

    def test_labels(self, planted):
        assert list(planted.labels.columns) == ["user_id", "level_1"]
        np.testing.assert_array_equal(planted.level_labels(1), np.arange(30) * 3 // 30)

    def test_same_seed_same_data(self):
        first = generate_planted(n_users=20, n_items=12, seed=4, min_interactions=3)
        second = generate_planted(n_users=20, n_items=12, seed=4, min_interactions=3)
        pd.testing.assert_frame_equal(first.interactions, second.interactions)

    def test_noise_adds_cross_block_interactions(self):
        data = generate_planted(n_users=60, n_items=30, noise=1.0, seed=0, min_interactions=3)
        frame = data.interactions
        users = frame["user_id"].map(lambda u: block_of(u, 60, 3))
        items = frame["item_id"].map(lambda i: block_of(i, 30, 3))
        assert (users != items).any()

    def test_hierarchical_labels(self):
        data = generate_planted(n_users=24, branching=(3, 2), n_items=24, seed=1, min_interactions=3)
        leaf = np.arange(24) * 6 // 24
        np.testing.assert_array_equal(data.level_labels(2), leaf)
        np.testing.assert_array_equal(data.level_labels(1), leaf // 2)

    def test_ratings_in_range(self, planted):
        assert planted.interactions["rating"].between(1, 5).all()

    @pytest.mark.parametrize("kwargs", [
        {"branching": (0,)},
        {"n_users": 2, "branching": (3,)},
        {"noise": 1.5},
        {"n_items": 6, "min_interactions": 10},
    ])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(UsageError):
            generate_planted(**kwargs)


class TestLabelHelpers:

    def test_leaf_paths(self):
        paths = leaf_paths((2, 3), np.arange(6))
        np.testing.assert_array_equal(paths[0], [0, 0, 0, 1, 1, 1])
        np.testing.assert_array_equal(paths[1], np.arange(6))

    def test_labels_for_follows_dataset_order(self, planted):
        order = ["u29", "u00", "u15"]
        np.testing.assert_array_equal(labels_for(order, planted.labels), [2, 0, 1])
