import numpy as np
import pytest
import scipy.sparse as sp

from deepform.errors import UsageError
from deepform.grouprec.preferences import PreferenceSource, build_preferences


@pytest.fixture
def adjacency():
    """a and b are neighbours with weight 0.5, d neighbours b with weight 1, c is isolated."""
    return sp.csr_matrix(np.array([
        [0.0, 0.5, 0.0, 0.0],
        [0.5, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ]))


class TestPreferences:

    def test_observed_is_training_matrix(self, toy_dataset):
        prefs = build_preferences(PreferenceSource.OBSERVED, toy_dataset.x_train)
        np.testing.assert_array_equal(prefs.toarray(), toy_dataset.x_train.toarray())

    def test_user_knn_fills_from_neighbours(self, toy_dataset, adjacency):
        prefs = build_preferences(PreferenceSource.USER_KNN, toy_dataset.x_train, adjacency)
        np.testing.assert_allclose(prefs[0], [1.0, 1.0, 0.0, 0.0, 0.0])
        # b averages a and d with weights 0.5 and 1
        np.testing.assert_allclose(prefs[1], [1 / 3, 1.0, 2 / 3, 0.0, 0.0])
        np.testing.assert_allclose(prefs[2], [0.6, 0.8, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(prefs[3], [0.0, 1.0, 1.0, 0.0, 0.0])

    def test_user_knn_needs_graph(self, toy_dataset):
        with pytest.raises(UsageError):
            build_preferences(PreferenceSource.USER_KNN, toy_dataset.x_train)

    def test_source_names(self):
        assert PreferenceSource.from_name("USER_KNN") is PreferenceSource.USER_KNN
        with pytest.raises(UsageError):
            PreferenceSource.from_name("popularity")
