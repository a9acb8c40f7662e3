import numpy as np
import pytest
from scipy.stats import chisquare
from sklearn.metrics import adjusted_rand_score

from deepform.cluster import ClusterEngine, ClusterState
from deepform.errors import ConfigError, UsageError


@pytest.fixture
def blobs(rng):
    centres = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    truth = np.repeat(np.arange(3), 20)
    points = centres[truth] + rng.normal(scale=0.3, size=(60, 2))
    return points, truth


class TestSampleK:

    def test_range(self, rng):
        draws = {ClusterEngine.sample_k(5, rng) for _ in range(300)}
        assert draws == {2, 3, 4, 5}

    def test_draws_are_uniform(self, rng):
        draws = [ClusterEngine.sample_k(7, rng) for _ in range(6000)]
        counts = np.bincount(draws, minlength=8)[2:]
        assert chisquare(counts).pvalue > 0.001

    def test_rejects_small_k_max(self, rng):
        with pytest.raises(ConfigError):
            ClusterEngine.sample_k(1, rng)


class TestKMeans:

    def test_recovers_separated_blobs(self, blobs):
        points, truth = blobs
        result = ClusterEngine.kmeans(points, 3, seed=1)
        # labels are a permutation of the truth
        pairs = set(zip(truth.tolist(), result.labels.tolist()))
        assert len(pairs) == 3
        assert result.sizes.tolist() == [20, 20, 20]

    def test_inertia_never_increases(self, blobs):
        points, _ = blobs
        history = ClusterEngine.kmeans(points, 5, seed=3).inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_seed_is_deterministic(self, blobs):
        points, _ = blobs
        first = ClusterEngine.kmeans(points, 4, seed=7)
        second = ClusterEngine.kmeans(points, 4, seed=7)
        np.testing.assert_array_equal(first.labels, second.labels)
        np.testing.assert_allclose(first.centroids, second.centroids)

    def test_row_order_does_not_change_the_partition(self, blobs, rng):
        points, _ = blobs
        order = rng.permutation(len(points))
        result = ClusterEngine.kmeans(points, 3, seed=1)
        shuffled = ClusterEngine.kmeans(points[order], 3, seed=1)

        assert shuffled.inertia == pytest.approx(result.inertia)
        assert adjusted_rand_score(result.labels[order], shuffled.labels) == pytest.approx(1.0)

    def test_one_cluster_per_point(self, blobs):
        points, _ = blobs
        result = ClusterEngine.kmeans(points[:6], 6, seed=0)
        assert result.inertia == pytest.approx(0.0)
        assert sorted(result.labels.tolist()) == list(range(6))

    def test_duplicate_points_leave_no_empty_cluster(self):
        points = np.ones((5, 3))
        result = ClusterEngine.kmeans(points, 3, seed=0)
        assert np.all(result.sizes >= 1)

    @pytest.mark.parametrize("k", [0, 61])
    def test_k_out_of_range(self, blobs, k):
        points, _ = blobs
        with pytest.raises(UsageError):
            ClusterEngine.kmeans(points, k)

    def test_state_copies_solution(self, blobs):
        points, _ = blobs
        result = ClusterEngine.kmeans(points, 3, seed=0)
        state = ClusterState.from_kmeans(result)
        state.centroids[0] += 1.0
        assert state.k == 3
        assert not np.allclose(state.centroids, result.centroids)


class TestClusterLoss:

    def test_distributions_are_row_stochastic(self, rng):
        points, centroids = rng.normal(size=(7, 3)), rng.normal(size=(4, 3))
        q = ClusterEngine.soft_assign(points, centroids)
        p = ClusterEngine.target_distribution(q)
        np.testing.assert_allclose(q.sum(axis=1), 1.0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        assert np.all(q > 0)

    def test_kl_is_zero_on_itself_and_positive_otherwise(self, rng):
        q = ClusterEngine.soft_assign(rng.normal(size=(7, 3)), rng.normal(size=(4, 3)))
        p = ClusterEngine.target_distribution(q)
        assert ClusterEngine.cluster_loss(q, q) == pytest.approx(0.0, abs=1e-12)
        assert ClusterEngine.cluster_loss(p, q) > 0

    def test_kernel_value(self):
        kappa = ClusterEngine.kernel(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0], [0.0, 0.0]]))
        np.testing.assert_allclose(kappa, [[1.0 / 26.0, 1.0]])

    def test_gradient_matches_central_differences(self, rng):
        points, centroids = rng.normal(size=(6, 3)), rng.normal(size=(3, 3))
        p = ClusterEngine.target_distribution(ClusterEngine.soft_assign(points, centroids))
        _, d_points, d_centroids = ClusterEngine.cluster_loss_grad(points, centroids, p)

        def loss(pts, cts):
            return ClusterEngine.cluster_loss(p, ClusterEngine.soft_assign(pts, cts))

        step = 1e-6
        for array, grad in ((points, d_points), (centroids, d_centroids)):
            for index in np.ndindex(array.shape):
                original = array[index]
                array[index] = original + step
                upper = loss(points, centroids)
                array[index] = original - step
                lower = loss(points, centroids)
                array[index] = original
                assert grad[index] == pytest.approx((upper - lower) / (2 * step), abs=1e-6)

    def test_soft_assignment_example(self):
        q = ClusterEngine.soft_assign(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]))
        np.testing.assert_allclose(q, [[2 / 3, 1 / 3]])

    def test_target_distribution_example(self):
        q = np.array([[0.8, 0.2], [0.4, 0.6]])
        first = np.array([0.64 / 1.2, 0.04 / 0.8])
        second = np.array([0.16 / 1.2, 0.36 / 0.8])
        expected = np.vstack([first / first.sum(), second / second.sum()])
        np.testing.assert_allclose(ClusterEngine.target_distribution(q), expected)

    def test_one_hot_targets_are_fixed_points(self):
        q = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(ClusterEngine.target_distribution(q), q)
