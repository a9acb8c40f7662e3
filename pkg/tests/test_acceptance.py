import os
from pathlib import Path
import time

import numpy as np
import pytest
from scipy.stats import rankdata

from deepform.cluster import ClusterEngine
from deepform.contrastive import ContrastiveEngine
from deepform.evaluation.metrics import clustering_quality, hr_at_k, ndcg_at_k
from deepform.evaluation.pipeline import evaluate_pipeline
from deepform.graph.graph_engine import GraphEngine
from deepform.groupform.formation_engine import DEFAULT_BENCH_K, FormationEngine
from deepform.grouprec.aggregation import (
    AggregationStrategy,
    aggregate_avg,
    aggregate_borda,
    aggregate_least_misery,
)
from deepform.grouprec.baselines import baseline_kmeans_groups
from deepform.grouprec.gmm import DiagonalGMM
from deepform.ingest.ingest_engine import IngestEngine
from deepform.ingest.synthetic import generate_planted, labels_for
from deepform.models.state.config import NceDenominator, TrainConfig
from deepform.training.grad_check import grad_check, random_instance
from deepform.training.trainer import Trainer

ORACLE_SEEDS = range(25)
BABY_ENV_VAR = "DEEPFORM_BABY_TSV"


def oracle_soft_assign(points, centroids):
    q = np.zeros((len(points), len(centroids)))
    for i, z in enumerate(points):
        for j, mu in enumerate(centroids):
            q[i, j] = 1.0 / (1.0 + np.sum((z - mu) ** 2))
        q[i] /= q[i].sum()
    return q


def oracle_target(q):
    n, k = q.shape
    p = np.zeros_like(q)
    for i in range(n):
        for j in range(k):
            p[i, j] = q[i, j] ** 2 / sum(q[m, j] for m in range(n))
        p[i] /= p[i].sum()
    return p


def oracle_kl(p, q):
    return sum(p[i, j] * np.log(p[i, j] / q[i, j])
               for i in range(p.shape[0]) for j in range(p.shape[1]) if p[i, j] > 0)


def oracle_dcg(ranked, relevant, k):
    return sum(1.0 / np.log2(position + 2) for position, item in enumerate(ranked[:k]) if item in relevant)


class TestFormulaOracles:
    """Vectorized formulas against element-by-element evaluation."""

    @pytest.mark.parametrize("seed", ORACLE_SEEDS)
    def test_cluster_distributions(self, seed):
        rng = np.random.default_rng(seed)
        points = rng.normal(size=(rng.integers(3, 9), 3))
        centroids = rng.normal(size=(rng.integers(2, 5), 3))

        q = ClusterEngine.soft_assign(points, centroids)
        p = ClusterEngine.target_distribution(q)
        np.testing.assert_allclose(q, oracle_soft_assign(points, centroids), atol=1e-6)
        np.testing.assert_allclose(p, oracle_target(q), atol=1e-6)
        assert ClusterEngine.cluster_loss(p, q) == pytest.approx(oracle_kl(p, q), abs=1e-6)

    @pytest.mark.parametrize("seed", ORACLE_SEEDS)
    def test_triplet(self, seed):
        rng = np.random.default_rng(seed)
        labels = np.arange(12) % 3
        points = rng.normal(size=(12, 4))
        centroids = rng.normal(size=(3, 4))
        batch = ContrastiveEngine.sample_batch(labels, rng, n_neg=2)

        expected = np.mean([
            max(0.0, np.linalg.norm(points[a] - centroids[c]) - np.linalg.norm(points[n] - centroids[c]) + 0.7)
            for a, c, n in zip(batch.triplet_anchors, batch.triplet_clusters, batch.triplet_negatives)
        ])
        loss, _, _ = ContrastiveEngine.triplet_loss(batch, points, centroids, margin=0.7)
        assert loss == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("seed", ORACLE_SEEDS)
    @pytest.mark.parametrize("denominator", list(NceDenominator))
    def test_infonce(self, seed, denominator):
        rng = np.random.default_rng(seed)
        labels = np.arange(12) % 3
        points = rng.normal(size=(12, 4))
        batch = ContrastiveEngine.sample_batch(labels, rng, n_neg=3)
        tau = 0.5

        terms = []
        for anchor, positive, negatives in zip(batch.nce_anchors, batch.nce_positives, batch.nce_negatives):
            numerator = np.exp(points[anchor] @ points[positive] / tau)
            denom = sum(np.exp(points[anchor] @ points[n] / tau) for n in negatives)
            if denominator is NceDenominator.WITH_POSITIVE:
                denom += numerator
            terms.append(-np.log(numerator / denom))
        loss, _ = ContrastiveEngine.infonce_loss(batch, points, tau, denominator)
        assert loss == pytest.approx(np.mean(terms), abs=1e-6)

    @pytest.mark.parametrize("seed", ORACLE_SEEDS)
    def test_ranking_metrics(self, seed):
        rng = np.random.default_rng(seed)
        ranked = rng.permutation(20)
        relevant = set(rng.choice(20, size=rng.integers(1, 6), replace=False).tolist())
        k = int(rng.integers(1, 21))

        ideal = oracle_dcg(sorted(relevant), relevant, k)
        assert ndcg_at_k(ranked, relevant, k) == pytest.approx(oracle_dcg(ranked, relevant, k) / ideal, abs=1e-6)
        assert hr_at_k(ranked, relevant, k) == float(any(item in relevant for item in ranked[:k]))

    @pytest.mark.parametrize("seed", ORACLE_SEEDS)
    def test_aggregation(self, seed):
        rng = np.random.default_rng(seed)
        # coarse values so Borda ties occur
        preferences = rng.integers(0, 4, size=(8, 10)) / 3.0
        members = rng.choice(8, size=rng.integers(1, 6), replace=False)
        candidates = np.sort(rng.choice(10, size=rng.integers(1, 9), replace=False))
        block = preferences[np.ix_(members, candidates)]

        borda = np.zeros(len(candidates))
        for row in block:
            for j, value in enumerate(row):
                borda[j] += np.sum(row < value) + 0.5 * (np.sum(row == value) - 1)

        np.testing.assert_allclose(aggregate_avg(members, preferences, candidates),
                                   [np.mean(column) for column in block.T], atol=1e-6)
        np.testing.assert_allclose(aggregate_least_misery(members, preferences, candidates),
                                   [np.min(column) for column in block.T], atol=1e-6)
        np.testing.assert_allclose(aggregate_borda(members, preferences, candidates), borda, atol=1e-6)


class TestProperties:
    """Randomized invariants, 1,000 cases in total."""

    def test_distributions_are_row_stochastic(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            points = rng.normal(scale=3.0, size=(15, 4))
            centroids = rng.normal(scale=3.0, size=(rng.integers(2, 7), 4))
            q = ClusterEngine.soft_assign(points, centroids)
            p = ClusterEngine.target_distribution(q)
            np.testing.assert_allclose(q.sum(axis=1), 1.0)
            np.testing.assert_allclose(p.sum(axis=1), 1.0)
            assert np.all(q > 0) and np.all(p > 0)
            assert ClusterEngine.cluster_loss(p, q) >= 0.0

    def test_kmeans_inertia_never_increases(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            points = rng.normal(size=(40, 3))
            history = ClusterEngine.kmeans(points, int(rng.integers(2, 8)), seed=seed).inertia_history
            assert all(b <= a + 1e-9 * max(a, 1.0) for a, b in zip(history, history[1:]))

    def test_em_likelihood_never_decreases(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            points = np.vstack([rng.normal(size=(30, 2)), rng.normal(loc=4.0, size=(30, 2))])
            history = DiagonalGMM(int(rng.integers(2, 4)), seed=seed).fit(points).history
            assert all(b >= a - 1e-8 * abs(a) for a, b in zip(history, history[1:]))

    def test_groups_partition_users_with_exact_k(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            points = rng.normal(size=(int(rng.integers(5, 40)), 3))
            k = int(rng.integers(2, len(points) + 1))
            assignment = FormationEngine.form_groups(points, k, seed=seed)
            assert assignment.n_groups == k
            assert np.all(assignment.sizes > 0)
            members = np.concatenate(assignment.groups())
            np.testing.assert_array_equal(np.sort(members), np.arange(len(points)))

    def test_metrics_stay_in_range(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            ranked = rng.permutation(30)
            relevant = rng.choice(30, size=rng.integers(1, 10), replace=False)
            k = int(rng.integers(1, 31))
            assert 0.0 <= ndcg_at_k(ranked, relevant, k) <= 1.0 + 1e-12
            assert hr_at_k(ranked, relevant, k) in (0.0, 1.0)

    def test_formation_is_deterministic_by_seed(self):
        for seed in range(100):
            points = np.random.default_rng(seed).normal(size=(25, 3))
            first = FormationEngine.form_groups(points, 4, seed=seed)
            second = FormationEngine.form_groups(points, 4, seed=seed)
            np.testing.assert_array_equal(first.membership, second.membership)


def planted_run(seed: int, config: TrainConfig, branching=(3,)):
    """Train on a 300-user planted dataset; returns the embedding, dataset, labels and training seconds."""
    planted = generate_planted(n_users=300, branching=branching, n_items=60, noise=0.1, seed=seed)
    dataset = IngestEngine.normalize_ratings(IngestEngine.split_train_test(planted.interactions, seed=seed))
    graph = GraphEngine.build_user_graph(dataset.x_train, config.graph_top_k)
    started = time.perf_counter()
    result = Trainer(config).train(dataset, graph)
    seconds = time.perf_counter() - started
    z_final = FormationEngine.embed(result.checkpoint, dataset, graph)
    return z_final, dataset, planted.labels, seconds


@pytest.fixture(scope="module")
def baby_log(tmp_path_factory):
    """The Baby interaction log when DEEPFORM_BABY_TSV names it, else a sparse log of similar shape."""
    path = os.environ.get(BABY_ENV_VAR)
    if path:
        return Path(path)
    planted = generate_planted(n_users=3000, branching=(5,), n_items=700, noise=0.05, density=0.02, seed=0,
                               min_interactions=5)
    out = tmp_path_factory.mktemp("baby") / "baby.tsv"
    planted.interactions.to_csv(out, sep="\t", header=False, index=False)
    return out


@pytest.mark.slow
class TestAcceptance:

    def test_gradient_fidelity(self):
        config = TrainConfig(d=6, h1=8, h2=7)
        x, graph, params = random_instance(12, 10, config, seed=0)
        report = grad_check(params, x, graph, config, tolerance=1e-4)
        assert report.passed, report.to_text()

    def test_planted_blocks_are_recovered(self):
        scores = []
        for seed in range(5):
            z_final, dataset, labels, _ = planted_run(seed, TrainConfig(epochs=50, seed=seed))
            assignment = FormationEngine.form_groups(z_final, 3, seed=seed)
            ari, _ = clustering_quality(assignment.membership, labels_for(dataset.user_ids, labels))
            scores.append(ari)
        assert np.median(scores) >= 0.9, scores

    def test_formation_is_cheap_and_linear_in_k(self):
        z_final, _, _, train_seconds = planted_run(0, TrainConfig(epochs=50))
        bench = FormationEngine.bench_formation(z_final, DEFAULT_BENCH_K)
        assert bench.summary()["total_seconds"] < 0.1 * train_seconds
        assert bench.r_squared >= 0.9

    def test_deep_groups_recommend_at_least_as_well_as_raw_kmeans(self):
        wins = 0
        for seed in range(5):
            z_final, dataset, _, _ = planted_run(seed, TrainConfig(epochs=50, seed=seed))
            deep = FormationEngine.form_groups(z_final, 3, seed=seed)
            raw = baseline_kmeans_groups(dataset.x_train, 3, seed=seed)
            deep_hr = evaluate_pipeline(deep, AggregationStrategy.AVG, dataset, (10,)).hr[10]
            raw_hr = evaluate_pipeline(raw, AggregationStrategy.AVG, dataset, (10,)).hr[10]
            wins += deep_hr >= raw_hr
        assert wins >= 4

    def test_stochastic_k_helps_every_level(self):
        def mean_ari(seed, stochastic):
            config = TrainConfig(epochs=50, seed=seed, k_max=12, stochastic_k=stochastic)
            z_final, dataset, labels, _ = planted_run(seed, config, branching=(3, 2, 2))
            scores = []
            for level, k in enumerate((3, 6, 12), start=1):
                assignment = FormationEngine.form_groups(z_final, k, seed=seed)
                scores.append(clustering_quality(assignment.membership,
                                                 labels_for(dataset.user_ids, labels, level))[0])
            return np.mean(scores)

        wins = sum(mean_ari(seed, True) >= mean_ari(seed, False) for seed in range(5))
        assert wins >= 4

    def test_most_active_users_run_end_to_end(self, baby_log):
        dataset = IngestEngine.build_dataset(baby_log, min_count=5, seed=0, max_users=2000)
        assert dataset.n_users == 2000

        config = TrainConfig(epochs=3, d=16, h1=32, h2=24, k_max=16, seed=0)
        graph = GraphEngine.build_user_graph(dataset.x_train, config.graph_top_k)
        result = Trainer(config).train(dataset, graph)
        z_final = FormationEngine.embed(result.checkpoint, dataset, graph)
        assignment = FormationEngine.form_groups(z_final, 10, seed=0)
        report = evaluate_pipeline(assignment, AggregationStrategy.AVG, dataset, (5, 10, 20))

        assert report.n_groups == 10
        assert report.users_evaluated + report.users_excluded == dataset.n_users
        assert report.users_evaluated > 0
        assert report.to_frame()["k"].tolist() == [5, 10, 20]
        assert all(0.0 <= report.ndcg[k] <= report.hr[k] + 1e-12 <= 1.0 + 1e-12 for k in report.k_list)
