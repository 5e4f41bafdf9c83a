"""k-means against its brute-force oracle, cluster stats, agreement metrics."""

import numpy as np
import pytest

from xplore.cluster import (EPS_SIGMA, ClusteringOptions, EmptyClusterError,
                            assign_clusters, brute_force_kmeans,
                            clustering_metrics, compute_cluster_stats, kmeans_fit)


class TestKmeansFit:
    def test_structured_two_cluster_instance(self):
        x = np.array([[0.0], [1.0], [10.0], [11.0]])
        model = kmeans_fit(x, 2, ClusteringOptions(restarts=5, seed=3))
        assert sorted(model.centroids.ravel()) == [0.5, 10.5]
        assert model.inertia == pytest.approx(1.0, abs=1e-12)

    def test_n_equals_k_zero_inertia(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 2))
        model = kmeans_fit(x, 5, ClusteringOptions(seed=1))
        assert model.inertia == pytest.approx(0.0, abs=1e-12)
        assert sorted(model.assignments) == list(range(5))

    def test_k_greater_than_n_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            kmeans_fit(np.zeros((3, 2)), 4)

    def test_k_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            kmeans_fit(np.ones((3, 2)), 0)

    def test_assignments_are_nearest(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(30, 3))
        model = kmeans_fit(x, 4, ClusteringOptions(restarts=5, seed=2))
        dist = np.sum((x[:, None, :] - model.centroids[None]) ** 2, axis=2)
        assert np.array_equal(np.argmin(dist, axis=1), model.assignments)
        assert model.inertia == pytest.approx(
            float(np.sum((x - model.centroids[model.assignments]) ** 2)), abs=1e-9)

    def test_centroids_are_member_means_after_convergence(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(40, 2))
        model = kmeans_fit(x, 3, ClusteringOptions(restarts=5, seed=4))
        mu, _ = compute_cluster_stats(x, model.assignments, 3)
        assert np.max(np.abs(mu - model.centroids)) < 1e-9

    def test_best_of_restarts_not_worse_than_single_runs(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(20, 2))
        multi = kmeans_fit(x, 3, ClusteringOptions(restarts=10, seed=5))
        singles = [kmeans_fit(x, 3, ClusteringOptions(restarts=1, seed=s)).inertia
                   for s in range(5)]
        assert multi.inertia <= min(singles) + 1e-12

    def test_sigma_floor_applied(self):
        x = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0]])
        model = kmeans_fit(x, 2, ClusteringOptions(seed=0))
        assert np.all(model.stds >= EPS_SIGMA)

    def test_random_init_supported(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(12, 2))
        model = kmeans_fit(x, 3, ClusteringOptions(init="random", restarts=5, seed=1))
        assert model.k == 3


class TestAssignClusters:
    def test_training_features_reproduce_assignments(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(25, 3))
        model = kmeans_fit(x, 4, ClusteringOptions(restarts=5, seed=6))
        assert np.array_equal(assign_clusters(model, x), model.assignments)

    def test_tie_breaks_to_lowest_index(self):
        from xplore.cluster import ClusterModel
        model = ClusterModel(centroids=np.array([[0.0], [5.0], [2.0]]),
                             stds=np.full((3, 1), EPS_SIGMA),
                             assignments=np.zeros(3, dtype=np.int64),
                             inertia=0.0)
        # 1.0 is equidistant from centroids 0 and 2
        assert assign_clusters(model, np.array([[1.0]]))[0] == 0

    def test_point_at_centroid(self):
        from xplore.cluster import ClusterModel
        model = ClusterModel(centroids=np.array([[0.0, 0.0], [3.0, 3.0]]),
                             stds=np.full((2, 2), EPS_SIGMA),
                             assignments=np.zeros(2, dtype=np.int64),
                             inertia=0.0)
        assert assign_clusters(model, np.array([[3.0, 3.0]]))[0] == 1

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(17)
        model = kmeans_fit(rng.normal(size=(6, 3)), 2)
        with pytest.raises(ValueError, match="dims"):
            assign_clusters(model, np.zeros((2, 4)))


class TestClusterStats:
    def test_hand_population_std(self):
        mu, sigma = compute_cluster_stats(np.array([[0.0, 0.0], [2.0, 2.0]]),
                                          [0, 0], 1)
        assert np.allclose(mu, [[1.0, 1.0]])
        assert np.allclose(sigma, [[1.0, 1.0]])  # population: sqrt(mean of 1,1)

    def test_singleton_cluster_floored(self):
        _, sigma = compute_cluster_stats(np.array([[1.0, 2.0], [5.0, 5.0]]),
                                         [0, 1], 2)
        assert np.all(sigma == EPS_SIGMA)

    def test_identical_members_floored(self):
        mu, sigma = compute_cluster_stats(np.array([[2.0], [2.0], [9.0]]),
                                          [0, 0, 1], 2)
        assert mu[0, 0] == 2.0
        assert sigma[0, 0] == EPS_SIGMA

    def test_empty_cluster_named(self):
        with pytest.raises(EmptyClusterError, match="cluster 2"):
            compute_cluster_stats(np.zeros((3, 1)), [0, 0, 1], 3)


class TestBruteForce:
    def test_structured_instance(self):
        model = brute_force_kmeans(np.array([[0.0], [1.0], [10.0], [11.0]]), 2)
        assert model.inertia == pytest.approx(1.0, abs=1e-12)

    def test_n_equals_k(self):
        model = brute_force_kmeans(np.arange(3.0)[:, None], 3)
        assert model.inertia == pytest.approx(0.0, abs=1e-12)

    def test_guard_arithmetic(self):
        rng = np.random.default_rng(19)
        # 3^9 = 19683 <= 1e7 passes
        brute_force_kmeans(rng.normal(size=(9, 1)), 3)
        # 4^20 > 1e7 rejected
        with pytest.raises(ValueError, match="too large"):
            brute_force_kmeans(rng.normal(size=(20, 1)), 4)

    def test_oracle_bound_over_seeded_instances(self):
        rng = np.random.default_rng(21)
        for i in range(20):
            n = int(rng.integers(3, 9))
            k = int(rng.integers(2, min(n, 3) + 1))
            x = rng.normal(size=(n, int(rng.integers(1, 4))))
            fit = kmeans_fit(x, k, ClusteringOptions(restarts=20, seed=i))
            oracle = brute_force_kmeans(x, k)
            assert fit.inertia >= oracle.inertia - 1e-9


class TestLloydMonotonicity:
    def test_inertia_never_increases(self, monkeypatch):
        # _lloyd raises internally on any increase; a clean run over many
        # instances is the per-iteration assertion working
        rng = np.random.default_rng(23)
        for i in range(30):
            x = rng.normal(size=(int(rng.integers(5, 30)), int(rng.integers(1, 5))))
            kmeans_fit(x, int(rng.integers(2, 5)) % x.shape[0] + 1,
                       ClusteringOptions(restarts=3, seed=i, max_iters=50))


def test_suggested_k_published_defaults():
    from xplore.cluster import suggested_k
    assert suggested_k(256) == 50
    assert suggested_k(128) == 100


class TestMetrics:
    def test_identical_labelings(self):
        m = clustering_metrics([0, 0, 1, 1], [0, 0, 1, 1])
        assert m["nmi"] == pytest.approx(1.0)
        assert m["ari"] == pytest.approx(1.0)

    def test_bijective_relabeling_invariance(self):
        m = clustering_metrics([0, 0, 1, 1, 2], [2, 2, 0, 0, 1])
        assert m["nmi"] == pytest.approx(1.0)
        assert m["ari"] == pytest.approx(1.0)

    def test_independent_labelings(self):
        # contingency table [[1,1],[1,1]]: MI = 0, ARI = -0.5
        m = clustering_metrics([0, 0, 1, 1], [0, 1, 0, 1])
        assert m["nmi"] == pytest.approx(0.0, abs=1e-12)
        assert m["ari"] <= 0.0
        assert m["ari"] == pytest.approx(-0.5)

    def test_ranges(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            a = rng.integers(0, 4, size=30)
            b = rng.integers(0, 3, size=30)
            m = clustering_metrics(a, b)
            assert 0.0 <= m["nmi"] <= 1.0
            assert -1.0 <= m["ari"] <= 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            clustering_metrics([0, 1], [0, 1, 2])
