import numpy as np
import pytest

from tagunet.hierarchy import (ClusterAssignment, build_clusters,
                               build_hierarchy, knn_edges, load_hierarchy,
                               pool_mean, save_hierarchy, union_hierarchies,
                               unpool_copy)
from tagunet.meshgraph import MeshGraph, validate


def oracle_clusters(coords, c):
    """Independent recursive median-split reference, pure Python."""
    coords = [list(map(float, p)) for p in coords]
    dim = len(coords[0])
    cluster_of = [None] * len(coords)
    counter = [0]

    def rec(idx):
        if len(idx) <= c:
            for i in idx:
                cluster_of[i] = counter[0]
            counter[0] += 1
            return
        spans = [max(coords[i][d] for i in idx) - min(coords[i][d] for i in idx)
                 for d in range(dim)]
        axis = spans.index(max(spans))
        ordered = sorted(idx, key=lambda i: (coords[i][axis], i))
        lower = (len(ordered) + 1) // 2
        rec(ordered[:lower])
        rec(ordered[lower:])

    rec(list(range(len(coords))))
    return cluster_of


def point_graph(coords, k=6):
    coords = np.asarray(coords, dtype=np.float64)
    return MeshGraph(dim=coords.shape[1], coords=coords,
                     edges=knn_edges(coords, k), name="pts")


class TestBuildClusters:
    def test_small_cell_single_cluster(self):
        a = build_clusters(np.random.default_rng(0).normal(size=(4, 2)), 4)
        assert a.num_clusters == 1
        assert a.cluster_of.tolist() == [0, 0, 0, 0]

    def test_collinear_split(self):
        coords = np.array([[float(i), 0.0] for i in range(8)])
        a = build_clusters(coords, 4)
        assert a.cluster_of.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]

    def test_odd_split_lower_gets_ceil(self):
        coords = np.array([[float(i), 0.0] for i in range(5)])
        a = build_clusters(coords, 4)
        assert a.cluster_of.tolist() == [0, 0, 0, 1, 1]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_clusters(np.zeros((0, 2)), 4)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            build_clusters(np.array([[0.0, np.inf]]), 4)

    def test_matches_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            n = int(rng.integers(1, 400))
            dim = int(rng.choice([2, 3]))
            c = int(rng.choice([3, 4, 8]))
            coords = rng.uniform(size=(n, dim))
            a = build_clusters(coords, c)
            assert a.cluster_of.tolist() == oracle_clusters(coords, c)

    def test_size_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(1, 500))
            c = int(rng.choice([4, 8]))
            coords = rng.normal(size=(n, 2))
            sizes = build_clusters(coords, c).sizes()
            assert sizes.max() <= c
            assert sizes.sum() == n
            if n >= c:
                assert sizes.min() >= c // 2

    def test_deterministic(self):
        coords = np.random.default_rng(9).uniform(size=(137, 3))
        a = build_clusters(coords, 8)
        b = build_clusters(coords, 8)
        assert np.array_equal(a.cluster_of, b.cluster_of)

    def test_duplicate_coordinates_split_by_index(self):
        coords = np.zeros((6, 2))
        a = build_clusters(coords, 4)
        # all coordinates equal: ordering falls back to node index
        assert a.cluster_of.tolist() == [0, 0, 0, 1, 1, 1]


class TestKnnEdges:
    def test_single_point(self):
        assert knn_edges(np.zeros((1, 2)), 3).shape == (0, 2)

    def test_complete_graph_when_k_large(self):
        coords = np.random.default_rng(1).uniform(size=(5, 2))
        edges = knn_edges(coords, 10)
        assert len(edges) == 5 * 4

    def test_collinear_tie_break(self):
        coords = np.array([[0.0], [1.0], [2.0]])
        edges = knn_edges(coords, 1)
        assert {tuple(e) for e in edges.tolist()} == {(0, 1), (1, 0), (1, 2), (2, 1)}

    def test_symmetric_no_self_loops_degree(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            m = int(rng.integers(1, 80))
            k = int(rng.integers(1, 14))
            coords = rng.uniform(size=(m, 3))
            edges = knn_edges(coords, k)
            s = {tuple(e) for e in edges.tolist()}
            assert all((j, i) in s for i, j in s)
            assert all(i != j for i, j in s)
            if m > 1:
                deg = np.bincount(edges[:, 0], minlength=m)
                assert deg.min() >= min(k, m - 1)


class TestPoolUnpool:
    def two_cluster_assignment(self):
        return ClusterAssignment(np.array([0, 0, 1]), 2, 4)

    def test_constant_rows(self):
        a = self.two_cluster_assignment()
        out = pool_mean(np.full((3, 2), 7.0), a)
        assert np.array_equal(out, np.full((2, 2), 7.0))

    def test_mean_example(self):
        a = ClusterAssignment(np.array([0, 0]), 1, 4)
        out = pool_mean(np.array([[0.0, 2.0], [4.0, 6.0]]), a)
        assert np.array_equal(out, np.array([[2.0, 4.0]]))

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(8)
        feats = rng.normal(size=(50, 8))
        cluster_of = rng.integers(0, 12, size=50)
        cluster_of[:12] = np.arange(12)  # every cluster non-empty
        a = ClusterAssignment(cluster_of, 12, 8)
        out = pool_mean(feats, a)
        for j in range(12):
            expect = feats[cluster_of == j].mean(axis=0)
            assert np.allclose(out[j], expect, rtol=1e-12, atol=0)

    def test_unpool_copy(self):
        a = ClusterAssignment(np.array([0, 0, 0]), 1, 4)
        assert unpool_copy(np.array([[5.0]]), a).tolist() == [[5.0], [5.0], [5.0]]

    def test_pool_of_unpool_is_identity(self):
        rng = np.random.default_rng(3)
        cluster_of = np.repeat(np.arange(6), [1, 2, 3, 4, 2, 1])
        a = ClusterAssignment(cluster_of, 6, 4)
        coarse = rng.normal(size=(6, 5))
        assert np.allclose(pool_mean(unpool_copy(coarse, a), a), coarse,
                           rtol=1e-12)

    def test_unpool_of_pool_on_cluster_constant(self):
        cluster_of = np.array([0, 0, 1, 1, 1])
        a = ClusterAssignment(cluster_of, 2, 4)
        fine = np.array([[1.0], [1.0], [9.0], [9.0], [9.0]])
        assert np.array_equal(unpool_copy(pool_mean(fine, a), a), fine)

    def test_shape_mismatch(self):
        a = self.two_cluster_assignment()
        with pytest.raises(ValueError):
            pool_mean(np.zeros((5, 2)), a)
        with pytest.raises(ValueError):
            unpool_copy(np.zeros((5, 2)), a)


class TestBuildHierarchy:
    def test_exact_halving(self):
        coords = np.random.default_rng(0).uniform(size=(4096, 2))
        g = point_graph(coords)
        h = build_hierarchy(g, depth=3, c=4, k=12)
        assert h.level_sizes(4096) == [4096, 1024, 256, 64]

    def test_early_stop(self):
        coords = np.random.default_rng(1).uniform(size=(10, 2))
        h = build_hierarchy(point_graph(coords), depth=2, c=8, k=12)
        assert h.level_sizes(10) == [10, 2, 1]
        assert h.depth == 2
        h3 = build_hierarchy(point_graph(coords), depth=5, c=8, k=12)
        assert h3.depth == 2  # a 1-node level cannot coarsen further

    def test_coarse_edges_validate(self):
        coords = np.random.default_rng(2).uniform(size=(60, 3))
        h = build_hierarchy(point_graph(coords), depth=1, c=8, k=5)
        lv = h.levels[0]
        coarse = MeshGraph(dim=3, coords=lv.coarse_coords,
                           edges=lv.coarse_edges, name="coarse")
        assert validate(coarse) == []

    def test_centroids_match_bruteforce(self):
        rng = np.random.default_rng(4)
        coords = rng.normal(size=(300, 2))
        h = build_hierarchy(point_graph(coords), depth=2, c=4, k=6)
        level_coords = coords
        for lv in h.levels:
            a = lv.assignment
            for j in range(a.num_clusters):
                expect = level_coords[a.cluster_of == j].mean(axis=0)
                assert np.allclose(lv.coarse_coords[j], expect, rtol=1e-12)
            level_coords = lv.coarse_coords

    def test_cache_round_trip(self, tmp_path):
        coords = np.random.default_rng(5).uniform(size=(100, 2))
        h = build_hierarchy(point_graph(coords), depth=3, c=4, k=6)
        path = tmp_path / "h.json"
        save_hierarchy(h, path)
        h2 = load_hierarchy(path, dim=2)
        assert h2.depth == h.depth and h2.c == h.c and h2.k == h.k
        for a, b in zip(h.levels, h2.levels):
            assert np.array_equal(a.assignment.cluster_of, b.assignment.cluster_of)
            assert np.array_equal(a.coarse_coords, b.coarse_coords)
            assert np.array_equal(a.coarse_edges, b.coarse_edges)

    def test_union_of_two(self):
        rng = np.random.default_rng(6)
        g1 = point_graph(rng.uniform(size=(40, 2)))
        g2 = point_graph(rng.uniform(size=(24, 2)))
        h1 = build_hierarchy(g1, 2, 4, 6)
        h2 = build_hierarchy(g2, 2, 4, 6)
        hu = union_hierarchies([h1, h2])
        m1 = h1.levels[0].assignment.num_clusters
        m2 = h2.levels[0].assignment.num_clusters
        assert hu.levels[0].assignment.num_clusters == m1 + m2
        first = hu.levels[0].assignment.cluster_of[:40]
        assert np.array_equal(first, h1.levels[0].assignment.cluster_of)
        second = hu.levels[0].assignment.cluster_of[40:]
        assert np.array_equal(second, h2.levels[0].assignment.cluster_of + m1)

    def test_hierarchy_for_uses_cache(self, tmp_path):
        from tagunet.hierarchy import cache_filename, hierarchy_for
        coords = np.random.default_rng(8).uniform(size=(50, 2))
        g = point_graph(coords)
        g.name = "cached"
        h1 = hierarchy_for(g, 2, 4, 6, cache_dir=str(tmp_path))
        cache_file = tmp_path / cache_filename("cached", 4, 2, 6)
        assert cache_file.exists()
        h2 = hierarchy_for(g, 2, 4, 6, cache_dir=str(tmp_path))
        for a, b in zip(h1.levels, h2.levels):
            assert np.array_equal(a.assignment.cluster_of, b.assignment.cluster_of)
            assert np.array_equal(a.coarse_coords, b.coarse_coords)

    def test_size_variation_info(self, capsys):
        # density-preservation proxy: log the coefficient of variation of
        # cluster sizes next to a random partition's (not asserted)
        rng = np.random.default_rng(7)
        coords = rng.uniform(size=(1000, 2))
        sizes = build_clusters(coords, 4).sizes()
        m = len(sizes)
        random_sizes = np.bincount(rng.integers(0, m, size=1000), minlength=m)
        cv = sizes.std() / sizes.mean()
        cv_rand = random_sizes.std() / random_sizes.mean()
        print(f"cluster-size CV {cv:.3f} vs random partition {cv_rand:.3f}")
