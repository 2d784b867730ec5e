"""Tests for the community module."""

import threading
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from math import comb

import numpy as np
import pytest

from scpgcn.community import (
    CommunityAssignment,
    CommunityCache,
    adjusted_rand_index,
    canonical_labels,
    community_centers,
    spectral_communities,
)
from scpgcn.errors import DimensionError, InvariantError
from scpgcn.synthdata import planted_blocks, sample_structural

from tests.builders import random_structural


def _two_triangles() -> np.ndarray:
    a = np.zeros((6, 6))
    for block in ((0, 1, 2), (3, 4, 5)):
        for i, j in combinations(block, 2):
            a[i, j] = a[j, i] = 1.0
    return a


def _ari_oracle(a: np.ndarray, b: np.ndarray) -> float:
    """Hubert-Arabie ARI from the contingency table."""
    n = a.size
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=int)
    for x, y in zip(a, b):
        table[x, y] += 1
    index = sum(comb(int(v), 2) for v in table.ravel())
    rows = sum(comb(int(v), 2) for v in table.sum(axis=1))
    cols = sum(comb(int(v), 2) for v in table.sum(axis=0))
    expected = rows * cols / comb(n, 2)
    maximum = (rows + cols) / 2
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


class TestCommunityAssignment:
    """Tests for the assignment value type."""

    def test_sets_partition_nodes(self) -> None:
        """Test community sets are disjoint and cover every node."""
        assignment = CommunityAssignment(np.array([0, 1, 0, 2, 1]), 3)
        sets = assignment.sets
        assert sorted(np.concatenate(sets).tolist()) == list(range(5))
        np.testing.assert_array_equal(assignment.sizes, [2, 2, 1])

    def test_empty_community_rejected(self) -> None:
        """Test an unused community index is rejected."""
        with pytest.raises(InvariantError):
            CommunityAssignment(np.array([0, 0, 2]), 3)

    def test_out_of_range_rejected(self) -> None:
        """Test membership values must be below C."""
        with pytest.raises(InvariantError):
            CommunityAssignment(np.array([0, 1, 3]), 2)

    def test_to_dict(self) -> None:
        """Test the JSON form."""
        assignment = CommunityAssignment(np.array([0, 1, 1]), 2)
        assert assignment.to_dict() == {"C": 2, "membership": [0, 1, 1]}

    def test_canonical_labels(self) -> None:
        """Test relabeling by first appearance."""
        labels, found = canonical_labels(np.array([2, 2, 0, 1, 0]))
        np.testing.assert_array_equal(labels, [0, 0, 1, 2, 1])
        assert found == 3


class TestSpectralCommunities:
    """Tests for normalized-cut spectral clustering."""

    def test_two_triangles(self) -> None:
        """Test disjoint triangles are recovered exactly."""
        result = spectral_communities(_two_triangles(), 2, seed=0)
        np.testing.assert_array_equal(result.membership, [0, 0, 0, 1, 1, 1])

    def test_single_community(self) -> None:
        """Test C=1 puts every node together."""
        a = random_structural(np.random.default_rng(0), 7)
        result = spectral_communities(a, 1, seed=0)
        assert result.n_communities == 1
        assert set(result.membership.tolist()) == {0}

    def test_planted_sbm_recovery(self) -> None:
        """Test ARI >= 0.95 against planted blocks on at least 18 of 20 seeds."""
        blocks = planted_blocks(60, 3)
        good = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = sample_structural(blocks, 0.9, 0.05, 1.0, rng)
            result = spectral_communities(a, 3, seed=seed)
            if adjusted_rand_index(result.membership, blocks) >= 0.95:
                good += 1
        assert good >= 18

    def test_components_recovered_exactly(self) -> None:
        """Test a graph with C components splits into exactly those components."""
        rng = np.random.default_rng(1)
        sizes = (5, 7, 4)
        a = np.zeros((16, 16))
        k = 0
        truth = []
        for c, size in enumerate(sizes):
            a[k:k + size, k:k + size] = random_structural(rng, size, density=1.0)
            truth += [c] * size
            k += size
        result = spectral_communities(a, 3, seed=4)
        assert adjusted_rand_index(result.membership, truth) == 1.0

    def test_isolated_nodes_are_own_components(self) -> None:
        """Test a triangle plus two isolated nodes splits into those three components."""
        a = np.zeros((5, 5))
        for i, j in combinations((0, 1, 2), 2):
            a[i, j] = a[j, i] = 1.0
        for seed in range(5):
            result = spectral_communities(a, 3, seed=seed)
            np.testing.assert_array_equal(result.membership, [0, 0, 0, 1, 2])

    def test_empty_graph(self) -> None:
        """Test a graph with no edges still yields C non-empty communities."""
        result = spectral_communities(np.zeros((4, 4)), 2, seed=0)
        assert result.n_communities == 2
        assert sorted(result.sizes.tolist()) in ([1, 3], [2, 2])

    def test_scale_invariance(self) -> None:
        """Test uniform positive scaling leaves the membership unchanged."""
        blocks = planted_blocks(30, 3)
        a = sample_structural(blocks, 0.9, 0.1, 1.0, np.random.default_rng(2))
        base = spectral_communities(a, 3, seed=7)
        scaled = spectral_communities(17.5 * a, 3, seed=7)
        np.testing.assert_array_equal(base.membership, scaled.membership)

    def test_node_zero_labeled_zero(self) -> None:
        """Test canonical labeling puts node 0 in community 0."""
        rng = np.random.default_rng(3)
        for seed in range(5):
            result = spectral_communities(random_structural(rng, 12, density=0.6), 3, seed=seed)
            assert result.membership[0] == 0

    def test_jacobi_solver(self) -> None:
        """Test the Jacobi eigensolver gives the same split on an easy graph."""
        result = spectral_communities(_two_triangles(), 2, seed=0, eigensolver="jacobi")
        np.testing.assert_array_equal(result.membership, [0, 0, 0, 1, 1, 1])

    def test_too_many_communities(self) -> None:
        """Test C > n raises."""
        with pytest.raises(ValueError):
            spectral_communities(np.zeros((3, 3)), 4, seed=0)

    def test_zero_communities(self) -> None:
        """Test C < 1 raises."""
        with pytest.raises(ValueError):
            spectral_communities(np.zeros((3, 3)), 0, seed=0)


class TestCommunityCenters:
    """Tests for community center embeddings."""

    def test_two_point_mean(self) -> None:
        """Test the center of two points is their midpoint."""
        z = np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 1.0]])
        centers = community_centers(z, CommunityAssignment(np.array([0, 0, 1]), 2))
        np.testing.assert_allclose(centers[0], [1.0, 1.0])

    def test_singleton(self) -> None:
        """Test a singleton community's center is its member."""
        z = np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 1.0]])
        centers = community_centers(z, CommunityAssignment(np.array([0, 0, 1]), 2))
        np.testing.assert_allclose(centers[1], [5.0, 1.0])

    def test_matches_mean_oracle(self) -> None:
        """Test centers against per-coordinate means."""
        rng = np.random.default_rng(4)
        z = rng.standard_normal((20, 3))
        membership = np.concatenate([np.arange(4), rng.integers(0, 4, size=16)])
        centers = community_centers(z, CommunityAssignment(membership, 4))
        for c in range(4):
            np.testing.assert_allclose(centers[c], z[membership == c].mean(axis=0), atol=1e-14)

    def test_dimension_mismatch(self) -> None:
        """Test a row-count mismatch raises."""
        with pytest.raises(DimensionError):
            community_centers(np.zeros((4, 2)), CommunityAssignment(np.array([0, 1, 1]), 2))


class TestAdjustedRandIndex:
    """Tests for the partition agreement metric."""

    def test_identical(self) -> None:
        """Test identical partitions score 1."""
        assert adjusted_rand_index([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0

    def test_relabeled(self) -> None:
        """Test relabeling does not change the score."""
        assert adjusted_rand_index([0, 0, 1, 1, 2], [2, 2, 0, 0, 1]) == pytest.approx(1.0)

    def test_all_in_one_vs_singletons(self) -> None:
        """Test the degenerate pairing against the contingency oracle."""
        a = np.zeros(6, dtype=int)
        b = np.arange(6)
        assert adjusted_rand_index(a, b) == pytest.approx(_ari_oracle(a, b))

    def test_random_partitions_match_oracle(self) -> None:
        """Test random partitions against the contingency oracle."""
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.integers(0, 4, size=30)
            b = rng.integers(0, 3, size=30)
            assert adjusted_rand_index(a, b) == pytest.approx(_ari_oracle(a, b), abs=1e-12)

    def test_length_mismatch(self) -> None:
        """Test unequal lengths raise."""
        with pytest.raises(DimensionError):
            adjusted_rand_index([0, 1], [0, 1, 1])


class TestCommunityCache:
    """Tests for the per-key assignment cache."""

    def test_hit_and_miss(self) -> None:
        """Test the second lookup is served from the cache."""
        cache = CommunityCache()
        assignment = CommunityAssignment(np.array([0, 1]), 2)
        calls = []

        def compute() -> CommunityAssignment:
            calls.append(1)
            return assignment

        assert cache.get_or_compute(("s1", 2, 0), compute) is assignment
        assert cache.get_or_compute(("s1", 2, 0), compute) is assignment
        assert len(calls) == 1
        assert (cache.hits, cache.misses) == (1, 1)
        assert ("s1", 2, 0) in cache

    def test_concurrent_same_key_computes_once(self) -> None:
        """Test concurrent requests for one key compute it once."""
        cache = CommunityCache()
        lock = threading.Lock()
        calls = []

        def compute() -> CommunityAssignment:
            with lock:
                calls.append(1)
            return CommunityAssignment(np.array([0, 1, 1]), 2)

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda _: cache.get_or_compute(("k",), compute), range(32)))
        assert len(calls) == 1
        assert all(r is results[0] for r in results)
        assert len(cache) == 1
