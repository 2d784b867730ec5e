"""Community detection on structural networks and community centers.

Communities come from normalized-cut spectral clustering: eigenvectors of
the C smallest eigenvalues of the normalized Laplacian, rescaled row-wise by
D^(-1/2) (the random-walk embedding), then k-means. Labels are canonical:
communities are numbered by their smallest member index.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .errors import DimensionError, InvariantError
from .graph_core import inverse_sqrt_degrees, normalized_laplacian
from .linalg import as_dense, kmeans, symmetric_eigendecomposition


@dataclass(frozen=True, eq=False)
class CommunityAssignment:
    """Partition of ``n`` nodes into ``C`` non-empty communities."""

    membership: np.ndarray
    n_communities: int

    def __post_init__(self) -> None:
        m = np.asarray(self.membership, dtype=np.int64).copy()
        if m.ndim != 1:
            raise DimensionError("membership must be a vector")
        if m.size and (m.min() < 0 or m.max() >= self.n_communities):
            raise InvariantError(f"membership values must lie in [0, {self.n_communities})")
        counts = np.bincount(m, minlength=self.n_communities)
        if np.any(counts == 0):
            empty = [int(c) for c in np.flatnonzero(counts == 0)]
            raise InvariantError(f"empty communities: {empty}")
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @property
    def n(self) -> int:
        return int(self.membership.shape[0])

    @property
    def sets(self) -> List[np.ndarray]:
        """Node index arrays S_c, one per community."""
        return [np.flatnonzero(self.membership == c) for c in range(self.n_communities)]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.membership, minlength=self.n_communities)

    def permuted(self, perm: np.ndarray) -> "CommunityAssignment":
        """Assignment for nodes relabeled so new node i is old node perm[i]."""
        return CommunityAssignment(self.membership[np.asarray(perm)], self.n_communities)

    def to_dict(self) -> Dict[str, object]:
        return {"C": self.n_communities, "membership": [int(x) for x in self.membership]}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CommunityAssignment):
            return NotImplemented
        return self.n_communities == other.n_communities and np.array_equal(
            self.membership, other.membership
        )

    __hash__ = None  # type: ignore[assignment]


def canonical_labels(labels: np.ndarray) -> Tuple[np.ndarray, int]:
    """Relabel so communities are numbered by ascending smallest member."""
    labels = np.asarray(labels)
    mapping: Dict[int, int] = {}
    for lab in labels.tolist():
        if lab not in mapping:
            mapping[lab] = len(mapping)
    return np.array([mapping[lab] for lab in labels.tolist()], dtype=np.int64), len(mapping)


def spectral_communities(
    a_s: np.ndarray,
    n_communities: int,
    seed: int,
    eigensolver: str = "lapack",
) -> CommunityAssignment:
    """Partition a structural network into ``n_communities`` communities.

    Isolated nodes are treated as components of their own: their Laplacian
    diagonal is zeroed for the eigenproblem and their rows are not rescaled,
    so every connected component spans one zero eigenvalue.
    """
    a_s = as_dense(a_s, "structural adjacency")
    n = a_s.shape[0]
    if n_communities < 1:
        raise ValueError("number of communities must be >= 1")
    if n_communities > n:
        raise ValueError(f"cannot form {n_communities} communities from {n} nodes")
    if n_communities == 1:
        return CommunityAssignment(np.zeros(n, dtype=np.int64), 1)
    lap = normalized_laplacian(a_s)
    scale = inverse_sqrt_degrees(a_s)
    isolated = np.flatnonzero(scale == 0.0)
    lap[isolated, isolated] = 0.0
    scale[isolated] = 1.0
    eig = symmetric_eigendecomposition(lap, method=eigensolver)  # type: ignore[arg-type]
    embedding = scale[:, None] * eig.smallest(n_communities)
    result = kmeans(embedding, n_communities, seed)
    labels, found = canonical_labels(result.labels)
    if found != n_communities:
        raise InvariantError(f"k-means produced {found} of {n_communities} communities")
    return CommunityAssignment(labels, n_communities)


def community_centers(z: np.ndarray, assignment: CommunityAssignment) -> np.ndarray:
    """C x d matrix whose row c is the mean of the rows of Z in S_c."""
    z = as_dense(z, "node embeddings")
    if z.shape[0] != assignment.n:
        raise DimensionError(
            f"embedding has {z.shape[0]} rows but the assignment covers {assignment.n} nodes"
        )
    sums = np.zeros((assignment.n_communities, z.shape[1]))
    np.add.at(sums, assignment.membership, z)
    return sums / assignment.sizes[:, None]


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Chance-corrected agreement between two partitions, 1.0 iff identical up to relabeling."""
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    if a_arr.shape != b_arr.shape:
        raise DimensionError(f"membership lengths differ: {a_arr.shape} vs {b_arr.shape}")
    return float(adjusted_rand_score(a_arr, b_arr))


CacheKey = Tuple[Hashable, ...]


class CommunityCache:
    """Thread-safe memo of per-instance community assignments.

    Writes are serialized per key: concurrent requests for the same key
    compute once, distinct keys proceed in parallel.
    """

    def __init__(self) -> None:
        self._entries: Dict[CacheKey, CommunityAssignment] = {}
        self._locks: Dict[CacheKey, threading.Lock] = {}
        self._guard = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _lock_for(self, key: CacheKey) -> threading.Lock:
        with self._guard:
            lock = self._locks.get(key)
            if lock is None:
                lock = self._locks[key] = threading.Lock()
            return lock

    def get_or_compute(
        self,
        key: CacheKey,
        compute: Callable[[], CommunityAssignment],
    ) -> CommunityAssignment:
        with self._lock_for(key):
            cached = self._entries.get(key)
            if cached is not None:
                with self._guard:
                    self.hits += 1
                return cached
            value = compute()
            with self._guard:
                self._entries[key] = value
                self.misses += 1
            return value

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)
