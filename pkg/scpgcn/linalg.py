"""Dense real linear algebra used by the rest of the package.

Matrices are plain ``numpy`` float64 arrays; ``as_dense`` is the single
validation gate (2-D, finite). Everything here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal

import numpy as np

from .errors import ConvergenceError, DimensionError, NonFiniteError, SymmetryError

SYMMETRY_RTOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
KMEANS_MAX_ITER = 300


def as_dense(x: object, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise."""
    arr = np.array(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(name, f"{name} contains NaN or Inf")
    return arr


def frobenius_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(as_dense(m), ord="fro"))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_dense(a, "left operand")
    b = as_dense(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def transpose(m: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(as_dense(m).T)


def check_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL, name: str = "matrix") -> np.ndarray:
    """Validate squareness and symmetry within ``rtol`` relative to the largest entry."""
    m = as_dense(m, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > rtol * scale:
        raise SymmetryError(f"{name} is not symmetric (max |M - M^T| = {asym:.3e})")
    return m


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues with paired orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def smallest(self, k: int) -> np.ndarray:
        """Eigenvectors of the ``k`` smallest eigenvalues (solver order on ties)."""
        return self.eigenvectors[:, :k]

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive; first index wins ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _off_diagonal_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def _jacobi_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations on a symmetric matrix."""
    a = m.copy()
    n = a.shape[0]
    v = np.eye(n)
    threshold = JACOBI_TOL * max(float(np.linalg.norm(m, ord="fro")), np.finfo(float).tiny)
    for _sweep in range(JACOBI_MAX_SWEEPS):
        off = _off_diagonal_norm(a)
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        off = _off_diagonal_norm(a)
        if off > threshold:
            raise ConvergenceError(
                f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-diagonal mass {off:.3e})"
            )
    return np.diag(a).copy(), v


def symmetric_eigendecomposition(
    m: np.ndarray,
    method: Literal["lapack", "jacobi"] = "lapack",
) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix.

    Args:
        m: Square matrix, symmetric within a 1e-10 relative tolerance.
        method: ``"lapack"`` (numpy.linalg.eigh) or ``"jacobi"`` (cyclic
            Jacobi rotations, converged when off-diagonal Frobenius mass is
            at most 1e-12 * ||M||_F, capped at 100 sweeps).

    Returns:
        EigenDecomposition with ascending eigenvalues. Columns are
        sign-canonicalized so the result is deterministic for a given input.
    """
    m = check_symmetric(m)
    m = (m + m.T) / 2.0
    if m.shape[0] == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    if method == "lapack":
        values, vectors = np.linalg.eigh(m)
    elif method == "jacobi":
        values, vectors = _jacobi_eigh(m)
    else:
        raise ValueError(f"unknown eigensolver: {method}")
    # stable sort keeps solver order among equal eigenvalues
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = _canonical_signs(vectors[:, order])
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigenDecomposition(values, vectors)


@dataclass(frozen=True)
class KMeansResult:
    """Outcome of one k-means run."""

    labels: np.ndarray
    centers: np.ndarray
    inertia_history: List[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else 0.0


def _sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # every point already coincides with a center; take the lowest unused index
            remaining = [i for i in range(n) if i not in chosen]
            nxt = remaining[0]
        else:
            cumulative = np.cumsum(closest / total)
            nxt = int(np.searchsorted(cumulative, rng.random(), side="right"))
            nxt = min(nxt, n - 1)
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_distances(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = _sq_distances(points, centers)
    # argmin returns the lowest center index on ties
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]


def _fill_empty(
    points: np.ndarray, centers: np.ndarray, labels: np.ndarray, dist: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Move the farthest point of a shared cluster into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    if counts.min() > 0:
        return labels, dist
    labels, dist = labels.copy(), dist.copy()
    for c in np.flatnonzero(counts == 0):
        order = np.argsort(-dist, kind="stable")
        # k <= n, so some cluster still holds two or more points
        pick = next(int(i) for i in order if counts[labels[i]] > 1)
        counts[labels[pick]] -= 1
        counts[c] = 1
        labels[pick] = c
        centers[c] = points[pick]
        dist[pick] = 0.0
    return labels, dist


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Lloyd's k-means with k-means++ seeding.

    A cluster left empty by an assignment step takes the point farthest from
    its center among clusters with two or more members, so the result always
    has exactly ``k`` non-empty clusters. Stops when assignments no longer
    change or after ``max_iter`` iterations. Deterministic for a fixed seed.
    """
    points = as_dense(points, "points")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    labels, dist = _fill_empty(points, centers, *_assign(points, centers), k)
    history = [float(dist.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centers = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
        new_labels, dist = _fill_empty(points, centers, *_assign(points, centers), k)
        history.append(float(dist.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    labels = labels.astype(np.int64)
    labels.setflags(write=False)
    return KMeansResult(labels=labels, centers=centers, inertia_history=history, n_iter=n_iter)
