"""Paired brain-network data model and the graph operators built on it.

A ``NetworkInstance`` holds one subject: a structural adjacency (fiber
strengths, non-negative, zero diagonal) and a functional adjacency
(correlations in [-1, 1], unit diagonal) over the same node set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, InvariantError, SymmetryError
from .linalg import as_dense

SYMMETRY_TOL = 1e-9
ViewKind = Literal["structural", "functional"]


class AsymmetryWarning(UserWarning):
    """Input matrix was symmetrized beyond the tolerance."""


def symmetrize(a: np.ndarray, name: str = "matrix", tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Return (A + A^T) / 2, warning when the asymmetry exceeds ``tol``."""
    a = as_dense(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol:
        warnings.warn(
            f"{name} asymmetric by {asym:.3e}; symmetrized as (A + A^T) / 2",
            AsymmetryWarning,
            stacklevel=2,
        )
    return (a + a.T) / 2.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _check_view(m: np.ndarray, owner: str, name: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{owner}: {name} must be square, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvariantError(f"{owner}: {name} contains NaN or Inf")
    if m.size and float(np.max(np.abs(m - m.T))) > SYMMETRY_TOL:
        raise SymmetryError(f"{owner}: {name} is not symmetric")


def validate_structural(s: np.ndarray, owner: str = "instance") -> None:
    """Square, finite, symmetric, non-negative, zero diagonal."""
    _check_view(s, owner, "structural")
    if np.any(s < 0):
        raise InvariantError(f"{owner}: structural has negative entries")
    if np.any(np.diag(s) != 0):
        raise InvariantError(f"{owner}: structural diagonal must be zero")


def validate_functional(f: np.ndarray, owner: str = "instance") -> None:
    """Square, finite, symmetric, entries in [-1, 1], unit diagonal."""
    _check_view(f, owner, "functional")
    if np.any(np.abs(f) > 1.0 + SYMMETRY_TOL):
        raise InvariantError(f"{owner}: functional entries must lie in [-1, 1]")
    if np.any(np.abs(np.diag(f) - 1.0) > SYMMETRY_TOL):
        raise InvariantError(f"{owner}: functional diagonal must be 1")


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """One subject's structural and functional networks plus its label."""

    id: str
    structural: np.ndarray
    functional: np.ndarray
    label: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "structural", _readonly(self.structural))
        object.__setattr__(self, "functional", _readonly(self.functional))
        object.__setattr__(self, "label", int(self.label))
        self.validate()

    @property
    def n(self) -> int:
        return int(self.structural.shape[0])

    def validate(self) -> None:
        """Check every instance invariant, raising on the first violation."""
        validate_structural(self.structural, self.id)
        validate_functional(self.functional, self.id)
        if self.structural.shape != self.functional.shape:
            raise DimensionError(
                f"{self.id}: structural {self.structural.shape} and functional "
                f"{self.functional.shape} differ in size"
            )
        if self.label not in (0, 1):
            raise InvariantError(f"{self.id}: label must be 0 or 1, got {self.label}")

    @classmethod
    def from_arrays(
        cls,
        id: str,
        structural: np.ndarray,
        functional: np.ndarray,
        label: int,
    ) -> "NetworkInstance":
        """Build an instance, symmetrizing both views first."""
        return cls(
            id=id,
            structural=symmetrize(structural, f"{id} structural"),
            functional=symmetrize(functional, f"{id} functional"),
            label=label,
        )

    def view(self, kind: ViewKind) -> np.ndarray:
        if kind == "structural":
            return self.structural
        if kind == "functional":
            return self.functional
        raise ValueError(f"unknown view kind: {kind}")


def _check_adjacency(a: np.ndarray, name: str) -> np.ndarray:
    a = as_dense(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if a.size and float(np.max(np.abs(a - a.T))) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(a)))):
        raise SymmetryError(f"{name} is not symmetric")
    if np.any(a < 0):
        raise InvariantError(f"{name} has negative entries")
    return a


def inverse_sqrt_degrees(a: np.ndarray) -> np.ndarray:
    """D^(-1/2) as a vector, with 0 for zero-degree nodes."""
    deg = a.sum(axis=1)
    out = np.zeros_like(deg)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def normalized_laplacian(a: np.ndarray) -> np.ndarray:
    """L = I - D^(-1/2) A D^(-1/2).

    Isolated nodes get a zero D^(-1/2) entry, so their Laplacian row is the
    identity row.
    """
    a = _check_adjacency(a, "adjacency")
    d = inverse_sqrt_degrees(a)
    lap = np.eye(a.shape[0]) - d[:, None] * a * d[None, :]
    return (lap + lap.T) / 2.0


def renormalized_propagation(a: np.ndarray) -> np.ndarray:
    """P = D^(-1/2) (A + I) D^(-1/2), with D the degrees of A + I."""
    a = _check_adjacency(a, "adjacency")
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    p = d[:, None] * a_hat * d[None, :]
    p = (p + p.T) / 2.0
    p.setflags(write=False)
    return p


def as_structure(view: np.ndarray, view_kind: ViewKind) -> np.ndarray:
    """Turn a view into a valid non-negative graph structure.

    Functional views become |A| with a zeroed diagonal; structural views pass
    through unchanged.
    """
    view = as_dense(view, "view")
    if view.shape[0] != view.shape[1]:
        raise DimensionError(f"view must be square, got shape {view.shape}")
    if view_kind == "structural":
        return view
    if view_kind == "functional":
        out = np.abs(view)
        np.fill_diagonal(out, 0.0)
        return out
    raise ValueError(f"unknown view kind: {view_kind}")


def scale_structure(a: np.ndarray, mode: Literal["none", "rowmax"] = "none") -> np.ndarray:
    """Optional rescaling of raw structural weights.

    ``rowmax`` divides entry (i, j) by sqrt(r_i * r_j) with r the row maxima,
    which keeps the matrix symmetric. Empty rows are left at zero.
    """
    if mode == "none":
        return a
    if mode != "rowmax":
        raise ValueError(f"unknown structure scaling: {mode}")
    r = np.max(a, axis=1) if a.size else np.zeros(0)
    inv = np.zeros_like(r)
    nz = r > 0
    inv[nz] = 1.0 / np.sqrt(r[nz])
    return inv[:, None] * a * inv[None, :]
