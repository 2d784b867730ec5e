"""Exception types raised across the scpgcn package.

Every error derives from ``ScpGcnError`` and from the built-in type a caller
would naturally catch (``ValueError`` for bad inputs, ``ArithmeticError`` for
numerical breakdowns), so ``except ValueError`` keeps working.
"""

from __future__ import annotations

from typing import Optional


class ScpGcnError(Exception):
    """Base class for all package errors."""


class DimensionError(ScpGcnError, ValueError):
    """Array shapes are inconsistent with the operation."""


class SymmetryError(ScpGcnError, ValueError):
    """A matrix required to be symmetric is not."""


class InvariantError(ScpGcnError, ValueError):
    """Input data violates a documented domain invariant."""


class ConfigError(ScpGcnError, ValueError):
    """A configuration value is invalid or unknown."""


class ConvergenceError(ScpGcnError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class NonFiniteError(ScpGcnError, ArithmeticError):
    """A NaN or Inf appeared in a named computation."""

    def __init__(self, term: str, message: Optional[str] = None) -> None:
        self.term = term
        super().__init__(message or f"non-finite value in {term}")


class DatasetError(ScpGcnError, ValueError):
    """A dataset record failed to load or validate."""

    def __init__(
        self,
        message: str,
        *,
        instance_id: Optional[str] = None,
        path: Optional[str] = None,
    ) -> None:
        self.instance_id = instance_id
        self.path = path
        parts = [message]
        if instance_id is not None:
            parts.append(f"id={instance_id}")
        if path is not None:
            parts.append(f"file={path}")
        super().__init__(" | ".join(parts))


class MissingAssignmentError(ScpGcnError, KeyError):
    """No community assignment is cached for an instance."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing community assignment"
