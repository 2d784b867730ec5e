"""Order-preserving parallel execution of independent jobs.

Repeats, grid points and pair-gradient blocks are pure given their derived
seeds, so running them on a thread pool changes wall time but not results.
numpy releases the GIL inside its BLAS kernels, which is where the work is.
"""

from __future__ import annotations

import concurrent.futures
import os
from typing import Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def default_jobs() -> int:
    """Worker count from ``SCPGCN_JOBS`` (1 when unset or invalid)."""
    try:
        return max(1, int(os.getenv("SCPGCN_JOBS", "1")))
    except ValueError:
        return 1


def run_jobs(
    fn: Callable[[T], R],
    items: Sequence[T],
    max_workers: int = 1,
) -> List[R]:
    """Apply ``fn`` to every item, returning results in input order.

    Args:
        fn: Job function; must not share mutable state across calls.
        items: Job inputs.
        max_workers: Thread count; 1 runs serially in the calling thread.

    Returns:
        List of results aligned with ``items``. The first job exception is
        re-raised after all jobs finish.
    """
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    results: List[Optional[R]] = [None] * len(items)
    errors: List[Optional[Exception]] = [None] * len(items)

    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {executor.submit(fn, item): idx for idx, item in enumerate(items)}
        for future in concurrent.futures.as_completed(future_to_index):
            idx = future_to_index[future]
            try:
                results[idx] = future.result()
            except Exception as e:
                errors[idx] = e

    for err in errors:
        if err is not None:
            raise err
    return list(results)  # type: ignore[arg-type]
