"""Synthetic paired structural/functional network datasets.

Every subject shares one planted block structure. The structural view is a
weighted stochastic block model and carries no class information; the class
signal lives in the functional view, where class-1 subjects get a raised
correlation between one designated pair of blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .clock import derive_seed
from .community import CommunityAssignment
from .config import GeneratorConfig
from .errors import InvariantError
from .graph_core import NetworkInstance


@dataclass(frozen=True)
class SyntheticDataset:
    instances: List[NetworkInstance]
    planted: CommunityAssignment

    @property
    def labels(self) -> List[int]:
        return [inst.label for inst in self.instances]


def planted_blocks(n: int, n_blocks: int) -> np.ndarray:
    """Equal-size contiguous blocks; the last block absorbs the remainder."""
    size = n // n_blocks
    return np.minimum(np.arange(n) // size, n_blocks - 1).astype(np.int64)


def sample_structural(
    blocks: np.ndarray,
    p_in: float,
    p_out: float,
    w_scale: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Symmetric weighted SBM draw with zero diagonal."""
    n = blocks.shape[0]
    same = blocks[:, None] == blocks[None, :]
    prob = np.where(same, p_in, p_out)
    edges = rng.random((n, n)) < prob
    weights = rng.uniform(0.0, w_scale, size=(n, n))
    upper = np.triu(edges * weights, k=1)
    return upper + upper.T


def baseline_correlation(blocks: np.ndarray, config: GeneratorConfig, label: int) -> np.ndarray:
    same = blocks[:, None] == blocks[None, :]
    base = np.where(same, config.within_corr, config.between_corr)
    if label == 1 and config.signal > 0:
        a, b = config.signal_blocks
        in_a, in_b = blocks == a, blocks == b
        shifted = (in_a[:, None] & in_b[None, :]) | (in_b[:, None] & in_a[None, :])
        base = base + config.signal * shifted
    return base


def sample_functional(
    blocks: np.ndarray,
    config: GeneratorConfig,
    label: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Baseline correlations plus symmetric Gaussian noise of std ``config.noise``.

    Off-diagonal noise is (G + G^T) / sqrt(2) scaled by ``noise``; the result
    is clipped to [-1, 1] and its diagonal set to 1.
    """
    n = blocks.shape[0]
    g = rng.standard_normal((n, n))
    f = baseline_correlation(blocks, config, label) + config.noise * (g + g.T) / np.sqrt(2.0)
    f = np.clip(f, -1.0, 1.0)
    np.fill_diagonal(f, 1.0)
    return f


def generate_dataset(config: GeneratorConfig) -> SyntheticDataset:
    """Draw ``per_class`` subjects of each class.

    Subject k uses its own generator seeded by ``derive_seed(seed, "instance", k)``,
    so the dataset is bitwise-reproducible and subjects are independent.
    """
    blocks = planted_blocks(config.n, config.communities_true)
    labels = [0] * config.per_class + [1] * config.per_class
    instances = []
    for k, label in enumerate(labels):
        rng = np.random.default_rng(derive_seed(config.seed, "instance", k))
        structural = sample_structural(blocks, config.p_in, config.p_out, config.w_scale, rng)
        functional = sample_functional(blocks, config, label, rng)
        instances.append(NetworkInstance(f"sub{k:03d}", structural, functional, label))
    return SyntheticDataset(instances, CommunityAssignment(blocks, config.communities_true))


def stratified_split(
    labels: Sequence[int],
    train_fraction: float,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded class-stratified split into sorted (train, test) index arrays.

    Each class contributes round(fraction * size) subjects to training,
    clamped so it keeps at least one subject on each side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels_arr = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    train: List[int] = []
    test: List[int] = []
    for cls in np.unique(labels_arr):
        members = np.flatnonzero(labels_arr == cls)
        if members.size < 2:
            raise InvariantError(f"class {int(cls)} has {members.size} member(s); need >= 2 to split")
        shuffled = rng.permutation(members)
        k = int(np.floor(train_fraction * members.size + 0.5))
        k = min(max(k, 1), members.size - 1)
        train.extend(shuffled[:k].tolist())
        test.extend(shuffled[k:].tolist())
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


def split_dataset(
    dataset: Sequence[NetworkInstance],
    train_fraction: float,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray]:
    return stratified_split([inst.label for inst in dataset], train_fraction, seed)
