"""Shared fixtures for the scpgcn test suite."""

from typing import List

import pytest

from scpgcn.config import GeneratorConfig, TrainConfig
from scpgcn.graph_core import NetworkInstance
from scpgcn.synthdata import generate_dataset


@pytest.fixture
def tiny_dataset() -> List[NetworkInstance]:
    """Eight 12-node subjects, four per class, two planted blocks."""
    config = GeneratorConfig(n=12, communities_true=2, per_class=4, signal=0.6, noise=0.1, seed=3)
    return generate_dataset(config).instances


@pytest.fixture
def tiny_config() -> TrainConfig:
    """A small, fast encoder configuration."""
    return TrainConfig(widths=(6, 5), embedding_dim=3, epochs=3, communities=2, seed=11)
