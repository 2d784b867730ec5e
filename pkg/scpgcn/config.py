"""Configuration schema for training, generation and experiments.

All configuration is explicit and typed. Values are validated in
``__post_init__`` and every config round-trips through ``to_dict`` /
``from_dict`` so a printed resolved config reproduces the run.

Precedence for CLI runs: dataclass defaults < JSON config file < flags.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple

from .errors import ConfigError

ViewKind = Literal["structural", "functional"]
Activation = Literal["relu", "tanh"]

VIEW_KINDS = ("structural", "functional")
ACTIVATIONS = ("relu", "tanh")
STRUCTURE_SCALINGS = ("none", "rowmax")
EIGENSOLVERS = ("lapack", "jacobi")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and variant flags for one training run."""

    # Loss weights
    alpha: float = 0.1
    beta: float = 1.0
    margin: float = 0.5

    # Optimization
    learning_rate: float = 0.01
    epochs: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    # Architecture
    communities: int = 4
    widths: Tuple[int, int] = (256, 128)
    embedding_dim: int = 64
    activation: Activation = "relu"

    # View assignment (structure drives convolution, features feed H0)
    view_structure: ViewKind = "structural"
    view_features: ViewKind = "functional"
    structure_scaling: Literal["none", "rowmax"] = "none"

    # Ablation flags
    use_siamese: bool = True
    use_cp: bool = True

    # Determinism
    seed: int = 1337

    # Execution
    eigensolver: Literal["lapack", "jacobi"] = "lapack"
    accumulate_then_step: bool = False
    accumulate_block: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.margin <= 0:
            raise ConfigError("margin must be > 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.communities < 1:
            raise ConfigError("communities must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if len(self.widths) != 2 or min(self.widths) < 1:
            raise ConfigError("widths must be two positive layer widths")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Invalid activation: {self.activation}")
        for name in ("view_structure", "view_features"):
            if getattr(self, name) not in VIEW_KINDS:
                raise ConfigError(f"Invalid {name}: {getattr(self, name)}")
        if self.structure_scaling not in STRUCTURE_SCALINGS:
            raise ConfigError(f"Invalid structure_scaling: {self.structure_scaling}")
        if self.eigensolver not in EIGENSOLVERS:
            raise ConfigError(f"Invalid eigensolver: {self.eigensolver}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError("adam_eps must be > 0")
        if self.accumulate_block < 1:
            raise ConfigError("accumulate_block must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    @property
    def effective_alpha(self) -> float:
        """Alpha as used by the losses; zero when the community term is off."""
        return self.alpha if self.use_cp else 0.0

    @property
    def effective_beta(self) -> float:
        return self.beta if self.use_cp else 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Convert to JSON-serializable dict."""
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        """Create from dictionary, rejecting unknown keys."""
        return cls(**_checked_kwargs(cls, data))

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        """Return a copy with the given fields replaced (None values ignored)."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        _checked_kwargs(type(self), clean)
        return replace(self, **clean)


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic paired-network generator."""

    n: int = 90
    communities_true: int = 4
    p_in: float = 0.8
    p_out: float = 0.1
    w_scale: float = 1.0
    signal: float = 0.4
    noise: float = 0.2
    per_class: int = 20
    within_corr: float = 0.6
    between_corr: float = 0.1
    signal_blocks: Tuple[int, int] = (0, 1)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "signal_blocks", tuple(int(b) for b in self.signal_blocks))
        if not (0.0 <= self.p_out < self.p_in <= 1.0):
            raise ConfigError("need 0 <= p_out < p_in <= 1")
        if self.signal < 0 or self.noise < 0:
            raise ConfigError("signal and noise must be >= 0")
        if self.signal > 1:
            raise ConfigError("signal must lie in [0, 1]")
        if self.communities_true < 1 or self.n < self.communities_true:
            raise ConfigError("need 1 <= communities_true <= n")
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.w_scale <= 0:
            raise ConfigError("w_scale must be > 0")
        if len(self.signal_blocks) != 2 or not all(
            0 <= b < self.communities_true for b in self.signal_blocks
        ):
            raise ConfigError("signal_blocks must name two planted blocks")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["signal_blocks"] = list(self.signal_blocks)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GeneratorConfig":
        return cls(**_checked_kwargs(cls, data))


def _checked_kwargs(cls: type, data: Mapping[str, Any]) -> Dict[str, Any]:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown {cls.__name__} keys: {', '.join(unknown)}")
    return dict(data)


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Load a JSON config file into a plain dict (empty when path is None).

    The file may be flat or hold ``train`` / ``generator`` sections.
    """
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve_train_config(
    file_data: Mapping[str, Any],
    flag_overrides: Mapping[str, Any],
) -> TrainConfig:
    """Apply defaults < config file < explicit flags."""
    section = file_data.get("train", file_data)
    base = TrainConfig.from_dict({k: v for k, v in section.items() if k != "generator"})
    return base.with_overrides(**flag_overrides)


def resolve_generator_config(
    file_data: Mapping[str, Any],
    flag_overrides: Mapping[str, Any],
) -> GeneratorConfig:
    """Apply defaults < config file < explicit flags for the generator."""
    base = GeneratorConfig.from_dict(file_data.get("generator", {}))
    clean = {k: v for k, v in flag_overrides.items() if v is not None}
    _checked_kwargs(GeneratorConfig, clean)
    return replace(base, **clean)
