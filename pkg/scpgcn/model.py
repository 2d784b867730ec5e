"""Graph-convolutional encoder and the losses it is trained with.

Encoder: two renormalized graph convolutions followed by a per-node fully
connected layer with shared weights and no output activation::

    H1 = act(P X Theta0)
    H2 = act(P H1 Theta1)
    Z  = H2 W + b
    g  = rows of Z concatenated (row-major)

Losses: pairwise contrastive loss on graph embeddings, a community-preserving
loss on node embeddings, and their sum over a batch. Backward passes for each
piece live next to the forward so the training module can chain them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .community import CommunityAssignment, community_centers
from .errors import DimensionError, InvariantError, MissingAssignmentError, NonFiniteError
from .linalg import as_dense

if TYPE_CHECKING:
    from .config import TrainConfig

MODEL_FORMAT = "scpgcn-model"
MODEL_FORMAT_VERSION = 1
ENCODER_PARAMS = ("theta0", "theta1", "fc_weight", "fc_bias")
HEAD_PARAMS = ("head_weight", "head_bias")


# ============================================================================
# ACTIVATIONS
# ============================================================================

def activate(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation: {kind}")


def activation_grad(pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    """Derivative of the activation at ``pre``; ReLU's subgradient at 0 is 0."""
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - post * post
    raise ValueError(f"unknown activation: {kind}")


# ============================================================================
# PARAMETERS
# ============================================================================

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScpGcnModel:
    """Encoder parameters, immutable once built.

    ``head_weight``/``head_bias`` hold the sigmoid classifier used by the
    non-Siamese variants; they are None for Siamese models.
    """

    theta0: np.ndarray
    theta1: np.ndarray
    fc_weight: np.ndarray
    fc_bias: np.ndarray
    activation: str = "relu"
    head_weight: Optional[np.ndarray] = None
    head_bias: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if (self.head_weight is None) != (self.head_bias is None):
            raise InvariantError("head_weight and head_bias must be set together")
        for name in self.parameter_names():
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        t0, t1, w, b = self.theta0, self.theta1, self.fc_weight, self.fc_bias
        if t0.ndim != 2 or t1.ndim != 2 or w.ndim != 2 or b.ndim != 1:
            raise DimensionError("theta0, theta1, fc_weight must be matrices and fc_bias a vector")
        if t0.shape[1] != t1.shape[0]:
            raise DimensionError(f"theta0 {t0.shape} does not feed theta1 {t1.shape}")
        if t1.shape[1] != w.shape[0]:
            raise DimensionError(f"theta1 {t1.shape} does not feed fc_weight {w.shape}")
        if b.shape[0] != w.shape[1]:
            raise DimensionError(f"fc_bias {b.shape} does not match fc_weight {w.shape}")
        if (self.head_weight is None) != (self.head_bias is None):
            raise InvariantError("head_weight and head_bias must be set together")
        if self.head_bias is not None and self.head_bias.shape != (1,):
            raise DimensionError("head_bias must have shape (1,)")
        if self.activation not in ("relu", "tanh"):
            raise InvariantError(f"unknown activation: {self.activation}")
        for name in self.parameter_names():
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteError(name)

    @property
    def has_head(self) -> bool:
        return self.head_weight is not None

    @property
    def n_features(self) -> int:
        return int(self.theta0.shape[0])

    @property
    def widths(self) -> Tuple[int, int]:
        return int(self.theta0.shape[1]), int(self.theta1.shape[1])

    @property
    def embedding_dim(self) -> int:
        return int(self.fc_weight.shape[1])

    def parameter_names(self) -> Tuple[str, ...]:
        return ENCODER_PARAMS + (HEAD_PARAMS if self.head_weight is not None else ())

    def parameters(self) -> Dict[str, np.ndarray]:
        """Writable copies of every parameter, keyed by name."""
        return {name: np.array(getattr(self, name)) for name in self.parameter_names()}

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "ScpGcnModel":
        """A new model with the given parameters replacing the current ones."""
        current = {name: getattr(self, name) for name in self.parameter_names()}
        unknown = set(params) - set(current)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        for name, value in params.items():
            if np.shape(value) != current[name].shape:
                raise DimensionError(f"{name}: shape {np.shape(value)} != {current[name].shape}")
        current.update(params)
        return ScpGcnModel(activation=self.activation, **current)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(
    n_features: int,
    widths: Tuple[int, int] = (256, 128),
    embedding_dim: int = 64,
    activation: str = "relu",
    seed: int = 0,
    head_nodes: Optional[int] = None,
) -> ScpGcnModel:
    """Glorot-uniform initialization; zero biases.

    Args:
        n_features: Input feature width p (the node count when features are
            adjacency rows).
        head_nodes: When set, also create a sigmoid head over graph
            embeddings of ``head_nodes * embedding_dim`` entries.
    """
    rng = np.random.default_rng(seed)
    h1, h2 = widths
    head_weight = head_bias = None
    theta0 = _glorot(rng, n_features, h1)
    theta1 = _glorot(rng, h1, h2)
    fc_weight = _glorot(rng, h2, embedding_dim)
    if head_nodes is not None:
        head_weight = _glorot(rng, head_nodes * embedding_dim, 1)[:, 0]
        head_bias = np.zeros(1)
    return ScpGcnModel(
        theta0=theta0,
        theta1=theta1,
        fc_weight=fc_weight,
        fc_bias=np.zeros(embedding_dim),
        activation=activation,
        head_weight=head_weight,
        head_bias=head_bias,
    )


# ============================================================================
# FORWARD / BACKWARD
# ============================================================================

@dataclass(frozen=True, eq=False)
class EmbeddingResult:
    """Node embeddings Z (n x d) and the graph embedding g = vec(Z)."""

    node_embeddings: np.ndarray

    @property
    def graph_embedding(self) -> np.ndarray:
        return self.node_embeddings.reshape(-1)

    @property
    def n(self) -> int:
        return int(self.node_embeddings.shape[0])


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Intermediates of one encoder pass, kept for the backward pass."""

    px: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    ph1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    z: np.ndarray


def _check_finite(x: np.ndarray, layer: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(layer, f"non-finite activations in {layer}")
    return x


def forward_trace(
    p: np.ndarray,
    x: np.ndarray,
    model: ScpGcnModel,
    px: Optional[np.ndarray] = None,
) -> ForwardTrace:
    """Run the encoder keeping intermediates. ``px`` may carry a precomputed P @ X."""
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionError(f"propagation matrix must be square, got {p.shape}")
    if x.ndim != 2 or x.shape[0] != p.shape[0]:
        raise DimensionError(f"features {x.shape} do not match propagation matrix {p.shape}")
    if x.shape[1] != model.n_features:
        raise DimensionError(f"feature width {x.shape[1]} != model input width {model.n_features}")
    act = model.activation
    if px is None:
        px = p @ x
    a1 = _check_finite(px @ model.theta0, "conv1")
    h1 = activate(a1, act)
    ph1 = p @ h1
    a2 = _check_finite(ph1 @ model.theta1, "conv2")
    h2 = activate(a2, act)
    z = _check_finite(h2 @ model.fc_weight + model.fc_bias, "fc")
    return ForwardTrace(px=px, a1=a1, h1=h1, ph1=ph1, a2=a2, h2=h2, z=z)


def gcn_forward(p: np.ndarray, x: np.ndarray, model: ScpGcnModel) -> EmbeddingResult:
    """Embed one graph: propagation matrix ``p`` (n x n), features ``x`` (n x p)."""
    p = as_dense(p, "propagation matrix")
    x = as_dense(x, "features")
    return EmbeddingResult(forward_trace(p, x, model).z)


def encoder_backward(
    trace: ForwardTrace,
    p: np.ndarray,
    model: ScpGcnModel,
    dz: np.ndarray,
) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. encoder parameters given dL/dZ."""
    act = model.activation
    g_fc_weight = trace.h2.T @ dz
    g_fc_bias = dz.sum(axis=0)
    da2 = (dz @ model.fc_weight.T) * activation_grad(trace.a2, trace.h2, act)
    g_theta1 = trace.ph1.T @ da2
    da1 = (p.T @ (da2 @ model.theta1.T)) * activation_grad(trace.a1, trace.h1, act)
    g_theta0 = trace.px.T @ da1
    return {
        "theta0": g_theta0,
        "theta1": g_theta1,
        "fc_weight": g_fc_weight,
        "fc_bias": g_fc_bias,
    }


# ============================================================================
# LOSSES
# ============================================================================

def _check_pair_vectors(g_i: np.ndarray, g_j: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    g_i = np.asarray(g_i, dtype=np.float64).reshape(-1)
    g_j = np.asarray(g_j, dtype=np.float64).reshape(-1)
    if g_i.shape != g_j.shape:
        raise DimensionError(f"graph embeddings differ in length: {g_i.size} vs {g_j.size}")
    return g_i, g_j


def contrastive_loss(g_i: np.ndarray, g_j: np.ndarray, y: int, margin: float) -> float:
    """(y/2) ||g_i - g_j||^2 + ((1-y)/2) max(0, m - ||g_i - g_j||)^2."""
    if margin <= 0:
        raise ValueError("margin must be > 0")
    g_i, g_j = _check_pair_vectors(g_i, g_j)
    dist = float(np.linalg.norm(g_i - g_j))
    hinge = max(0.0, margin - dist)
    return 0.5 * y * dist * dist + 0.5 * (1 - y) * hinge * hinge


def contrastive_grad(
    g_i: np.ndarray, g_j: np.ndarray, y: int, margin: float
) -> Tuple[np.ndarray, np.ndarray]:
    """dL/dg_i and dL/dg_j of ``contrastive_loss``.

    A zero-distance different-class pair has zero gradient.
    """
    g_i, g_j = _check_pair_vectors(g_i, g_j)
    diff = g_i - g_j
    grad = y * diff
    if y == 0:
        dist = float(np.linalg.norm(diff))
        if 0.0 < dist < margin:
            grad = -(margin - dist) / dist * diff
        else:
            grad = np.zeros_like(diff)
    return grad, -grad


def community_preserving_loss(
    z: np.ndarray,
    assignment: CommunityAssignment,
    alpha: float,
    beta: float,
) -> float:
    """alpha * intra-community spread - beta * inter-center separation.

    The inter term runs over unordered community pairs c < c'. The value
    may be negative.
    """
    centers = community_centers(z, assignment)
    sizes = assignment.sizes
    resid = z - centers[assignment.membership]
    intra = float(np.sum(np.sum(resid * resid, axis=1) / sizes[assignment.membership]))
    inter = 0.0
    c = assignment.n_communities
    if c > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        pair_d2 = np.einsum("ijk,ijk->ij", diff, diff)
        inter = float(np.sum(np.triu(pair_d2, k=1)))
    return alpha * intra - beta * inter


def community_preserving_grad(
    z: np.ndarray,
    assignment: CommunityAssignment,
    alpha: float,
    beta: float,
) -> np.ndarray:
    """dL/dZ of ``community_preserving_loss``."""
    centers = community_centers(z, assignment)
    sizes = assignment.sizes.astype(np.float64)
    member = assignment.membership
    dz = 2.0 * alpha * (z - centers[member]) / sizes[member][:, None]
    c = assignment.n_communities
    if c > 1 and beta != 0.0:
        d_centers = -2.0 * beta * (c * centers - centers.sum(axis=0, keepdims=True))
        dz = dz + d_centers[member] / sizes[member][:, None]
    return dz


def head_logit(g: np.ndarray, model: ScpGcnModel) -> float:
    if model.head_weight is None or model.head_bias is None:
        raise InvariantError("model has no classifier head")
    if g.shape != model.head_weight.shape:
        raise DimensionError(f"graph embedding {g.shape} != head width {model.head_weight.shape}")
    return float(g @ model.head_weight + model.head_bias[0])


def bce_with_logit(logit: float, y: int) -> Tuple[float, float]:
    """Binary cross entropy of sigmoid(logit) against y, and its derivative in the logit."""
    loss = float(np.logaddexp(0.0, logit) - y * logit)
    prob = float(0.5 * (1.0 + np.tanh(0.5 * logit)))
    return loss, prob - y


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss and its two components."""

    total: float
    contrastive: float
    community: float


def total_loss(
    pairs: Iterable[Tuple[int, int, int]],
    embeddings: Mapping[int, EmbeddingResult],
    assignments: Mapping[int, CommunityAssignment],
    config: "TrainConfig",
) -> LossBreakdown:
    """Sum of contrastive terms over pairs plus one community term per distinct instance.

    Each instance contributes its community term once per batch, however many
    pairs contain it. Alpha and beta are zero when the config disables the
    community term.
    """
    alpha, beta, margin = config.effective_alpha, config.effective_beta, config.margin
    contrastive = 0.0
    seen: Dict[int, None] = {}
    for i, j, y in pairs:
        contrastive += contrastive_loss(
            embeddings[i].graph_embedding, embeddings[j].graph_embedding, y, margin
        )
        seen.setdefault(i)
        seen.setdefault(j)
    community = 0.0
    for k in seen:
        if k not in assignments:
            raise MissingAssignmentError(f"no community assignment for instance {k}")
        community += community_preserving_loss(
            embeddings[k].node_embeddings, assignments[k], alpha, beta
        )
    return LossBreakdown(total=contrastive + community, contrastive=contrastive, community=community)


# ============================================================================
# PERSISTENCE
# ============================================================================

def model_to_dict(model: ScpGcnModel) -> Dict[str, object]:
    params = {
        name: {"shape": list(getattr(model, name).shape), "values": getattr(model, name).reshape(-1).tolist()}
        for name in model.parameter_names()
    }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "n_features": model.n_features,
        "widths": list(model.widths),
        "d": model.embedding_dim,
        "activation": model.activation,
        "parameters": params,
    }


def model_from_dict(data: Mapping[str, object]) -> ScpGcnModel:
    if not isinstance(data, Mapping):
        raise InvariantError("model checkpoint must be a JSON object")
    if data.get("format") != MODEL_FORMAT:
        raise InvariantError(f"not a model checkpoint (format={data.get('format')!r})")
    raw = data.get("parameters")
    if not isinstance(raw, dict):
        raise InvariantError("checkpoint parameters must be an object")
    arrays: Dict[str, np.ndarray] = {}
    for name, entry in raw.items():
        if name not in ENCODER_PARAMS + HEAD_PARAMS:
            raise InvariantError(f"checkpoint has unknown parameter {name!r}")
        if not isinstance(entry, dict) or "values" not in entry or "shape" not in entry:
            raise InvariantError(f"{name}: checkpoint entry needs 'shape' and 'values'")
        try:
            values = np.asarray(entry["values"], dtype=np.float64)
            shape = tuple(int(s) for s in entry["shape"])
        except (TypeError, ValueError) as e:
            raise InvariantError(f"{name}: malformed checkpoint entry ({e})") from e
        if values.size != int(np.prod(shape)):
            raise DimensionError(f"{name}: {values.size} values for shape {shape}")
        arrays[name] = values.reshape(shape)
    missing = [n for n in ENCODER_PARAMS if n not in arrays]
    if missing:
        raise InvariantError(f"checkpoint lacks parameters: {missing}")
    model = ScpGcnModel(activation=str(data.get("activation", "relu")), **arrays)
    widths: Sequence[int] = data.get("widths", list(model.widths))  # type: ignore[assignment]
    if tuple(widths) != model.widths or data.get("d", model.embedding_dim) != model.embedding_dim:
        raise DimensionError("checkpoint header disagrees with parameter shapes")
    return model


def save_model(model: ScpGcnModel, path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f)
        f.write("\n")


def load_model(path: str) -> ScpGcnModel:
    with open(path, encoding="utf-8") as f:
        return model_from_dict(json.load(f))
