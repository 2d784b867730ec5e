"""Siamese training of the encoder.

Training works on pairs of subjects: y = 1 for a same-class pair, 0 for a
different-class pair. Each optimizer step takes one pair (or one subject in
the single-branch baseline), backpropagates the contrastive term and both
subjects' community-preserving terms through the shared encoder, and
applies an Adam update.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .clock import derive_seed
from .community import CommunityAssignment, CommunityCache, spectral_communities
from .config import TrainConfig
from .dataio import write_csv
from .errors import DimensionError, InvariantError, MissingAssignmentError, NonFiniteError
from .graph_core import NetworkInstance, as_structure, renormalized_propagation, scale_structure
from .log import EventLog, null_event_log
from .model import (
    EmbeddingResult,
    LossBreakdown,
    ScpGcnModel,
    bce_with_logit,
    community_preserving_grad,
    community_preserving_loss,
    contrastive_grad,
    contrastive_loss,
    encoder_backward,
    forward_trace,
    head_logit,
    init_model,
)
from .parallel import run_jobs

__all__ = [
    "AdamState",
    "EpochStats",
    "GradientSet",
    "Pair",
    "PairBatch",
    "PreparedInstance",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "block_terms",
    "compute_assignments",
    "embed_dataset",
    "loss_gradients",
    "make_pairs",
    "prepare_instance",
    "train",
    "write_history_csv",
]


# ============================================================================
# PAIRS
# ============================================================================

class Pair(NamedTuple):
    i: int
    j: int
    y: int


@dataclass(frozen=True)
class PairBatch:
    """Unordered subject pairs with same-class flags."""

    pairs: Tuple[Pair, ...]

    def __post_init__(self) -> None:
        seen = set()
        for p in self.pairs:
            if p.i == p.j:
                raise InvariantError(f"pair joins instance {p.i} with itself")
            key = (min(p.i, p.j), max(p.i, p.j))
            if key in seen:
                raise InvariantError(f"pair {key} appears twice")
            seen.add(key)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, idx: int) -> Pair:
        return self.pairs[idx]

    def check_labels(self, labels: Sequence[int]) -> None:
        for p in self.pairs:
            if p.y != int(labels[p.i] == labels[p.j]):
                raise InvariantError(f"pair ({p.i}, {p.j}) has y={p.y} inconsistent with labels")


def make_pairs(labels: Sequence[int]) -> PairBatch:
    """Every unordered pair of indices, y = 1 when the labels agree."""
    labels = [int(x) for x in labels]
    if len(labels) < 2:
        raise InvariantError("need at least 2 instances to form pairs")
    return PairBatch(
        tuple(
            Pair(i, j, int(labels[i] == labels[j]))
            for i, j in itertools.combinations(range(len(labels)), 2)
        )
    )


# ============================================================================
# INSTANCE PREPARATION
# ============================================================================

@dataclass(frozen=True, eq=False)
class PreparedInstance:
    """Encoder inputs for one subject under a view assignment."""

    id: str
    label: int
    structure: np.ndarray
    propagation: np.ndarray
    features: np.ndarray
    px: np.ndarray

    @property
    def n(self) -> int:
        return int(self.propagation.shape[0])


def prepare_instance(instance: NetworkInstance, config: TrainConfig) -> PreparedInstance:
    """Choose structure and feature views and precompute P and P @ X."""
    structure = as_structure(instance.view(config.view_structure), config.view_structure)
    structure = scale_structure(structure, config.structure_scaling)
    features = np.asarray(instance.view(config.view_features))
    propagation = renormalized_propagation(structure)
    return PreparedInstance(
        id=instance.id,
        label=instance.label,
        structure=structure,
        propagation=propagation,
        features=features,
        px=propagation @ features,
    )


def compute_assignments(
    prepared: Sequence[PreparedInstance],
    config: TrainConfig,
    cache: Optional[CommunityCache] = None,
    jobs: int = 1,
) -> Dict[int, CommunityAssignment]:
    """Cluster every subject's structure view into ``config.communities`` communities."""
    cache = cache if cache is not None else CommunityCache()

    def one(inst: PreparedInstance) -> CommunityAssignment:
        key = (inst.id, config.communities, config.seed, config.view_structure, config.structure_scaling)
        return cache.get_or_compute(
            key,
            lambda: spectral_communities(
                inst.structure,
                config.communities,
                derive_seed(config.seed, "kmeans", inst.id),
                eigensolver=config.eigensolver,
            ),
        )

    return dict(enumerate(run_jobs(one, list(prepared), max_workers=jobs)))


# ============================================================================
# GRADIENTS
# ============================================================================

@dataclass
class GradientSet:
    """One gradient array per model parameter, keyed like ``ScpGcnModel.parameters``."""

    grads: Dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, model: ScpGcnModel) -> "GradientSet":
        return cls({name: np.zeros_like(value) for name, value in model.parameters().items()})

    def __add__(self, other: "GradientSet") -> "GradientSet":
        if set(self.grads) != set(other.grads):
            raise DimensionError("gradient sets cover different parameters")
        return GradientSet({k: self.grads[k] + other.grads[k] for k in self.grads})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]

    def check(self, model: ScpGcnModel) -> None:
        for name, value in model.parameters().items():
            g = self.grads.get(name)
            if g is None or g.shape != value.shape:
                raise DimensionError(f"gradient for {name} missing or misshapen")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"gradient of {name}")

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(g))) if g.size else 0.0) for g in self.grads.values())


def _require_assignment(
    assignments: Optional[Mapping[int, CommunityAssignment]], k: int
) -> CommunityAssignment:
    if assignments is None or k not in assignments:
        raise MissingAssignmentError(f"no community assignment for instance {k}")
    return assignments[k]


def _finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise NonFiniteError(term)
    return value


def _community_term(
    z: np.ndarray,
    k: int,
    assignments: Optional[Mapping[int, CommunityAssignment]],
    config: TrainConfig,
) -> Tuple[float, np.ndarray]:
    alpha, beta = config.effective_alpha, config.effective_beta
    if alpha == 0.0 and beta == 0.0:
        return 0.0, np.zeros_like(z)
    assignment = _require_assignment(assignments, k)
    loss = _finite(community_preserving_loss(z, assignment, alpha, beta), f"community loss of instance {k}")
    return loss, community_preserving_grad(z, assignment, alpha, beta)


def pair_terms(
    pair: Tuple[int, int, int],
    instances: Sequence[PreparedInstance],
    assignments: Optional[Mapping[int, CommunityAssignment]],
    model: ScpGcnModel,
    config: TrainConfig,
    *,
    with_community: bool = True,
) -> Tuple[LossBreakdown, GradientSet]:
    """Loss breakdown and parameter gradients for one Siamese pair.

    ``with_community=False`` leaves out both community terms, for callers
    that add them once per distinct instance.
    """
    i, j, y = pair
    a, b = instances[i], instances[j]
    trace_a = forward_trace(a.propagation, a.features, model, px=a.px)
    trace_b = forward_trace(b.propagation, b.features, model, px=b.px)
    g_a, g_b = trace_a.z.reshape(-1), trace_b.z.reshape(-1)

    contrastive = _finite(contrastive_loss(g_a, g_b, y, config.margin), "contrastive loss")
    dg_a, dg_b = contrastive_grad(g_a, g_b, y, config.margin)
    if with_community:
        cp_a, dcp_a = _community_term(trace_a.z, i, assignments, config)
        cp_b, dcp_b = _community_term(trace_b.z, j, assignments, config)
    else:
        cp_a, dcp_a = 0.0, np.zeros_like(trace_a.z)
        cp_b, dcp_b = 0.0, np.zeros_like(trace_b.z)

    dz_a = dg_a.reshape(trace_a.z.shape) + dcp_a
    dz_b = dg_b.reshape(trace_b.z.shape) + dcp_b
    grads_a = encoder_backward(trace_a, a.propagation, model, dz_a)
    grads_b = encoder_backward(trace_b, b.propagation, model, dz_b)
    grads = {name: grads_a[name] + grads_b[name] for name in grads_a}
    if model.has_head:
        grads["head_weight"] = np.zeros_like(model.head_weight)
        grads["head_bias"] = np.zeros(1)
    community = cp_a + cp_b
    breakdown = LossBreakdown(total=contrastive + community, contrastive=contrastive, community=community)
    return breakdown, GradientSet(grads)


def single_terms(
    k: int,
    instances: Sequence[PreparedInstance],
    assignments: Optional[Mapping[int, CommunityAssignment]],
    model: ScpGcnModel,
    config: TrainConfig,
) -> Tuple[LossBreakdown, GradientSet]:
    """Loss and gradients for the single-branch baseline: BCE through the sigmoid head."""
    inst = instances[k]
    trace = forward_trace(inst.propagation, inst.features, model, px=inst.px)
    g = trace.z.reshape(-1)
    logit = head_logit(g, model)
    bce, dlogit = bce_with_logit(logit, inst.label)
    bce = _finite(bce, "binary cross entropy")
    cp, dcp = _community_term(trace.z, k, assignments, config)
    dz = (dlogit * model.head_weight).reshape(trace.z.shape) + dcp  # type: ignore[operator]
    grads = encoder_backward(trace, inst.propagation, model, dz)
    grads["head_weight"] = dlogit * g
    grads["head_bias"] = np.array([dlogit])
    return LossBreakdown(total=bce + cp, contrastive=bce, community=cp), GradientSet(grads)


def loss_gradients(
    pair: Tuple[int, int, int],
    instances: Sequence[PreparedInstance],
    assignments: Optional[Mapping[int, CommunityAssignment]],
    model: ScpGcnModel,
    config: TrainConfig,
) -> Tuple[float, GradientSet]:
    """Total loss of one pair and its gradients w.r.t. every shared parameter.

    Both branches run through the same parameters, so their gradients sum.
    """
    breakdown, grads = pair_terms(pair, instances, assignments, model, config)
    return breakdown.total, grads


def instance_community_terms(
    k: int,
    instances: Sequence[PreparedInstance],
    assignments: Optional[Mapping[int, CommunityAssignment]],
    model: ScpGcnModel,
    config: TrainConfig,
) -> Tuple[float, GradientSet]:
    """Community loss of one instance and its parameter gradients."""
    inst = instances[k]
    trace = forward_trace(inst.propagation, inst.features, model, px=inst.px)
    cp, dcp = _community_term(trace.z, k, assignments, config)
    grads = encoder_backward(trace, inst.propagation, model, dcp)
    if model.has_head:
        grads["head_weight"] = np.zeros_like(model.head_weight)
        grads["head_bias"] = np.zeros(1)
    return cp, GradientSet(grads)


def block_terms(
    pairs: Sequence[Tuple[int, int, int]],
    instances: Sequence[PreparedInstance],
    assignments: Optional[Mapping[int, CommunityAssignment]],
    model: ScpGcnModel,
    config: TrainConfig,
    *,
    jobs: int = 1,
) -> Tuple[LossBreakdown, GradientSet]:
    """Summed loss and gradients of a block of pairs.

    Contrastive terms are summed over pairs; each distinct instance in the
    block adds its community term once.
    """
    contrastive_parts = run_jobs(
        partial(pair_terms, instances=instances, assignments=assignments, model=model, config=config,
                with_community=False),
        list(pairs),
        max_workers=jobs,
    )
    members = sorted({k for i, j, _ in pairs for k in (i, j)})
    community_parts: List[Tuple[float, GradientSet]] = []
    if config.effective_alpha != 0.0 or config.effective_beta != 0.0:
        community_parts = run_jobs(
            partial(instance_community_terms, instances=instances, assignments=assignments, model=model,
                    config=config),
            members,
            max_workers=jobs,
        )
    grads = GradientSet.zeros_like(model)
    contrastive = 0.0
    for breakdown, extra in contrastive_parts:
        contrastive += breakdown.contrastive
        grads = grads + extra
    community = 0.0
    for cp, extra in community_parts:
        community += cp
        grads = grads + extra
    return LossBreakdown(total=contrastive + community, contrastive=contrastive, community=community), grads


# ============================================================================
# ADAM
# ============================================================================

@dataclass
class AdamState:
    """First and second moment estimates, keyed by parameter name."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: Optional[int] = None,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new parameters and state.

    ``t`` defaults to ``state.t + 1``.
    """
    t = state.t + 1 if t is None else int(t)
    if t < 1:
        raise ValueError("Adam step counter must be >= 1")
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads[name])
        if g.shape != np.shape(p):
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter shape {np.shape(p)}")
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


# ============================================================================
# TRAINING LOOP
# ============================================================================

@dataclass(frozen=True)
class EpochStats:
    """Per-epoch mean losses.

    In single-branch mode ``mean_contrastive`` holds the binary cross entropy.
    """

    epoch: int
    mean_loss: float
    mean_contrastive: float
    mean_cp: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "epoch": self.epoch,
            "mean_loss": self.mean_loss,
            "mean_contrastive": self.mean_contrastive,
            "mean_cp": self.mean_cp,
        }


@dataclass(frozen=True)
class TrainResult:
    model: ScpGcnModel
    history: List[EpochStats]
    assignments: Optional[Dict[int, CommunityAssignment]] = None


def train(
    dataset: Sequence[NetworkInstance],
    config: TrainConfig,
    *,
    cache: Optional[CommunityCache] = None,
    event_log: Optional[EventLog] = None,
    jobs: int = 1,
) -> TrainResult:
    """Train an encoder on ``dataset`` (an already chosen training split).

    Siamese mode steps once per pair; single-branch mode steps once per
    subject. Units are shuffled every epoch with a seed derived from
    ``config.seed`` and the epoch number. With ``accumulate_then_step`` the
    gradients of ``accumulate_block`` units are evaluated (concurrently when
    ``jobs > 1``), summed and applied in one step, which changes results.
    Within a block of pairs each subject adds its community term once.
    Gradients are checked for finiteness before every step.
    """
    event_log = event_log or null_event_log()
    if not dataset:
        raise InvariantError("empty training set")
    prepared = [prepare_instance(inst, config) for inst in dataset]
    n = prepared[0].n
    for inst in prepared:
        if inst.n != n or inst.features.shape[1] != prepared[0].features.shape[1]:
            raise DimensionError(f"instance {inst.id} has {inst.n} nodes, expected {n}")

    assignments: Optional[Dict[int, CommunityAssignment]] = None
    if config.use_cp and (config.alpha > 0 or config.beta > 0):
        assignments = compute_assignments(prepared, config, cache, jobs=jobs)
        event_log.emit(
            "communities_computed",
            instances=len(assignments),
            communities=config.communities,
        )

    model = init_model(
        n_features=prepared[0].features.shape[1],
        widths=config.widths,
        embedding_dim=config.embedding_dim,
        activation=config.activation,
        seed=derive_seed(config.seed, "init"),
        head_nodes=None if config.use_siamese else n,
    )

    units: List[object]
    if config.use_siamese:
        units = list(make_pairs([inst.label for inst in prepared]))
        if not units:
            raise InvariantError("no training pairs")
    else:
        units = list(range(len(prepared)))

    def terms(unit: object, current: ScpGcnModel) -> Tuple[LossBreakdown, GradientSet]:
        if config.use_siamese:
            return pair_terms(unit, prepared, assignments, current, config)  # type: ignore[arg-type]
        return single_terms(unit, prepared, assignments, current, config)  # type: ignore[arg-type]

    block = config.accumulate_block if config.accumulate_then_step else 1
    state = AdamState()
    history: List[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng(derive_seed(config.seed, "shuffle", epoch))
        order = rng.permutation(len(units))
        totals = np.zeros(3)
        for start in range(0, len(order), block):
            chunk = [units[k] for k in order[start:start + block]]
            if config.use_siamese and block > 1:
                results = [
                    block_terms(chunk, prepared, assignments, model, config, jobs=jobs)  # type: ignore[arg-type]
                ]
            else:
                results = run_jobs(partial(terms, current=model), chunk, max_workers=jobs if block > 1 else 1)
            grads = GradientSet.zeros_like(model)
            for breakdown, extra in results:
                totals += (breakdown.total, breakdown.contrastive, breakdown.community)
                grads = grads + extra
            grads.check(model)
            params, state = adam_step(
                model.parameters(),
                grads.grads,
                state,
                config.learning_rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_eps,
            )
            model = model.with_parameters(params)
        means = totals / len(units)
        if not np.all(np.isfinite(means)):
            raise NonFiniteError("epoch loss", f"non-finite mean loss at epoch {epoch}")
        stats = EpochStats(epoch, float(means[0]), float(means[1]), float(means[2]))
        history.append(stats)
        event_log.emit("epoch_end", **stats.to_dict())

    event_log.emit(
        "training_complete",
        epochs=config.epochs,
        steps=state.t,
        final_loss=history[-1].mean_loss,
    )
    return TrainResult(model=model, history=history, assignments=assignments)


def embed_dataset(
    model: ScpGcnModel,
    instances: Sequence[NetworkInstance],
    config: TrainConfig,
) -> List[EmbeddingResult]:
    """Embed every subject with the trained (shared) encoder under the config's views."""
    out = []
    for inst in instances:
        prep = prepare_instance(inst, config)
        out.append(EmbeddingResult(forward_trace(prep.propagation, prep.features, model, px=prep.px).z))
    return out


def write_history_csv(history: Sequence[EpochStats], path: str) -> None:
    """Write (epoch, mean_loss, mean_contrastive, mean_cp) rows."""
    write_csv(
        path,
        ["epoch", "mean_loss", "mean_contrastive", "mean_cp"],
        [[h.epoch, h.mean_loss, h.mean_contrastive, h.mean_cp] for h in history],
    )
