"""Evaluation harness: downstream classification, repeated experiments,
grid search and the ablation matrix.

Every experiment follows the same protocol: split the subjects, train an
encoder on the training part, embed every subject with the trained encoder,
fit a logistic classifier on the training embeddings and score the test
embeddings. Results are plain dataclasses that round-trip through JSON so
reports from different runs are directly comparable.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import accuracy_score
from sklearn.metrics import f1_score as sk_f1_score
from sklearn.model_selection import StratifiedKFold

from .clock import derive_seed
from .community import CommunityCache
from .config import TrainConfig
from .dataio import read_json, write_csv, write_json
from .errors import ConfigError, DimensionError, InvariantError
from .graph_core import NetworkInstance
from .log import EventLog, null_event_log
from .parallel import run_jobs
from .synthdata import split_dataset
from .training import embed_dataset, train

DEFAULT_REPEATS = 10
DEFAULT_TRAIN_FRACTION = 0.6
CLASSIFIER_ITERATIONS = 500
CLASSIFIER_LR = 0.1


# ============================================================================
# METRICS
# ============================================================================

def _binary_pair(preds: Sequence[int], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if p.shape != y.shape:
        raise DimensionError(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        raise DimensionError("no predictions to score")
    for name, arr in (("predictions", p), ("labels", y)):
        if not np.all((arr == 0) | (arr == 1)):
            raise InvariantError(f"{name} must be binary 0/1")
    return p, y


def accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    p, y = _binary_pair(preds, labels)
    return float(accuracy_score(y, p))


def f1_score(preds: Sequence[int], labels: Sequence[int]) -> float:
    """F1 of the positive class; 0 when precision + recall is 0."""
    p, y = _binary_pair(preds, labels)
    return float(sk_f1_score(y, p, pos_label=1, labels=[0, 1], average="binary", zero_division=0))


# ============================================================================
# CLASSIFIER
# ============================================================================

def _sigmoid(s: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -s))


@dataclass(frozen=True, eq=False)
class LogisticClassifier:
    """Logistic regression over z-scored graph embeddings.

    ``mean`` and ``scale`` are the training-set standardization statistics.
    """

    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    loss_history: Tuple[float, ...] = ()

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.weights.shape[0]:
            raise DimensionError(
                f"embedding width {x.shape[1]} != classifier width {self.weights.shape[0]}"
            )
        return (x - self.mean) / self.scale

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return self._standardize(x) @ self.weights + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision_function(x) > 0).astype(np.int64)


def _mean_bce(scores: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, scores) - y * scores))


def train_classifier(
    embeddings: Sequence[np.ndarray],
    labels: Sequence[int],
    *,
    iterations: int = CLASSIFIER_ITERATIONS,
    learning_rate: float = CLASSIFIER_LR,
    standardize: bool = True,
) -> LogisticClassifier:
    """Fit a sigmoid classifier by full-batch gradient descent on mean BCE.

    Weights start at zero, so the fit is deterministic and flipping every
    label flips the sign of every learned parameter.
    """
    x = np.asarray([np.asarray(e, dtype=np.float64).reshape(-1) for e in embeddings])
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} embeddings for {y.shape[0]} labels")
    if not np.all((y == 0) | (y == 1)):
        raise InvariantError("labels must be binary 0/1")
    if np.unique(y).size < 2:
        raise InvariantError("classifier needs at least one example of each class")

    if standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    xs = (x - mean) / scale

    w = np.zeros(x.shape[1])
    b = 0.0
    history = []
    for _ in range(iterations):
        scores = xs @ w + b
        history.append(_mean_bce(scores, y))
        residual = _sigmoid(scores) - y
        w = w - learning_rate * (xs.T @ residual) / y.size
        b = b - learning_rate * float(residual.mean())
    history.append(_mean_bce(xs @ w + b, y))
    return LogisticClassifier(weights=w, bias=b, mean=mean, scale=scale, loss_history=tuple(history))


# ============================================================================
# VARIANTS
# ============================================================================

@dataclass(frozen=True)
class Variant:
    """Ablation flags plus view assignment for one model variant."""

    name: str
    use_siamese: bool
    use_cp: bool
    view_structure: str = "structural"
    view_features: str = "functional"

    def apply(self, base: TrainConfig) -> TrainConfig:
        return replace(
            base,
            use_siamese=self.use_siamese,
            use_cp=self.use_cp,
            view_structure=self.view_structure,
            view_features=self.view_features,
        )


# "x-y": structure from x, node features from y; fmri = functional, dti = structural.
VARIANTS: Dict[str, Variant] = {
    v.name: v
    for v in (
        Variant("gcn", use_siamese=False, use_cp=False),
        Variant("cp-gcn", use_siamese=False, use_cp=True),
        Variant("s-gcn", use_siamese=True, use_cp=False),
        Variant("scp-gcn", use_siamese=True, use_cp=True),
        Variant("scp-gcn-fmri", True, True, "functional", "functional"),
        Variant("scp-gcn-dti", True, True, "structural", "structural"),
        Variant("scp-gcn-fmri-dti", True, True, "functional", "structural"),
        Variant("scp-gcn-dti-fmri", True, True, "structural", "functional"),
    )
}
ABLATION_VARIANTS = ("gcn", "cp-gcn", "s-gcn", "scp-gcn")
VIEW_VARIANTS = ("scp-gcn-fmri", "scp-gcn-dti", "scp-gcn-fmri-dti", "scp-gcn-dti-fmri")


def get_variant(name: str) -> Variant:
    key = name.strip().lower()
    if key not in VARIANTS:
        raise ConfigError(f"Unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return VARIANTS[key]


def variant_config(name: str, base: TrainConfig) -> TrainConfig:
    return get_variant(name).apply(base)


# ============================================================================
# REPORTS
# ============================================================================

@dataclass
class ExperimentReport:
    """Per-repeat test accuracy and F1 for one variant, with their mean and std."""

    variant: str
    accuracies: List[float]
    f1_scores: List[float]
    seeds: List[int]
    config: Dict[str, Any] = field(default_factory=dict)
    train_fraction: float = DEFAULT_TRAIN_FRACTION

    def __post_init__(self) -> None:
        if not (len(self.accuracies) == len(self.f1_scores) == len(self.seeds)):
            raise InvariantError("accuracies, f1_scores and seeds must align")
        for v in (*self.accuracies, *self.f1_scores):
            if not 0.0 <= v <= 1.0:
                raise InvariantError(f"metric {v} outside [0, 1]")

    @property
    def repeats(self) -> int:
        return len(self.accuracies)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else 0.0

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.accuracies)) if self.accuracies else 0.0

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.f1_scores)) if self.f1_scores else 0.0

    @property
    def std_f1(self) -> float:
        return float(np.std(self.f1_scores)) if self.f1_scores else 0.0

    def summary(self) -> str:
        return (
            f"{self.variant:<18} acc {self.mean_accuracy:.3f} ± {self.std_accuracy:.3f}"
            f"   f1 {self.mean_f1:.3f} ± {self.std_f1:.3f}   ({self.repeats} repeats)"
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to JSON-serializable dict."""
        return {
            "variant": self.variant,
            "repeats": self.repeats,
            "accuracies": list(self.accuracies),
            "f1_scores": list(self.f1_scores),
            "seeds": list(self.seeds),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_f1": self.mean_f1,
            "std_f1": self.std_f1,
            "train_fraction": self.train_fraction,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentReport":
        return cls(
            variant=data["variant"],
            accuracies=[float(v) for v in data.get("accuracies", [])],
            f1_scores=[float(v) for v in data.get("f1_scores", [])],
            seeds=[int(s) for s in data.get("seeds", [])],
            config=dict(data.get("config", {})),
            train_fraction=float(data.get("train_fraction", DEFAULT_TRAIN_FRACTION)),
        )


def save_report(report: ExperimentReport, path: str) -> None:
    write_json(path, report.to_dict())


def load_report(path: str) -> ExperimentReport:
    return ExperimentReport.from_dict(read_json(path))


def write_repeats_csv(report: ExperimentReport, path: str) -> None:
    """One row per repeat: (variant, repeat, seed, accuracy, f1)."""
    write_csv(
        path,
        ["variant", "repeat", "seed", "accuracy", "f1"],
        [
            [report.variant, r, report.seeds[r], report.accuracies[r], report.f1_scores[r]]
            for r in range(report.repeats)
        ],
    )


def write_report_csv(reports: Sequence[ExperimentReport], path: str) -> None:
    """One summary row per variant."""
    write_csv(
        path,
        ["variant", "repeats", "mean_accuracy", "std_accuracy", "mean_f1", "std_f1"],
        [
            [r.variant, r.repeats, r.mean_accuracy, r.std_accuracy, r.mean_f1, r.std_f1]
            for r in reports
        ],
    )


# ============================================================================
# EXPERIMENTS
# ============================================================================

def evaluate_split(
    dataset: Sequence[NetworkInstance],
    train_idx: Sequence[int],
    test_idx: Sequence[int],
    config: TrainConfig,
    *,
    cache: Optional[CommunityCache] = None,
) -> Tuple[float, float]:
    """Train on one split and return test (accuracy, f1)."""
    train_set = [dataset[i] for i in train_idx]
    test_set = [dataset[i] for i in test_idx]
    result = train(train_set, config, cache=cache)
    train_emb = [e.graph_embedding for e in embed_dataset(result.model, train_set, config)]
    test_emb = [e.graph_embedding for e in embed_dataset(result.model, test_set, config)]
    clf = train_classifier(train_emb, [inst.label for inst in train_set])
    preds = clf.predict(np.asarray(test_emb))
    truth = [inst.label for inst in test_set]
    return accuracy(preds, truth), f1_score(preds, truth)


def repeat_seeds(master: int, repeats: int) -> List[int]:
    """Seeds shared by every variant so comparisons are paired."""
    return [derive_seed(master, "repeat", r) for r in range(repeats)]


def run_experiment(
    dataset: Sequence[NetworkInstance],
    variant: str,
    config: TrainConfig,
    repeats: int = DEFAULT_REPEATS,
    *,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    jobs: int = 1,
    cache: Optional[CommunityCache] = None,
    event_log: Optional[EventLog] = None,
) -> ExperimentReport:
    """Repeat split / train / embed / classify ``repeats`` times for one variant.

    Repeat r draws a fresh stratified split and trains with
    ``derive_seed(config.seed, "repeat", r)``; repeats run concurrently when
    ``jobs > 1`` without changing results.
    """
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    event_log = event_log or null_event_log()
    cache = cache if cache is not None else CommunityCache()
    cfg = variant_config(variant, config)
    seeds = repeat_seeds(config.seed, repeats)

    def one(seed: int) -> Tuple[float, float]:
        train_idx, test_idx = split_dataset(dataset, train_fraction, seed)
        return evaluate_split(dataset, train_idx, test_idx, replace(cfg, seed=seed), cache=cache)

    name = get_variant(variant).name
    scores = run_jobs(one, seeds, max_workers=jobs)
    for r, (seed, (acc, f1)) in enumerate(zip(seeds, scores)):
        event_log.emit("repeat_complete", variant=name, repeat=r, seed=seed, accuracy=acc, f1=f1)

    report = ExperimentReport(
        variant=name,
        accuracies=[s[0] for s in scores],
        f1_scores=[s[1] for s in scores],
        seeds=seeds,
        config=cfg.to_dict(),
        train_fraction=train_fraction,
    )
    event_log.emit(
        "experiment_complete",
        variant=report.variant,
        mean_accuracy=report.mean_accuracy,
        std_accuracy=report.std_accuracy,
        mean_f1=report.mean_f1,
        std_f1=report.std_f1,
    )
    return report


@dataclass
class AblationReport:
    reports: List[ExperimentReport]

    def to_dict(self) -> Dict[str, Any]:
        return {"variants": [r.to_dict() for r in self.reports]}


def run_ablation(
    dataset: Sequence[NetworkInstance],
    config: TrainConfig,
    repeats: int = DEFAULT_REPEATS,
    *,
    variants: Sequence[str] = ABLATION_VARIANTS + VIEW_VARIANTS,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    jobs: int = 1,
    event_log: Optional[EventLog] = None,
) -> AblationReport:
    """Run every variant on the same paired repeat seeds.

    One community cache is shared, so variants with the same structure view
    cluster each subject once per repeat.
    """
    cache = CommunityCache()
    reports = [
        run_experiment(
            dataset,
            name,
            config,
            repeats,
            train_fraction=train_fraction,
            jobs=jobs,
            cache=cache,
            event_log=event_log,
        )
        for name in variants
    ]
    return AblationReport(reports)


# ============================================================================
# GRID SEARCH
# ============================================================================

@dataclass(frozen=True)
class FoldScore:
    alpha: float
    beta: float
    communities: int
    fold: int
    accuracy: float
    f1: float


@dataclass(frozen=True)
class GridPoint:
    alpha: float
    beta: float
    communities: int
    mean_accuracy: float
    mean_f1: float

    def sort_key(self) -> Tuple[float, int, float, float]:
        """Best first: higher accuracy, then smaller C, alpha, beta."""
        return (-self.mean_accuracy, self.communities, self.alpha, self.beta)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "C": self.communities,
            "mean_accuracy": self.mean_accuracy,
            "mean_f1": self.mean_f1,
        }


@dataclass
class GridSearchResult:
    best: GridPoint
    best_config: TrainConfig
    points: List[GridPoint]
    table: List[FoldScore]
    folds: int

    def curve(self, param: str) -> Dict[float, float]:
        """Best mean accuracy at each value of ``param`` ("alpha", "beta" or "C")."""
        attr = {"alpha": "alpha", "beta": "beta", "C": "communities"}.get(param)
        if attr is None:
            raise ValueError(f"unknown grid parameter: {param}")
        out: Dict[float, float] = {}
        for p in self.points:
            key = getattr(p, attr)
            out[key] = max(out.get(key, 0.0), p.mean_accuracy)
        return dict(sorted(out.items()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best": self.best.to_dict(),
            "best_config": self.best_config.to_dict(),
            "folds": self.folds,
            "points": [p.to_dict() for p in self.points],
            "curve_C": {str(k): v for k, v in self.curve("C").items()},
        }


def write_sweep_csv(result: GridSearchResult, path: str) -> None:
    """Full score table: (alpha, beta, C, fold, accuracy, f1)."""
    write_csv(
        path,
        ["alpha", "beta", "C", "fold", "accuracy", "f1"],
        [[s.alpha, s.beta, s.communities, s.fold, s.accuracy, s.f1] for s in result.table],
    )


def dense_grid(center: float, step: float, span: int) -> List[float]:
    """``center + k * step`` for k in [-span, span], keeping non-negative values."""
    if step <= 0 or span < 0:
        raise ConfigError("refinement needs step > 0 and span >= 0")
    values = (round(center + k * step, 12) for k in range(-span, span + 1))
    return sorted({v for v in values if v >= 0})


def cv_folds(labels: Sequence[int], folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold (train, test) index pairs; every side must hold both classes."""
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    y = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(y, minlength=2)
    if np.any(counts < folds):
        raise InvariantError(f"class sizes {counts.tolist()} too small for {folds}-fold CV")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    out = []
    for f, (tr, te) in enumerate(splitter.split(np.zeros(y.size), y)):
        if np.unique(y[tr]).size < 2 or np.unique(y[te]).size < 2:
            raise InvariantError(f"fold {f} holds a single class")
        out.append((tr, te))
    return out


def grid_search(
    dataset: Sequence[NetworkInstance],
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    c_grid: Sequence[int],
    folds: int = 3,
    config: Optional[TrainConfig] = None,
    *,
    jobs: int = 1,
    event_log: Optional[EventLog] = None,
) -> GridSearchResult:
    """Cross-validated search over (alpha, beta, C) on a training split.

    All grid points share the same folds; fold f trains with
    ``derive_seed(config.seed, "fold", f)``. The winner maximizes mean fold
    accuracy, ties going to smaller C, then alpha, then beta.
    """
    config = config or TrainConfig()
    if not alpha_grid or not beta_grid or not c_grid:
        raise ConfigError("every grid must hold at least one value")
    event_log = event_log or null_event_log()
    splits = cv_folds([inst.label for inst in dataset], folds, derive_seed(config.seed, "folds"))
    cache = CommunityCache()
    points = [
        (float(a), float(b), int(c))
        for c, a, b in itertools.product(sorted(set(c_grid)), sorted(set(alpha_grid)), sorted(set(beta_grid)))
    ]
    jobs_list = [(p, f) for p in points for f in range(len(splits))]

    def one(item: Tuple[Tuple[float, float, int], int]) -> FoldScore:
        (a, b, c), f = item
        cfg = config.with_overrides(alpha=a, beta=b, communities=c, seed=derive_seed(config.seed, "fold", f))
        tr, te = splits[f]
        acc, f1 = evaluate_split(dataset, tr, te, cfg, cache=cache)
        return FoldScore(a, b, c, f, acc, f1)

    table = run_jobs(one, jobs_list, max_workers=jobs)

    summaries = []
    for k, (a, b, c) in enumerate(points):
        rows = table[k * len(splits):(k + 1) * len(splits)]
        point = GridPoint(
            a, b, c,
            mean_accuracy=float(np.mean([r.accuracy for r in rows])),
            mean_f1=float(np.mean([r.f1 for r in rows])),
        )
        summaries.append(point)
        event_log.emit("grid_point_complete", **point.to_dict())
    best = min(summaries, key=GridPoint.sort_key)
    return GridSearchResult(
        best=best,
        best_config=config.with_overrides(alpha=best.alpha, beta=best.beta, communities=best.communities),
        points=summaries,
        table=table,
        folds=folds,
    )
