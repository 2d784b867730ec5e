"""Command-line entry point: ``scpgcn <subcommand> [flags]``.

Configuration precedence is dataclass defaults < ``--config`` JSON file <
explicit flags. Every run prints its fully resolved configuration so it can
be reproduced from stdout alone. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from .clock import derive_seed, make_clock, make_run_id
from .community import CommunityCache
from .config import (
    ACTIVATIONS,
    EIGENSOLVERS,
    STRUCTURE_SCALINGS,
    VIEW_KINDS,
    TrainConfig,
    load_config_file,
    resolve_generator_config,
    resolve_train_config,
)
from .dataio import load_dataset, save_dataset, write_csv, write_json
from .errors import ConfigError, DimensionError, ScpGcnError
from .eval_harness import (
    DEFAULT_REPEATS,
    DEFAULT_TRAIN_FRACTION,
    VARIANTS,
    GridPoint,
    dense_grid,
    grid_search,
    run_ablation,
    run_experiment,
    save_report,
    write_repeats_csv,
    write_report_csv,
    write_sweep_csv,
)
from .log import EventLog
from .model import load_model, save_model
from .parallel import default_jobs
from .synthdata import generate_dataset, split_dataset
from .training import compute_assignments, embed_dataset, prepare_instance, train, write_history_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

PAPER_GRID = "0.001,0.01,0.1,1,10,100,1000"
COMMUNITY_GRID = "2,3,4,5,6,7,8,9,10"

# flag dest -> TrainConfig field
TRAIN_FLAG_FIELDS = {
    "alpha": "alpha",
    "beta": "beta",
    "margin": "margin",
    "lr": "learning_rate",
    "epochs": "epochs",
    "communities": "communities",
    "structure_view": "view_structure",
    "feature_view": "view_features",
    "activation": "activation",
    "widths": "widths",
    "embedding_dim": "embedding_dim",
    "structure_scaling": "structure_scaling",
    "eigensolver": "eigensolver",
    "seed": "seed",
}

GENERATOR_FLAG_FIELDS = {
    "n": "n",
    "communities_true": "communities_true",
    "p_in": "p_in",
    "p_out": "p_out",
    "w_scale": "w_scale",
    "signal": "signal",
    "noise": "noise",
    "per_class": "per_class",
    "seed": "seed",
}


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


# ============================================================================
# PARSER
# ============================================================================

def _shared_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=None, help="JSON config file (flat or with train/generator sections)")
    p.add_argument("--seed", type=int, default=None, help="Master seed (default: config file, then 1337)")
    p.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="Worker threads for independent jobs (default: SCPGCN_JOBS env var, then 1)",
    )
    p.add_argument("--events", default=None, help="Append structured JSONL events to this file")
    p.add_argument(
        "--time-mode",
        default="frozen",
        choices=["frozen", "live"],
        help="Event timestamp mode (default: frozen)",
    )
    p.add_argument(
        "--run-started-at-utc",
        default=None,
        help="Optional ISO-8601 UTC start time for frozen timestamps",
    )
    return p


def _train_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--alpha", type=float, default=None, help="Intra-community weight (default: 0.1)")
    p.add_argument("--beta", type=float, default=None, help="Inter-community weight (default: 1.0)")
    p.add_argument("--margin", type=float, default=None, help="Contrastive margin (default: 0.5)")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate (default: 0.01)")
    p.add_argument("--epochs", type=int, default=None, help="Training epochs (default: 200)")
    p.add_argument("--communities", type=int, default=None, help="Communities per subject (default: 4)")
    p.add_argument("--structure-view", choices=VIEW_KINDS, default=None, help="View driving the convolution")
    p.add_argument("--feature-view", choices=VIEW_KINDS, default=None, help="View used as node features")
    p.add_argument("--activation", choices=ACTIVATIONS, default=None)
    p.add_argument("--widths", type=_int_list, default=None, help="Two layer widths, e.g. 256,128")
    p.add_argument("--embedding-dim", type=int, default=None)
    p.add_argument("--structure-scaling", choices=STRUCTURE_SCALINGS, default=None)
    p.add_argument("--eigensolver", choices=EIGENSOLVERS, default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_parser()
    train_flags = _train_parser()
    parser = argparse.ArgumentParser(
        prog="scpgcn",
        description="Siamese community-preserving GCN for paired brain networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[shared], help="Write a synthetic paired-network dataset")
    gen.add_argument("--n", type=int, default=None, help="Nodes per network (default: 90)")
    gen.add_argument("--communities-true", type=int, default=None, help="Planted blocks (default: 4)")
    gen.add_argument("--p-in", type=float, default=None)
    gen.add_argument("--p-out", type=float, default=None)
    gen.add_argument("--w-scale", type=float, default=None)
    gen.add_argument("--signal", type=float, default=None, help="Class-1 correlation shift (default: 0.4)")
    gen.add_argument("--noise", type=float, default=None, help="Functional noise std (default: 0.2)")
    gen.add_argument("--per-class", type=int, default=None, help="Subjects per class (default: 20)")
    gen.add_argument("--classes", type=int, default=2, choices=[2], help="Number of classes (only 2)")
    gen.add_argument("--out", required=True, help="Dataset directory")

    clu = sub.add_parser("cluster", parents=[shared, train_flags], help="Spectral communities per subject")
    clu.add_argument("--manifest", required=True)
    clu.add_argument("--out", required=True, help="Membership JSON")

    tr = sub.add_parser("train", parents=[shared, train_flags], help="Train an encoder on a dataset")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--model-out", required=True)
    tr.add_argument("--history-out", default=None, help="Per-epoch loss CSV")

    emb = sub.add_parser("embed", parents=[shared, train_flags], help="Embed every subject with a trained model")
    emb.add_argument("--manifest", required=True)
    emb.add_argument("--model-in", required=True)
    emb.add_argument("--out", required=True, help="CSV of (id, g vector)")

    ev = sub.add_parser("evaluate", parents=[shared, train_flags], help="Repeated split/train/classify runs")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--variant", default="scp-gcn", type=str.lower, choices=list(VARIANTS))
    ev.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    ev.add_argument("--train-fraction", type=float, default=DEFAULT_TRAIN_FRACTION)
    ev.add_argument("--out", required=True, help="Report JSON (a .csv is written alongside)")

    gs = sub.add_parser("gridsearch", parents=[shared, train_flags], help="Cross-validated (alpha, beta, C) search")
    gs.add_argument("--manifest", required=True)
    gs.add_argument("--alpha-grid", type=_float_list, default=_float_list(PAPER_GRID))
    gs.add_argument("--beta-grid", type=_float_list, default=_float_list(PAPER_GRID))
    gs.add_argument("--c-grid", type=_int_list, default=_int_list(COMMUNITY_GRID))
    gs.add_argument("--folds", type=int, default=3)
    gs.add_argument("--train-fraction", type=float, default=DEFAULT_TRAIN_FRACTION)
    gs.add_argument("--refine-step", type=float, default=None, help="Dense beta step around the coarse optimum")
    gs.add_argument("--refine-span", type=int, default=5, help="Dense steps on each side (default: 5)")
    gs.add_argument("--out", required=True, help="Result JSON (a _sweep.csv is written alongside)")

    ab = sub.add_parser("ablate", parents=[shared, train_flags], help="Ablation and view-assignment table")
    ab.add_argument("--manifest", required=True)
    ab.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    ab.add_argument("--train-fraction", type=float, default=DEFAULT_TRAIN_FRACTION)
    ab.add_argument("--out", required=True, help="Table JSON (a .csv is written alongside)")
    return parser


# ============================================================================
# RUN CONTEXT
# ============================================================================

@dataclass
class RunContext:
    args: argparse.Namespace
    file_data: Dict[str, Any]
    event_log: EventLog
    jobs: int

    def train_config(self) -> TrainConfig:
        overrides = {
            field_name: getattr(self.args, dest, None)
            for dest, field_name in TRAIN_FLAG_FIELDS.items()
        }
        return resolve_train_config(self.file_data, overrides)

    def start(self, resolved: Dict[str, Any]) -> None:
        """Print the resolved config and log the run start."""
        run_id = make_run_id(clock=self.event_log.clock, seed_material=resolved)
        print(json.dumps({"run_id": run_id, **resolved}, indent=2, sort_keys=True))
        self.event_log.emit("run_start", run_id=run_id, **resolved)


def _require_file(path: str, what: str) -> str:
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _sibling(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def _describe(stage: str, point: GridPoint) -> str:
    return (
        f"{stage} optimum: alpha={point.alpha:g} beta={point.beta:g} "
        f"C={point.communities} acc={point.mean_accuracy:.3f}"
    )


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_generate(ctx: RunContext) -> int:
    args = ctx.args
    overrides = {f: getattr(args, dest, None) for dest, f in GENERATOR_FLAG_FIELDS.items()}
    gen_cfg = resolve_generator_config(ctx.file_data, overrides)
    ctx.start({"command": "generate", "generator": gen_cfg.to_dict(), "classes": args.classes})

    data = generate_dataset(gen_cfg)
    metadata = {f"generator.{k}": v for k, v in gen_cfg.to_dict().items()}
    manifest_path = save_dataset(data.instances, args.out, metadata=metadata)
    planted_path = str(Path(args.out) / "planted.json")
    write_json(planted_path, data.planted.to_dict())
    ctx.event_log.emit("dataset_saved", manifest=manifest_path, instances=len(data.instances))
    print(f"Wrote {len(data.instances)} subjects to {manifest_path}")
    return EXIT_OK


def cmd_cluster(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.train_config()
    ctx.start({"command": "cluster", "train": cfg.to_dict()})
    dataset = load_dataset(_require_file(args.manifest, "manifest"))
    prepared = [prepare_instance(inst, cfg) for inst in dataset]
    assignments = compute_assignments(prepared, cfg, CommunityCache(), jobs=ctx.jobs)
    out = {
        "C": cfg.communities,
        "seed": cfg.seed,
        "view_structure": cfg.view_structure,
        "instances": [
            {"id": inst.id, **assignments[k].to_dict()} for k, inst in enumerate(dataset)
        ],
    }
    write_json(args.out, out)
    ctx.event_log.emit("communities_computed", instances=len(dataset), communities=cfg.communities)
    print(f"Clustered {len(dataset)} subjects into {cfg.communities} communities -> {args.out}")
    return EXIT_OK


def cmd_train(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.train_config()
    ctx.start({"command": "train", "train": cfg.to_dict()})
    dataset = load_dataset(_require_file(args.manifest, "manifest"))
    result = train(dataset, cfg, event_log=ctx.event_log, jobs=ctx.jobs)
    save_model(result.model, args.model_out)
    if args.history_out:
        write_history_csv(result.history, args.history_out)
    final = result.history[-1]
    print(
        f"Trained {cfg.epochs} epochs on {len(dataset)} subjects: "
        f"loss {final.mean_loss:.6f} (contrastive {final.mean_contrastive:.6f}, cp {final.mean_cp:.6f})"
    )
    return EXIT_OK


def cmd_embed(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.train_config()
    ctx.start({"command": "embed", "train": cfg.to_dict()})
    model = load_model(_require_file(args.model_in, "model"))
    dataset = load_dataset(_require_file(args.manifest, "manifest"))
    if dataset and dataset[0].n != model.n_features:
        raise DimensionError(f"model expects {model.n_features} nodes, dataset has {dataset[0].n}")
    embeddings = embed_dataset(model, dataset, cfg)
    width = embeddings[0].graph_embedding.size if embeddings else 0
    write_csv(
        args.out,
        ["id", *[f"g{k}" for k in range(width)]],
        [[inst.id, *e.graph_embedding.tolist()] for inst, e in zip(dataset, embeddings)],
    )
    print(f"Embedded {len(dataset)} subjects ({width} dims) -> {args.out}")
    return EXIT_OK


def cmd_evaluate(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.train_config()
    ctx.start(
        {
            "command": "evaluate",
            "variant": args.variant,
            "repeats": args.repeats,
            "train_fraction": args.train_fraction,
            "train": cfg.to_dict(),
        }
    )
    dataset = load_dataset(_require_file(args.manifest, "manifest"))
    report = run_experiment(
        dataset,
        args.variant,
        cfg,
        args.repeats,
        train_fraction=args.train_fraction,
        jobs=ctx.jobs,
        event_log=ctx.event_log,
    )
    save_report(report, args.out)
    write_repeats_csv(report, _sibling(args.out, ".csv"))
    print(report.summary())
    return EXIT_OK


def cmd_gridsearch(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.train_config()
    ctx.start(
        {
            "command": "gridsearch",
            "alpha_grid": args.alpha_grid,
            "beta_grid": args.beta_grid,
            "c_grid": args.c_grid,
            "folds": args.folds,
            "train_fraction": args.train_fraction,
            "refine_step": args.refine_step,
            "refine_span": args.refine_span,
            "train": cfg.to_dict(),
        }
    )
    dataset = load_dataset(_require_file(args.manifest, "manifest"))
    train_idx, _ = split_dataset(dataset, args.train_fraction, derive_seed(cfg.seed, "gridsearch"))
    train_set = [dataset[i] for i in train_idx]
    coarse = grid_search(
        train_set, args.alpha_grid, args.beta_grid, args.c_grid, args.folds, cfg,
        jobs=ctx.jobs, event_log=ctx.event_log,
    )
    out: Dict[str, Any] = {"train_ids": [inst.id for inst in train_set], "coarse": coarse.to_dict()}
    write_sweep_csv(coarse, _sibling(args.out, "_sweep.csv"))
    print(_describe("Coarse", coarse.best))
    best = coarse.best

    if args.refine_step is not None:
        fine = grid_search(
            train_set,
            [best.alpha],
            dense_grid(best.beta, args.refine_step, args.refine_span),
            [best.communities],
            args.folds,
            cfg,
            jobs=ctx.jobs,
            event_log=ctx.event_log,
        )
        out["refined"] = fine.to_dict()
        write_sweep_csv(fine, _sibling(args.out, "_refined_sweep.csv"))
        print(_describe("Refined", fine.best))

    write_json(args.out, out)
    return EXIT_OK


def cmd_ablate(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.train_config()
    ctx.start(
        {
            "command": "ablate",
            "repeats": args.repeats,
            "train_fraction": args.train_fraction,
            "train": cfg.to_dict(),
        }
    )
    dataset = load_dataset(_require_file(args.manifest, "manifest"))
    table = run_ablation(
        dataset,
        cfg,
        args.repeats,
        train_fraction=args.train_fraction,
        jobs=ctx.jobs,
        event_log=ctx.event_log,
    )
    write_json(args.out, table.to_dict())
    write_report_csv(table.reports, _sibling(args.out, ".csv"))
    for report in table.reports:
        print(report.summary())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "generate": cmd_generate,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "embed": cmd_embed,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "ablate": cmd_ablate,
}


def _make_context(args: argparse.Namespace) -> RunContext:
    file_data = load_config_file(args.config)
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    events_path: Optional[Path] = None
    if args.events:
        events_path = Path(args.events)
        events_path.unlink(missing_ok=True)
    clock = make_clock(args.time_mode, args.run_started_at_utc)
    return RunContext(args=args, file_data=file_data, event_log=EventLog(path=events_path, clock=clock), jobs=jobs)


def run(argv: Optional[Sequence[str]] = None) -> Tuple[int, Optional[str]]:
    """Parse and dispatch; returns (exit code, error message)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else EXIT_USAGE
        return code, None
    try:
        ctx = _make_context(args)
        return COMMANDS[args.command](ctx), None
    except ConfigError as e:
        return EXIT_USAGE, str(e)
    except (ScpGcnError, OSError, ValueError, ArithmeticError, RuntimeError) as e:
        return EXIT_RUNTIME, str(e)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point for the CLI.

    Loads environment variables from .env, then parses arguments and runs
    one subcommand.
    """
    load_dotenv()
    code, message = run(argv)
    if message:
        print(f"error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
