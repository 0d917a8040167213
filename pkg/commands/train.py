"""train: three-phase training simulation → tree snapshot + training log."""
import logging
from typing import Any

from commands.common import add_common_flags, error_boundary, finish_manifest, load_run_config, out_dir, start_manifest
from schemas import TrainRunConfig
from services.evaluators import build_trainer
from services.mct import save_tree
from services.search_space import load_space, space_spec_of
from services.training import run_training
from utils.csv_utils import write_records
from utils.file_utils import write_json

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["iter", "phase", "arch", "train_loss", "reward", "baseline"]


def register(subparsers) -> None:
    p = subparsers.add_parser("train", help="Simulate supernet training with MCT path sampling")
    add_common_flags(p)
    p.add_argument("--iters", type=int, help="total iterations N")
    p.add_argument("--ws", type=float, help="uniform warm-up ratio")
    p.add_argument("--wm", type=float, help="MCT warm-up ratio")
    p.add_argument("--flops-budget", type=int, help="FLOPs budget B (window from config, default 0.9-1.0)")
    p.add_argument("--benchmark", help="benchmark file used as the trainer's quality oracle")
    p.set_defaults(handler=cmd_train)


def cmd_train(args) -> int:
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "space": args.space,
        "train.total_iters": args.iters,
        "train.ws": args.ws,
        "train.wm": args.wm,
        "train.flops_budget": args.flops_budget,
    }
    if args.benchmark:
        overrides.update({"trainer.quality.kind": "tabular", "trainer.quality.benchmark": args.benchmark})
    cfg = load_run_config(TrainRunConfig, args.config, overrides)
    cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"seed": cfg.seed})})

    with error_boundary("train"):
        space_spec = space_spec_of(cfg.space)
        space = load_space(space_spec)
        cfg = cfg.model_copy(update={"space": space_spec})
        manifest = start_manifest("train", cfg, cfg.seed, space.fingerprint())
        trainer = build_trainer(cfg.trainer, space, seed=cfg.seed)

    def on_progress(step: str, detail: dict[str, Any]) -> None:
        if step == "phase":
            print(f"[{detail['iter']:>7}] {detail['phase']}")

    with error_boundary("train"):
        tree, log = run_training(space, trainer, cfg.train, progress_callback=on_progress)

    with error_boundary("train output"):
        directory = out_dir(args, "train")
        outputs = {
            "tree": save_tree(tree, directory / "tree.json"),
            "train_log_csv": write_records(directory / "train_log.csv", log.records, TRAIN_LOG_COLUMNS),
            "train_log_json": write_json(directory / "train_log.json", log),
        }
        finish_manifest(manifest, directory, outputs)
    counts = log.phase_counts()
    print("phases: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    print(f"tree visits: {tree.root.visits}  final baseline: {tree.baseline.value:.4f}")
    print(f"tree: {outputs['tree']}")
    return 0
