"""search: hierarchical node selection on a trained tree → search report + trace."""
import logging
from typing import Any

from commands.common import (
    CONFIG_ERROR,
    CommandError,
    add_common_flags,
    error_boundary,
    finish_manifest,
    load_run_config,
    out_dir,
    start_manifest,
)
from schemas import SearchRunConfig
from services.baselines import TraceRecorder
from services.evaluators import build_evaluator
from services.mct import load_tree, snapshot
from services.search import hierarchical_search, run_tradeoff, search_cost
from services.search_space import arch_from_string, load_space, space_spec_of
from utils.csv_utils import TRACE_COLUMNS, write_records
from utils.file_utils import write_model
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("search", help="Search a trained tree with hierarchical node selection")
    add_common_flags(p)
    p.add_argument("--tree", help="tree snapshot written by `train`")
    p.add_argument("--benchmark", help="benchmark file used as the validation oracle")
    p.add_argument("--k", type=int, help="search number (full evaluations)")
    p.add_argument("--n-thrd", type=int, help="mean-visit threshold before committing to a child")
    p.add_argument("--batch-size", type=int, help="images per validation batch")
    p.add_argument("--flops-budget", type=int, help="FLOPs budget B for candidates")
    p.add_argument(
        "--distinct",
        action="store_true",
        default=None,
        help="spend repeated walks on unevaluated one-layer variants of the best network so far",
    )
    p.add_argument(
        "--tradeoff",
        type=int,
        metavar="COST",
        help="also sweep n_thrd=1..6 with search number COST // n_thrd on copies of the tree",
    )
    p.set_defaults(handler=cmd_search)


def cmd_search(args) -> int:
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "space": args.space,
        "tree": args.tree,
        "search.k": args.k,
        "search.n_thrd": args.n_thrd,
        "search.batch_size": args.batch_size,
        "search.flops_budget": args.flops_budget,
        "search.distinct": args.distinct,
    }
    if args.benchmark:
        overrides.update({"evaluator.kind": "tabular", "evaluator.benchmark": args.benchmark})
    cfg = load_run_config(SearchRunConfig, args.config, overrides)
    if not cfg.tree:
        raise CommandError(CONFIG_ERROR, "search: no tree snapshot given (--tree or `tree` in the config)")
    cfg = cfg.model_copy(update={"search": cfg.search.model_copy(update={"seed": cfg.seed})})

    with error_boundary(f"search ({cfg.tree})"):
        space_spec = space_spec_of(cfg.space)
        space = load_space(space_spec)
        cfg = cfg.model_copy(update={"space": space_spec})
        manifest = start_manifest("search", cfg, cfg.seed, space.fingerprint())
        tree = load_tree(cfg.tree, space)
        trained = snapshot(tree) if args.tradeoff else None
        evaluator = build_evaluator(cfg.evaluator, space, noise_seed=derive_seed(cfg.seed, "evaluator"))

    with error_boundary("search"):
        report = hierarchical_search(tree, evaluator, cfg.search)

    tracker = TraceRecorder()
    for c in report.candidates:
        tracker.record(arch_from_string(c.arch, space), c.full_eval_acc)
    rows = None
    if args.tradeoff:
        with error_boundary("search tradeoff"):
            rows = [
                {"k": k, "n_thrd": n, "best": r.best, "best_acc": r.best_acc, "images_consumed": r.images_consumed}
                for k, n, r in run_tradeoff(trained, space, evaluator, cfg.search, args.tradeoff, range(1, 7))
            ]

    with error_boundary("search output"):
        directory = out_dir(args, "search")
        outputs = {
            "search_report_json": write_model(directory / "search_report.json", report),
            "search_report_csv": write_records(directory / "search_report.csv", report.candidates, ["arch", "full_eval_acc"]),
            "trace": write_records(directory / "trace.csv", tracker.trace, TRACE_COLUMNS),
        }
        if rows is not None:
            outputs["tradeoff"] = write_records(directory / "tradeoff.csv", rows)
        finish_manifest(manifest, directory, outputs)
    print(f"best: {report.best}  full_eval_acc={report.best_acc:.4f}")
    print(
        f"cost: {report.batch_evals} batch evals, {report.full_evals} full evals, "
        f"{report.images_consumed} images; worst case per path {search_cost(space, cfg.search)} images"
    )
    return 0
