"""baseline: random or evolutionary search with full evaluations → trace."""
import logging
from typing import Any

from commands.common import add_common_flags, error_boundary, finish_manifest, load_run_config, out_dir, start_manifest
from schemas import BaselineReport, BaselineRunConfig
from services.baselines import evolutionary_search, random_search
from services.evaluators import build_evaluator
from services.search_space import arch_to_string, load_space, space_spec_of
from utils.csv_utils import TRACE_COLUMNS, write_records
from utils.file_utils import write_model
from utils.seeding import derive_seed, substream

logger = logging.getLogger(__name__)

DEFAULT_RANDOM_BUDGET = 20


def register(subparsers) -> None:
    p = subparsers.add_parser("baseline", help="Run a random or evolutionary search baseline")
    add_common_flags(p)
    p.add_argument("--kind", choices=["random", "evo"], help="searcher (default random)")
    p.add_argument("--budget", type=int, help="full evaluations (random: draws, evo: max distinct evaluations)")
    p.add_argument("--dedup", action="store_true", default=None, help="random search: never draw an arch twice")
    p.add_argument("--benchmark", help="benchmark file used as the oracle")
    p.set_defaults(handler=cmd_baseline)


def cmd_baseline(args) -> int:
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "space": args.space,
        "kind": args.kind,
        "budget": args.budget,
        "dedup": args.dedup,
    }
    if args.benchmark:
        overrides.update({"evaluator.kind": "tabular", "evaluator.benchmark": args.benchmark})
    cfg = load_run_config(BaselineRunConfig, args.config, overrides)
    evo = cfg.evo.model_copy(update={"seed": cfg.seed})
    if cfg.kind == "evo" and cfg.budget is not None:
        evo = evo.model_copy(update={"max_evals": cfg.budget})
    cfg = cfg.model_copy(update={"evo": evo})

    with error_boundary(f"baseline {cfg.kind}"):
        space_spec = space_spec_of(cfg.space)
        space = load_space(space_spec)
        cfg = cfg.model_copy(update={"space": space_spec})
        manifest = start_manifest("baseline", cfg, cfg.seed, space.fingerprint())
        evaluator = build_evaluator(cfg.evaluator, space, noise_seed=derive_seed(cfg.seed, "evaluator"))
        if cfg.kind == "random":
            budget = cfg.budget or DEFAULT_RANDOM_BUDGET
            best, trace = random_search(space, evaluator.eval_acc, budget, substream(cfg.seed, "baseline"), cfg.dedup)
        else:
            best, trace = evolutionary_search(space, evaluator.eval_acc, cfg.evo)

    with error_boundary(f"baseline {cfg.kind} output"):
        directory = out_dir(args, f"baseline-{cfg.kind}")
        report = BaselineReport(kind=cfg.kind, best=arch_to_string(best), best_score=trace[-1].incumbent_score, evaluations=len(trace))
        outputs = {
            "trace": write_records(directory / "trace.csv", trace, TRACE_COLUMNS),
            "baseline_report": write_model(directory / "baseline_report.json", report),
        }
        finish_manifest(manifest, directory, outputs)
    print(f"{cfg.kind}: best {report.best} score={report.best_score:.4f} after {report.evaluations} evaluations")
    return 0
