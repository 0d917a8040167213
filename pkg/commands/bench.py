"""gen-bench: synthetic benchmark file over an enumerable space."""
import logging

from commands.common import add_common_flags, error_boundary, finish_manifest, load_run_config, out_dir, start_manifest
from schemas import GenBenchRunConfig
from services.evaluators import generate_benchmark, generate_synthetic, save_benchmark
from services.search_space import arch_from_string, describe, load_space, space_spec_of

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("gen-bench", help="Generate a synthetic tabular benchmark (one entry per canonical class)")
    add_common_flags(p)
    p.add_argument("--pairwise-strength", type=float, help="0 = additive layers, 1 = pure layer interactions")
    p.add_argument("--noise-sd", type=float, help="per-seed accuracy noise")
    p.add_argument("--seeds-per-arch", type=int, help="noisy 'training runs' per architecture (default 3)")
    p.set_defaults(handler=cmd_gen_bench)


def cmd_gen_bench(args) -> int:
    cfg = load_run_config(
        GenBenchRunConfig,
        args.config,
        {
            "seed": args.seed,
            "space": args.space,
            "oracle.pairwise_strength": args.pairwise_strength,
            "oracle.noise_sd": args.noise_sd,
            "seeds_per_arch": args.seeds_per_arch,
        },
    )
    # the run seed defines the oracle tables
    cfg = cfg.model_copy(update={"oracle": cfg.oracle.model_copy(update={"kind": "synthetic", "seed": cfg.seed})})
    with error_boundary("gen-bench"):
        space_spec = space_spec_of(cfg.space)
        space = load_space(space_spec)
        cfg = cfg.model_copy(update={"space": space_spec})
        manifest = start_manifest("gen-bench", cfg, cfg.seed, space.fingerprint())
        oracle = generate_synthetic(space, cfg.oracle.pairwise_strength, cfg.oracle.noise_sd, seed=cfg.seed)
        table = generate_benchmark(space, oracle, cfg.seeds_per_arch, seed=cfg.seed, space_spec=space_spec)
        directory = out_dir(args, "gen-bench")
        path = save_benchmark(table, directory / "benchmark.json")
        finish_manifest(manifest, directory, {"benchmark": path})

    best_key, best = table.best()
    print(f"benchmark: {path}")
    print(f"space: {space.name} ({space.size} architectures, {len(table)} canonical classes)")
    print(f"best: {best_key} mean_acc={best.mean_acc:.4f} flops={best.flops} params={best.params}")
    print("      " + " ".join(describe(arch_from_string(best_key, space), space)))
    return 0
