"""correlate / report: rank correlation between two ranking files (or cost vs accuracy in a benchmark); trace aggregation across runs."""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd

from commands.common import (
    CONFIG_ERROR,
    CommandError,
    error_boundary,
    finish_manifest,
    out_dir,
    start_manifest,
)
from schemas import ReportConfig
from services.evaluators import BenchmarkTable, load_benchmark
from services.metrics import Ranking, avg_percentile_rank, cost_correlations, kendall_tau, rank_table, spearman_rho
from services.search_space import arch_from_string
from utils.csv_utils import read_ranking, read_trace, write_csv
from utils.file_utils import load_structured

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("correlate", help="Kendall tau and Spearman rho between two ranking files")
    p.add_argument("--bench", help="benchmark file; correlate its FLOPs and params with mean accuracy instead")
    p.add_argument("ranking_a", nargs="?", help="CSV (id,score) or JSON/YAML {id: score}")
    p.add_argument("ranking_b", nargs="?")
    p.set_defaults(handler=cmd_correlate)

    p = subparsers.add_parser("report", help="Aggregate run traces into comparison and plot-data CSVs")
    p.add_argument("runs", nargs="+", help="run directories holding trace.csv (and manifest.json)")
    p.add_argument("--out", help="output directory (default: runs/report)")
    p.add_argument("--bench", help="benchmark file; adds the incumbent's average percentile rank")
    p.set_defaults(handler=cmd_report)


def cmd_correlate(args) -> int:
    if args.bench:
        if args.ranking_a or args.ranking_b:
            raise CommandError(CONFIG_ERROR, "correlate: give either two ranking files or --bench, not both")
        with error_boundary(f"correlate ({args.bench})"):
            table = load_benchmark(args.bench)
            result = {"n": len(table), **cost_correlations(table)}
    else:
        if not (args.ranking_a and args.ranking_b):
            raise CommandError(CONFIG_ERROR, "correlate: two ranking files (or --bench) required")
        with error_boundary("correlate"):
            r = Ranking.from_scores(read_ranking(args.ranking_a))
            s = Ranking.from_scores(read_ranking(args.ranking_b))
            result = {"n": len(r), "kendall_tau": kendall_tau(r, s), "spearman_rho": spearman_rho(r, s)}
    print(json.dumps(result, indent=2))
    return 0


def _searcher_label(run: Path) -> str:
    manifest = run / "manifest.json"
    if not manifest.is_file():
        return run.name
    data = load_structured(manifest)
    command = data.get("command", run.name)
    if command == "baseline":
        return f"{data.get('config', {}).get('kind', 'baseline')}"
    return "mct" if command == "search" else str(command)


def _read_run(run: str) -> pd.DataFrame:
    path = Path(run)
    trace = path / "trace.csv"
    if not trace.is_file():
        raise CommandError(CONFIG_ERROR, f"report: {run} has no trace.csv")
    with error_boundary(f"report ({trace})"):
        df = read_trace(trace)
        label = _searcher_label(path)
    df.insert(0, "searcher", label)
    df.insert(0, "run", path.name)
    return df


def _incumbent_percentiles(df: pd.DataFrame, table: BenchmarkTable, ranking: Ranking) -> list[float]:
    """Percentile rank (rank / |table|) of the running best architecture at each step."""
    out: list[float] = []
    best_score, best_arch = float("-inf"), None
    for arch, score in zip(df["arch"], df["score"]):
        if score > best_score:
            best_score, best_arch = score, arch
        key = table.key(arch_from_string(best_arch, table.space))
        out.append(ranking.ranks[key] / len(ranking))
    return out


def cmd_report(args) -> int:
    cfg = ReportConfig(runs=list(args.runs), bench=args.bench)
    manifest = start_manifest("report", cfg, seed=0)
    with ThreadPoolExecutor(max_workers=min(8, len(cfg.runs))) as pool:
        frames = list(pool.map(_read_run, cfg.runs))

    comparison = pd.concat(frames, ignore_index=True)
    plot = comparison[["run", "searcher", "step", "incumbent_score"]].rename(
        columns={"step": "evaluations"}
    )
    summary = pd.DataFrame(
        [
            {"run": f["run"].iat[0], "searcher": f["searcher"].iat[0], "evaluations": len(f),
             "best_score": float(f["incumbent_score"].iat[-1])}
            for f in frames if len(f)
        ]
    )
    if cfg.bench:
        with error_boundary(f"report ({cfg.bench})"):
            table = load_benchmark(cfg.bench)
            ranking = rank_table(table)
            plot = plot.assign(
                incumbent_percentile_rank=[p for f in frames for p in _incumbent_percentiles(f, table, ranking)]
            )
            summary["avg_percentile_rank"] = [
                avg_percentile_rank([arch_from_string(a, table.space) for a in f["arch"]], table, ranking)
                for f in frames if len(f)
            ]

    with error_boundary("report output"):
        directory = out_dir(args, "report")
        outputs = {
            "comparison": write_csv(directory / "comparison.csv", comparison),
            "plot_data": write_csv(directory / "plot_data.csv", plot),
            "summary": write_csv(directory / "summary.csv", summary),
        }
        finish_manifest(manifest, directory, outputs)

    for row in summary.itertuples(index=False):
        line = f"{row.run:<24} {row.searcher:<8} evals={row.evaluations:>5} best={row.best_score:.4f}"
        if cfg.bench:
            line += f" avg_pct_rank={row.avg_percentile_rank:.4f}"
        print(line)
    print(f"comparison: {outputs['comparison']} ({len(comparison)} rows)")
    return 0
