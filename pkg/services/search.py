"""
Architecture search over a trained tree with hierarchical node selection.
At each depth the walk refuses to commit while the current node's children have been visited
fewer than n_thrd times on average; it spends validation batches on random completions first,
then picks a child by softmax over search-mode UCT scores.
With `distinct`, a walk that lands on an already evaluated network is replaced by the best-ranked
unevaluated one-layer variant of the best network so far, so k walks buy k different full evaluations.
"""
import logging
from typing import Any, Callable, Optional, Sequence

from config import settings
from schemas import SearchCandidate, SearchConfig, SearchReport
from services.errors import BudgetStallError, EvaluatorError
from services.evaluators import ValidationEvaluator
from services.mct import MctTree, backpropagate, child_scores, node_at, restore, sample_child
from services.search_space import Architecture, SearchSpace, arch_to_string, canonicalize
from services.training import FlopsBounds, in_window, sample_with_flops_budget
from utils.seeding import substream

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, dict[str, Any]], None]


def search_cost(space: SearchSpace, cfg: SearchConfig) -> int:
    """Worst-case images to settle one path: bs · n_thrd · Σ_l |ops_l|."""
    return cfg.batch_size * cfg.n_thrd * sum(space.sizes)


def hierarchical_search(
    tree: MctTree,
    evaluator: ValidationEvaluator,
    cfg: SearchConfig,
    progress_callback: Optional[ProgressCallback] = None,
) -> SearchReport:
    """k gated walks, each ending in a full evaluation (cached across duplicates). Mutates `tree`."""

    def progress(step: str, detail: dict[str, Any]) -> None:
        if progress_callback:
            progress_callback(step, detail)

    space = tree.space
    rng = substream(cfg.seed, "search")
    windowed = cfg.flops_budget is not None
    bounds = FlopsBounds(space, cfg.flops_budget, cfg.flops_range) if windowed else None
    max_tries = settings.max_resample_tries if cfg.max_tries is None else cfg.max_tries
    full_set_size = settings.full_eval_images if cfg.full_set_size is None else cfg.full_set_size
    counters = {"batch": 0, "full": 0}
    cache: dict[Architecture, float] = {}

    def completion(prefix: tuple[int, ...]) -> Architecture:
        d = len(prefix)

        def draw() -> Architecture:
            return prefix + tuple(int(rng.integers(n)) for n in space.sizes[d:])

        if windowed:
            return sample_with_flops_budget(space, draw, cfg.flops_budget, cfg.flops_range, max_tries)
        return draw()

    def explore(prefix: tuple[int, ...], mean_visits: float) -> None:
        arch = completion(prefix)
        batch_id = counters["batch"]
        try:
            acc = float(evaluator.eval_acc_batch(arch, batch_id))
        except Exception as e:
            raise EvaluatorError(f"batch evaluation {batch_id} failed on path {arch_to_string(arch)}: {e}") from e
        counters["batch"] += 1
        backpropagate(tree, arch, acc)
        logger.debug("explore depth %d via %s: batch %d acc=%.4f", len(prefix), arch_to_string(arch), batch_id, acc)
        progress("explore", {
            "depth": len(prefix), "prefix": arch_to_string(prefix), "arch": arch_to_string(arch),
            "batch_acc": acc, "mean_visits": mean_visits,
        })

    def walk() -> Optional[Architecture]:
        prefix: tuple[int, ...] = ()
        for d in range(space.num_layers):
            n_ops = space.sizes[d]
            ops = bounds.feasible_ops(prefix) if bounds else list(range(n_ops))
            if not ops:
                return None
            node = node_at(tree, prefix)
            mean_visits = (node.visits if node else 0) / n_ops
            while mean_visits < cfg.n_thrd:
                explore(prefix, mean_visits)
                node = node_at(tree, prefix)
                mean_visits = node.visits / n_ops
            scores = child_scores(tree, node, d, "search", cfg.uct, ops)
            op = ops[sample_child(scores, cfg.uct.tau, rng)]
            progress("select", {"depth": d, "op": op, "mean_visits": mean_visits, "n_thrd": cfg.n_thrd})
            prefix += (op,)
        return prefix

    def full_eval(arch: Architecture) -> float:
        if arch not in cache:
            try:
                cache[arch] = float(evaluator.eval_acc(arch))
            except Exception as e:
                raise EvaluatorError(f"full evaluation failed on {arch_to_string(arch)}: {e}") from e
            counters["full"] += 1
        return cache[arch]

    # canonical form → full accuracy, for distinct mode
    evaluated: dict[Architecture, float] = {}

    def variants(base: Architecture) -> list[Architecture]:
        """Unevaluated one-layer changes of `base`, smallest drop in search-mode score first."""
        ranked = []
        for l in range(space.num_layers):
            scores = child_scores(tree, node_at(tree, base[:l]), l, "search", cfg.uct)
            for j in range(space.sizes[l]):
                if j == base[l]:
                    continue
                v = base[:l] + (j,) + base[l + 1:]
                if canonicalize(v, space) in evaluated:
                    continue
                if windowed and not in_window(v, space, cfg.flops_budget, cfg.flops_range):
                    continue
                ranked.append((scores[base[l]] - scores[j], l, j, v))
        ranked.sort(key=lambda item: item[:3])
        return [v for *_, v in ranked]

    def next_variant() -> Optional[Architecture]:
        # climb from the best evaluated network; fall back to the next best when its neighbourhood is spent
        by_acc = sorted(evaluated.items(), key=lambda kv: (-kv[1], kv[0]))
        for base, _ in by_acc:
            found = variants(base)
            if found:
                return found[0]
        return None

    candidates: list[SearchCandidate] = []
    for i in range(cfg.k):
        for _ in range(max_tries):
            arch = walk()
            if arch is not None and (not windowed or in_window(arch, space, cfg.flops_budget, cfg.flops_range)):
                break
        else:
            raise BudgetStallError(cfg.flops_budget, cfg.flops_range, max_tries)
        if cfg.distinct and canonicalize(arch, space) in evaluated:
            variant = next_variant()
            if variant is not None:
                progress("variant", {"index": i, "walk": arch_to_string(arch), "arch": arch_to_string(variant)})
                arch = variant
        acc = full_eval(arch)
        evaluated.setdefault(canonicalize(arch, space), acc)
        candidates.append(SearchCandidate(arch=arch_to_string(arch), full_eval_acc=acc))
        progress("candidate", {"index": i, "arch": arch_to_string(arch), "full_eval_acc": acc})
        logger.debug("candidate %d: %s acc=%.4f (batch evals so far %d)", i, arch_to_string(arch), acc, counters["batch"])

    best = max(candidates, key=lambda c: c.full_eval_acc)
    report = SearchReport(
        candidates=candidates,
        best=best.arch,
        best_acc=best.full_eval_acc,
        images_consumed=counters["batch"] * cfg.batch_size + counters["full"] * full_set_size,
        batch_evals=counters["batch"],
        full_evals=counters["full"],
        worst_case_images_per_path=search_cost(space, cfg),
    )
    logger.info(
        "search done: best %s acc=%.4f, %d batch evals, %d full evals, %d images",
        report.best, report.best_acc, report.batch_evals, report.full_evals, report.images_consumed,
    )
    return report


# ----- Search number / threshold trade-off -----
def tradeoff_plan(cost_coefficient: int, n_thrds: Sequence[int]) -> list[tuple[int, int]]:
    """(search number, n_thrd) pairs with search_number · n_thrd ≈ cost_coefficient."""
    if cost_coefficient < 1:
        raise ValueError(f"cost coefficient must be >= 1, got {cost_coefficient}")
    plan = []
    for n in n_thrds:
        if n < 1:
            raise ValueError(f"n_thrd must be >= 1 in a trade-off plan, got {n}")
        plan.append((max(1, cost_coefficient // n), n))
    return plan


def run_tradeoff(
    snapshot: bytes,
    space: SearchSpace,
    evaluator: ValidationEvaluator,
    cfg: SearchConfig,
    cost_coefficient: int,
    n_thrds: Sequence[int],
) -> list[tuple[int, int, SearchReport]]:
    """One search per plan entry, each on a fresh copy of the trained tree."""
    out = []
    for k, n in tradeoff_plan(cost_coefficient, n_thrds):
        tree = restore(snapshot, space)
        report = hierarchical_search(tree, evaluator, cfg.model_copy(update={"k": k, "n_thrd": n}))
        out.append((k, n, report))
    return out
