"""
Three-phase path sampling during (simulated) supernet training.
- warmup:     uniform paths, baseline only
- mct_warmup: uniform paths inside the FLOPs window, tree + G updated
- mcts:       tree-sampled paths (train-mode UCT) inside the FLOPs window, tree + G updated;
              children whose completions cannot reach the window are skipped
"""
import logging
import math
from typing import Any, Callable, Optional, Sequence

import numpy as np

from config import settings
from schemas import Phase, TrainConfig, TrainLog, TrainRecord
from services.errors import BudgetStallError, EvaluatorError
from services.evaluators import TrainingEvaluator
from services.mct import MctTree, backpropagate, new_tree, reward, sample_path, update_baseline
from services.search_space import Architecture, SearchSpace, arch_to_string, enumerate_space, flops, random_arch
from utils.seeding import substream

logger = logging.getLogger(__name__)


def _boundary(x: float) -> int:
    # phases are half-open: a fractional boundary rounds up, float noise around an integer does not
    return math.ceil(x - 1e-9)


def phase_boundaries(cfg: TrainConfig) -> tuple[int, int]:
    """First iteration of mct_warmup and of mcts."""
    n = cfg.total_iters
    return _boundary(cfg.ws * n), _boundary((cfg.ws + cfg.wm) * n)


def phase_of(t: int, boundaries: tuple[int, int]) -> Phase:
    if t < boundaries[0]:
        return "warmup"
    if t < boundaries[1]:
        return "mct_warmup"
    return "mcts"


def in_window(arch: Architecture, space: SearchSpace, budget: int, flops_range: tuple[float, float]) -> bool:
    lo, hi = flops_range
    return lo * budget <= flops(arch, space) <= hi * budget


class FlopsBounds:
    """Per-prefix FLOPs interval of all completions, for pruning children that cannot reach the window."""

    def __init__(self, space: SearchSpace, budget: int, flops_range: tuple[float, float] = (0.9, 1.0)):
        self.space = space
        self.lo = flops_range[0] * budget
        self.hi = flops_range[1] * budget
        self.cost = [[space.op_cost(l, j)[0] for j in range(n)] for l, n in enumerate(space.sizes)]
        self.suffix_min = [0] * (space.num_layers + 1)
        self.suffix_max = [0] * (space.num_layers + 1)
        for l in range(space.num_layers - 1, -1, -1):
            self.suffix_min[l] = self.suffix_min[l + 1] + min(self.cost[l])
            self.suffix_max[l] = self.suffix_max[l + 1] + max(self.cost[l])

    def feasible_ops(self, prefix: Sequence[int]) -> list[int]:
        d = len(prefix)
        base = self.space.fixed_cost[0] + sum(self.cost[l][c] for l, c in enumerate(prefix))
        ops = []
        for j, c in enumerate(self.cost[d]):
            low = base + c + self.suffix_min[d + 1]
            high = base + c + self.suffix_max[d + 1]
            if high >= self.lo and low <= self.hi:
                ops.append(j)
        return ops


def sample_with_flops_budget(
    space: SearchSpace,
    sampler: Callable[[], Architecture],
    budget: int,
    flops_range: tuple[float, float] = (0.9, 1.0),
    max_tries: Optional[int] = None,
) -> Architecture:
    """Draw from `sampler` until the FLOPs fall in [lo·B, hi·B]; the sampler owns its rng."""
    max_tries = settings.max_resample_tries if max_tries is None else max_tries
    if max_tries < 1:
        raise ValueError(f"max_tries must be >= 1, got {max_tries}")
    for tries in range(1, max_tries + 1):
        arch = sampler()
        if in_window(arch, space, budget, flops_range):
            if tries > 1:
                logger.debug("window hit after %d draws", tries)
            return arch
    raise BudgetStallError(budget, flops_range, max_tries)


def flops_window_census(space: SearchSpace, budget: int, flops_range: tuple[float, float] = (0.9, 1.0)) -> tuple[int, int]:
    """(architectures inside the window, space size), by exhaustive enumeration."""
    hits = sum(1 for a in enumerate_space(space) if in_window(a, space, budget, flops_range))
    return hits, space.size


def _observe(evaluator: TrainingEvaluator, arch: Architecture, t: int, phase: Phase) -> float:
    try:
        loss = float(evaluator.train_step(arch, t))
    except Exception as e:
        raise EvaluatorError(f"train_step failed at iteration {t} ({phase}) on {arch_to_string(arch)}: {e}") from e
    if not math.isfinite(loss) or loss <= 0:
        raise EvaluatorError(
            f"train_step returned {loss!r} at iteration {t} ({phase}) on {arch_to_string(arch)}; losses must be positive"
        )
    return loss


def run_training(
    space: SearchSpace,
    evaluator: TrainingEvaluator,
    cfg: TrainConfig,
    progress_callback: Callable[[str, dict[str, Any]], None] | None = None,
) -> tuple[MctTree, TrainLog]:
    """Run cfg.total_iters iterations, one sampled path each. progress_callback(step, detail) on phase changes."""

    def progress(step: str, detail: dict[str, Any] | None = None) -> None:
        if progress_callback:
            progress_callback(step, detail or {})

    rng: np.random.Generator = substream(cfg.seed, "training")
    tree = new_tree(space, beta=cfg.beta, gamma=cfg.gamma)
    log = TrainLog()
    boundaries = phase_boundaries(cfg)
    filtered = cfg.flops_reduction and cfg.flops_budget is not None
    bounds = FlopsBounds(space, cfg.flops_budget, cfg.flops_range) if filtered else None

    def uniform() -> Architecture:
        return random_arch(space, rng)

    def tree_path() -> Architecture:
        return sample_path(tree, "train", cfg.uct, rng, bounds.feasible_ops if bounds else None)

    current: Optional[Phase] = None
    for t in range(cfg.total_iters):
        phase = phase_of(t, boundaries)
        if phase != current:
            logger.info("iteration %d: entering %s", t, phase)
            progress("phase", {"iter": t, "phase": phase})
            current = phase

        sampler = tree_path if phase == "mcts" else uniform
        if phase != "warmup" and filtered:
            arch = sample_with_flops_budget(space, sampler, cfg.flops_budget, cfg.flops_range, cfg.max_tries)
        else:
            arch = sampler()

        loss = _observe(evaluator, arch, t, phase)
        tree.baseline = update_baseline(tree.baseline, loss)
        r = None
        if phase != "warmup" and cfg.update_tree:
            r = reward(tree.baseline, loss)
            backpropagate(tree, arch, r)
        log.records.append(
            TrainRecord(
                iter=t,
                phase=phase,
                arch=arch_to_string(arch),
                train_loss=loss,
                reward=r,
                baseline=tree.baseline.value,
            )
        )
        if cfg.iters_per_epoch and (t + 1) % cfg.iters_per_epoch == 0:
            logger.debug("epoch %d: baseline %.4f, tree visits %d", (t + 1) // cfg.iters_per_epoch, tree.baseline.value, tree.root.visits)

    counts = log.phase_counts()
    logger.info("training done: %s, tree visits %d", counts, tree.root.visits)
    progress("complete", {"phase_counts": counts, "tree_visits": tree.root.visits})
    return tree, log
