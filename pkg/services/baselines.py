"""
Baseline searchers sharing one trace layout (step, arch, score, incumbent_score).
- random_search: uniform draws, optional dedup
- evolutionary_search: parents survive, the rest is refilled by crossover + per-layer mutation
- marginal_greedy: composes the per-layer argmax of marginal mean scores
"""
import logging
import math
from typing import Callable, Optional

import numpy as np

from schemas import EvoConfig, TraceRecord
from services.search_space import Architecture, SearchSpace, arch_to_string, enumerate_space, random_arch
from services.training import sample_with_flops_budget
from utils.seeding import substream

logger = logging.getLogger(__name__)

Evaluate = Callable[[Architecture], float]


class TraceRecorder:
    """Appends one trace row per evaluation and keeps the best-ever architecture."""

    def __init__(self):
        self.trace: list[TraceRecord] = []
        self.best: Optional[Architecture] = None
        self.best_score = -math.inf

    def record(self, arch: Architecture, score: float) -> None:
        if score > self.best_score:
            self.best, self.best_score = arch, score
        self.trace.append(
            TraceRecord(step=len(self.trace) + 1, arch=arch_to_string(arch), score=score, incumbent_score=self.best_score)
        )


def random_search(
    space: SearchSpace,
    evaluate: Evaluate,
    budget: int,
    rng: np.random.Generator,
    dedup: bool = False,
) -> tuple[Architecture, list[TraceRecord]]:
    """`budget` uniform draws, each fully evaluated. With dedup, stops once the space is exhausted."""
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    tracker = TraceRecorder()
    seen: set[Architecture] = set()
    draws = min(budget, space.size) if dedup else budget
    for _ in range(draws):
        arch = random_arch(space, rng)
        while dedup and arch in seen:
            arch = random_arch(space, rng)
        seen.add(arch)
        tracker.record(arch, float(evaluate(arch)))
    return tracker.best, tracker.trace


def _crossover(a: Architecture, b: Architecture, kind: str, rng: np.random.Generator) -> Architecture:
    n = len(a)
    if kind == "uniform":
        mask = rng.random(n) < 0.5
        return tuple(x if m else y for x, y, m in zip(a, b, mask))
    if n < 2:
        return a
    cut = int(rng.integers(1, n))
    return a[:cut] + b[cut:]


def _mutate(arch: Architecture, space: SearchSpace, prob: float, rng: np.random.Generator) -> Architecture:
    out = list(arch)
    for l, n in enumerate(space.sizes):
        if rng.random() < prob:
            out[l] = int(rng.integers(n))
    return tuple(out)


def evolutionary_search(
    space: SearchSpace,
    evaluate: Evaluate,
    cfg: EvoConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Architecture, list[TraceRecord]]:
    """Trace holds one row per distinct architecture evaluated; max_evals caps that count."""
    rng = substream(cfg.seed, "baseline") if rng is None else rng
    windowed = cfg.flops_budget is not None
    tracker = TraceRecorder()
    scores: dict[Architecture, float] = {}

    def score(arch: Architecture) -> Optional[float]:
        if arch not in scores:
            if cfg.max_evals is not None and len(scores) >= cfg.max_evals:
                return None
            scores[arch] = float(evaluate(arch))
            tracker.record(arch, scores[arch])
        return scores[arch]

    def draw(sampler: Callable[[], Architecture]) -> Architecture:
        if windowed:
            return sample_with_flops_budget(space, sampler, cfg.flops_budget, cfg.flops_range, cfg.max_tries)
        return sampler()

    population = [draw(lambda: random_arch(space, rng)) for _ in range(cfg.population)]
    n_parents = max(1, int(cfg.parent_fraction * cfg.population))

    for gen in range(cfg.generations):
        fitness = [score(a) for a in population]
        evaluated = [(a, f) for a, f in zip(population, fitness) if f is not None]
        if len(evaluated) < len(population):
            logger.info("evolution stopped at generation %d: max_evals=%d reached", gen, cfg.max_evals)
            break
        ranked = sorted(evaluated, key=lambda af: (-af[1], arch_to_string(af[0])))
        parents = [a for a, _ in ranked[:n_parents]]
        logger.debug("generation %d: best %.4f", gen, ranked[0][1])
        if gen == cfg.generations - 1:
            break

        def child() -> Architecture:
            i, j = rng.integers(len(parents), size=2)
            kid = _crossover(parents[int(i)], parents[int(j)], cfg.crossover, rng)
            return _mutate(kid, space, cfg.mutation_prob, rng)

        population = parents + [draw(child) for _ in range(cfg.population - n_parents)]

    return tracker.best, tracker.trace


def marginal_greedy(
    space: SearchSpace,
    evaluate: Evaluate,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Architecture, list[TraceRecord]]:
    """Per layer, the op with the highest mean score over architectures using it.

    Means are exact over the whole space when `samples` is None, else over `samples` uniform draws.
    """
    sums = [np.zeros(n) for n in space.sizes]
    counts = [np.zeros(n) for n in space.sizes]
    if samples is None:
        archs = enumerate_space(space)
    else:
        rng = substream(0, "baseline") if rng is None else rng
        archs = (random_arch(space, rng) for _ in range(samples))
    for arch in archs:
        s = float(evaluate(arch))
        for l, c in enumerate(arch):
            sums[l][c] += s
            counts[l][c] += 1
    pick = []
    for l in range(space.num_layers):
        means = np.where(counts[l] > 0, sums[l] / np.maximum(counts[l], 1), -np.inf)
        pick.append(int(np.argmax(means)))
    arch = tuple(pick)
    tracker = TraceRecorder()
    tracker.record(arch, float(evaluate(arch)))
    return arch, tracker.trace
