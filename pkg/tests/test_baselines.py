import numpy as np
import pytest

from conftest import make_space
from schemas import EvoConfig
from services.baselines import (
    TraceRecorder,
    _crossover,
    _mutate,
    evolutionary_search,
    marginal_greedy,
    random_search,
)
from services.search_space import arch_from_string, arch_index, enumerate_space, flops

TOY_BUDGET = 2 * 497_664


@pytest.fixture
def space2():
    return make_space(2, ["ID", "MB3_K3", "MB6_K5"])


@pytest.fixture
def space6():
    return make_space(6, ["ID", "MB3_K3", "MB6_K5"])


def additive(arch):
    return 0.1 + 0.1 * sum(arch)


def dependent(arch):
    """Layer 1 alone favours op 0; the pair (2, 2) is the real optimum."""
    return (0.6 if arch[0] == 0 else 0.0) + (1.0 if arch == (2, 2) else 0.0)


def check_trace(trace):
    assert [r.step for r in trace] == list(range(1, len(trace) + 1))
    best = -np.inf
    for r in trace:
        best = max(best, r.score)
        assert r.incumbent_score == best


# ----- trace -----
def test_trace_recorder_keeps_first_best():
    rec = TraceRecorder()
    rec.record((0, 1), 0.5)
    rec.record((1, 1), 0.5)
    rec.record((1, 0), 0.2)
    assert rec.best == (0, 1)
    assert [r.incumbent_score for r in rec.trace] == [0.5, 0.5, 0.5]
    assert rec.trace[1].arch == "11"


# ----- random search -----
def test_random_search_trace(space6):
    best, trace = random_search(space6, additive, 30, np.random.default_rng(0))
    assert len(trace) == 30
    check_trace(trace)
    assert additive(best) == trace[-1].incumbent_score == max(r.score for r in trace)


def test_random_search_reproducible(space6):
    a = random_search(space6, additive, 15, np.random.default_rng(4))
    b = random_search(space6, additive, 15, np.random.default_rng(4))
    assert a == b


def test_random_search_dedup_exhausts_space(space2):
    _, trace = random_search(space2, additive, 50, np.random.default_rng(1), dedup=True)
    assert len(trace) == 9
    assert len({r.arch for r in trace}) == 9
    assert trace[-1].incumbent_score == pytest.approx(0.5)


def test_random_search_needs_budget(space2):
    with pytest.raises(ValueError):
        random_search(space2, additive, 0, np.random.default_rng(0))


def test_best_of_b_percentile_matches_order_statistic(bench_space):
    # score = position in enumeration order, so the best-of-b percentile has mean ≈ b / (b + 1)
    score = lambda a: (arch_index(a, bench_space) + 1) / bench_space.size  # noqa: E731
    rng = np.random.default_rng(0)
    bests = [random_search(bench_space, score, 5, rng)[1][-1].incumbent_score for _ in range(1000)]
    assert np.mean(bests) == pytest.approx(5 / 6, abs=0.02)


# ----- evolution operators -----
def test_crossover_takes_genes_from_parents():
    rng = np.random.default_rng(3)
    a, b = (0, 0, 0, 0, 0), (2, 2, 2, 2, 2)
    for kind in ("single_point", "uniform"):
        for _ in range(20):
            kid = _crossover(a, b, kind, rng)
            assert len(kid) == 5 and set(kid) <= {0, 2}
    for _ in range(20):
        kid = _crossover(a, b, "single_point", rng)
        cut = kid.index(2)
        assert kid == a[:cut] + b[cut:] and 1 <= cut <= 4


def test_mutation_probabilities(space6):
    rng = np.random.default_rng(0)
    arch = (1,) * 6
    assert _mutate(arch, space6, 0.0, rng) == arch
    mutated = [_mutate(arch, space6, 1.0, rng) for _ in range(50)]
    assert any(m != arch for m in mutated)
    assert all(len(m) == 6 and all(0 <= c < 3 for c in m) for m in mutated)


# ----- evolutionary search -----
def test_evolution_improves_and_traces_distinct(space6):
    cfg = EvoConfig(population=10, generations=15, seed=2)
    best, trace = evolutionary_search(space6, additive, cfg)
    check_trace(trace)
    assert len({r.arch for r in trace}) == len(trace)
    first_gen_best = max(r.score for r in trace[:10])
    assert trace[-1].incumbent_score >= first_gen_best
    assert additive(best) == trace[-1].incumbent_score


def test_evolution_respects_max_evals(space6):
    cfg = EvoConfig(population=8, generations=50, max_evals=20, seed=1)
    _, trace = evolutionary_search(space6, additive, cfg)
    assert len(trace) <= 20


def test_evolution_reproducible(space6):
    cfg = EvoConfig(population=6, generations=5, seed=8, crossover="uniform")
    assert evolutionary_search(space6, additive, cfg) == evolutionary_search(space6, additive, cfg)


def test_evolution_minimal_population(space2):
    best, trace = evolutionary_search(space2, additive, EvoConfig(population=2, generations=3, parent_fraction=0.1))
    assert len(trace) >= 1
    assert best in set(enumerate_space(space2))


def test_evolution_finds_separable_optimum_quickly():
    space = make_space(2, ["MB3_K3", "MB6_K5"])
    separable = lambda a: 0.5 + 0.3 * a[0] + 0.2 * a[1]  # noqa: E731
    hits = sum(evolutionary_search(space, separable, EvoConfig(generations=5, seed=s))[0] == (1, 1) for s in range(100))
    assert hits >= 95


def test_windowed_evolution_stays_in_window():
    space = make_space(2, ["MB3_K3", "MB6_K7"])
    cfg = EvoConfig(population=4, generations=3, flops_budget=TOY_BUDGET, seed=0)
    _, trace = evolutionary_search(space, lambda a: 0.5, cfg)
    for r in trace:
        assert flops(arch_from_string(r.arch, space), space) == TOY_BUDGET


# ----- marginal greedy -----
def test_marginal_greedy_solves_additive_objective(space6):
    arch, trace = marginal_greedy(space6, additive)
    assert arch == (2,) * 6
    assert len(trace) == 1 and trace[0].score == pytest.approx(1.3)


def test_marginal_greedy_misses_dependent_optimum(space2):
    arch, trace = marginal_greedy(space2, dependent)
    assert arch == (0, 2)
    assert trace[0].score == pytest.approx(0.6)
    assert max(dependent(a) for a in enumerate_space(space2)) == pytest.approx(1.0)


def test_marginal_greedy_sampled(space6):
    arch, _ = marginal_greedy(space6, additive, samples=400, rng=np.random.default_rng(0))
    assert arch == (2,) * 6
