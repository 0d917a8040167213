import pytest

from conftest import TableEvaluator, make_space
from schemas import SearchConfig, TrainConfig
from services.errors import BudgetStallError, EvaluatorError
from services.evaluators import SurrogateTrainer
from services.mct import new_tree, snapshot
from services.search import hierarchical_search, run_tradeoff, search_cost, tradeoff_plan
from services.search_space import arch_from_string, canonicalize, enumerate_space
from services.training import FlopsBounds, run_training

TOY_BUDGET = 2 * 497_664


@pytest.fixture
def space3():
    return make_space(3, ["ID", "MB3_K3", "MB6_K5"])


@pytest.fixture
def count_eval(space3):
    return TableEvaluator(space3, {a: 0.2 + 0.25 * a.count(2) for a in enumerate_space(space3)})


class FailingEvaluator(TableEvaluator):
    def eval_acc_batch(self, arch, batch_id):
        if batch_id == 4:
            raise RuntimeError("bad batch")
        return super().eval_acc_batch(arch, batch_id)


# ----- cost -----
def test_search_cost_formula(mobile_space, bench_space):
    assert search_cost(mobile_space, SearchConfig(batch_size=128, n_thrd=6)) == 128 * 6 * 273 == 209_664
    assert search_cost(bench_space, SearchConfig(batch_size=64, n_thrd=2)) == 64 * 2 * 24


def test_zero_threshold_spends_no_batches(space3, count_eval):
    report = hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=5, n_thrd=0))
    assert report.batch_evals == 0
    assert count_eval.batch_calls == 0
    assert len(report.candidates) == 5


def test_batch_evals_bounded_by_worst_case(space3, count_eval):
    cfg = SearchConfig(k=4, n_thrd=3, batch_size=10, full_set_size=1000)
    report = hierarchical_search(new_tree(space3), count_eval, cfg)
    assert 0 < report.batch_evals <= cfg.k * cfg.n_thrd * sum(space3.sizes)
    assert report.batch_evals == count_eval.batch_calls
    assert report.images_consumed == report.batch_evals * 10 + report.full_evals * 1000
    assert report.worst_case_images_per_path == search_cost(space3, cfg)


def test_duplicate_candidates_are_evaluated_once(space3, count_eval):
    report = hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=12, n_thrd=4))
    assert report.full_evals == len({c.arch for c in report.candidates})
    assert report.best_acc == max(c.full_eval_acc for c in report.candidates)
    assert report.best in {c.arch for c in report.candidates}


def test_gate_holds_before_every_commit(space3, count_eval):
    events = []
    hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=3, n_thrd=2),
                        progress_callback=lambda step, detail: events.append((step, detail)))
    selects = [d for s, d in events if s == "select"]
    assert len(selects) == 9
    assert all(d["mean_visits"] >= 2 for d in selects)
    assert [s for s, _ in events].count("candidate") == 3
    explores = [d for s, d in events if s == "explore"]
    assert all(d["arch"].startswith(d["prefix"]) for d in explores)


def test_search_finds_dominant_architecture(space3, count_eval):
    report = hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=3, n_thrd=30))
    assert report.best == "222"
    assert report.best_acc == pytest.approx(0.95)


def test_search_is_reproducible(space3, count_eval):
    cfg = SearchConfig(k=6, n_thrd=2, seed=5)
    a = hierarchical_search(new_tree(space3), count_eval, cfg)
    b = hierarchical_search(new_tree(space3), count_eval, cfg)
    assert a == b


def test_search_mutates_tree(space3, count_eval):
    tree = new_tree(space3)
    report = hierarchical_search(tree, count_eval, SearchConfig(k=2, n_thrd=1))
    assert tree.root.visits == report.batch_evals


def test_single_layer_explores_every_op_before_choosing():
    space = make_space(1, ["ID", "MB3_K3", "MB6_K5"])
    evaluator = TableEvaluator(space, {(0,): 0.3, (1,): 0.5, (2,): 0.7})
    events = []
    hierarchical_search(new_tree(space), evaluator, SearchConfig(k=1, n_thrd=1),
                        progress_callback=lambda step, detail: events.append(step))
    first_select = events.index("select")
    assert events[:first_select].count("explore") >= 3


# ----- distinct candidates -----
def test_distinct_spends_every_full_evaluation_on_a_new_network(space3, count_eval):
    events = []
    report = hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=10, n_thrd=30, distinct=True),
                                 progress_callback=lambda step, detail: events.append((step, detail)))
    assert report.full_evals == 10
    classes = {canonicalize(arch_from_string(c.arch, space3), space3) for c in report.candidates}
    assert len(classes) == 10
    variants = [d for s, d in events if s == "variant"]
    assert variants
    assert all(d["walk"] != d["arch"] for d in variants)
    assert report.best == "222"


def test_distinct_off_repeats_the_converged_walk(space3, count_eval):
    report = hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=10, n_thrd=30))
    assert report.full_evals < 10


def test_distinct_falls_back_once_space_is_exhausted(space3, count_eval):
    # 15 canonical classes in a 3-layer space with an identity op
    report = hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=20, n_thrd=2, distinct=True))
    assert len(report.candidates) == 20
    assert len({canonicalize(arch_from_string(c.arch, space3), space3) for c in report.candidates}) == 15


# ----- FLOPs window -----
def test_flops_bounds_prune_toy_space():
    space = make_space(2, ["MB3_K3", "MB6_K7"])
    bounds = FlopsBounds(space, TOY_BUDGET)
    assert bounds.feasible_ops(()) == [1]
    assert bounds.feasible_ops((1,)) == [1]
    assert FlopsBounds(space, 1).feasible_ops(()) == []


def test_windowed_search_returns_in_window_candidates():
    space = make_space(2, ["MB3_K3", "MB6_K7"])
    evaluator = TableEvaluator(space, {a: 0.5 + 0.1 * a[0] - 0.05 * a[1] for a in enumerate_space(space)})
    report = hierarchical_search(new_tree(space), evaluator, SearchConfig(k=3, n_thrd=2, flops_budget=TOY_BUDGET))
    assert {c.arch for c in report.candidates} == {"11"}


def test_infeasible_window_stalls(space3, count_eval):
    with pytest.raises(BudgetStallError):
        hierarchical_search(new_tree(space3), count_eval, SearchConfig(k=1, flops_budget=1, max_tries=5))


# ----- evaluator failures -----
def test_batch_failure_carries_context(space3, count_eval):
    failing = FailingEvaluator(space3, count_eval.accs)
    with pytest.raises(EvaluatorError, match="batch evaluation 4"):
        hierarchical_search(new_tree(space3), failing, SearchConfig(k=3, n_thrd=3))


# ----- trade-off -----
def test_tradeoff_plan():
    assert tradeoff_plan(24, range(1, 7)) == [(24, 1), (12, 2), (8, 3), (6, 4), (4, 5), (4, 6)]
    assert tradeoff_plan(2, [6]) == [(1, 6)]
    with pytest.raises(ValueError):
        tradeoff_plan(10, [0])
    with pytest.raises(ValueError):
        tradeoff_plan(0, [1])


def test_run_tradeoff_uses_fresh_trees(space3, count_eval):
    tree = new_tree(space3)
    data = snapshot(tree)
    results = run_tradeoff(data, space3, count_eval, SearchConfig(), 6, [1, 2, 3])
    assert [(k, n) for k, n, _ in results] == [(6, 1), (3, 2), (2, 3)]
    for k, _, report in results:
        assert len(report.candidates) == k
    assert snapshot(tree) == data


# ----- trained tree on the benchmark space -----
def test_search_after_training(bench_space, bench_oracle):
    trainer = SurrogateTrainer(bench_oracle, sigma=0.02, seed=1)
    tree, _ = run_training(bench_space, trainer, TrainConfig(total_iters=300, ws=0.3, wm=0.3, seed=1))
    report = hierarchical_search(tree, bench_oracle, SearchConfig(k=5, n_thrd=1, seed=1))
    assert len(report.candidates) == 5
    for c in report.candidates:
        arch = arch_from_string(c.arch, bench_space)
        assert c.full_eval_acc == bench_oracle.eval_acc(arch)


def test_cost_is_a_few_full_passes(mobile_space):
    assert 4 <= search_cost(mobile_space, SearchConfig()) / 50_000 <= 5


def test_gate_never_violated_on_bench(bench_space, bench_oracle):
    for seed in range(50):
        violations = []

        def watch(step, detail, n_thrd=2):
            if step == "select" and detail["mean_visits"] < n_thrd:
                violations.append(detail)

        hierarchical_search(new_tree(bench_space), bench_oracle, SearchConfig(k=2, n_thrd=2, seed=seed),
                            progress_callback=watch)
        assert violations == []
