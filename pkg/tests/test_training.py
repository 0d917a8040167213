import numpy as np
import pytest

from conftest import LossFn, make_space
from schemas import TrainConfig
from services.errors import BudgetStallError, EvaluatorError
from services.mct import greedy_path, node_at
from services.search_space import arch_from_string, flops
from services.training import (
    flops_window_census,
    in_window,
    phase_boundaries,
    phase_of,
    run_training,
    sample_with_flops_budget,
)

# max arch of the 2-layer [MB3_K3, MB6_K7] toy space; the only one inside [0.9B, B]
TOY_BUDGET = 2 * 497_664


@pytest.fixture
def toy_space():
    return make_space(2, ["MB3_K3", "MB6_K7"])


@pytest.fixture
def space3():
    return make_space(3, ["ID", "MB3_K3", "MB6_K5"])


def count_loss(arch):
    return 1.0 - 0.2 * sum(1 for c in arch if c == 2)


# ----- phases -----
def test_phase_boundaries_and_counts(space3):
    cfg = TrainConfig(total_iters=100, ws=0.5, wm=0.2)
    assert phase_boundaries(cfg) == (50, 70)
    assert [phase_of(t, (50, 70)) for t in (0, 49, 50, 69, 70, 99)] == [
        "warmup", "warmup", "mct_warmup", "mct_warmup", "mcts", "mcts",
    ]
    _, log = run_training(space3, LossFn(count_loss), cfg)
    assert log.phase_counts() == {"warmup": 50, "mct_warmup": 20, "mcts": 30}
    assert [r.iter for r in log.records] == list(range(100))


def test_fractional_boundaries_round_up():
    cfg = TrainConfig(total_iters=5, ws=0.5, wm=0.2)
    assert phase_boundaries(cfg) == (3, 4)
    _, log = run_training(make_space(3, ["ID", "MB3_K3", "MB6_K5"]), LossFn(count_loss), cfg)
    assert [r.phase for r in log.records] == ["warmup", "warmup", "warmup", "mct_warmup", "mcts"]
    assert phase_boundaries(TrainConfig(total_iters=60, ws=0.3, wm=0.3)) == (18, 36)
    assert phase_boundaries(TrainConfig(total_iters=1000, ws=0.7, wm=0.1)) == (700, 800)


def test_ratios_must_fit():
    with pytest.raises(ValueError):
        TrainConfig(ws=0.7, wm=0.5)


def test_warmup_only_leaves_tree_empty(space3):
    tree, log = run_training(space3, LossFn(count_loss), TrainConfig(total_iters=30, ws=1.0, wm=0.0))
    assert tree.root.visits == 0
    assert tree.comm.g == [[0.0] * 3] * 3
    assert all(r.reward is None for r in log.records)
    assert tree.baseline.initialized


def test_no_warmup_first_reward_is_one(space3):
    tree, log = run_training(space3, LossFn(count_loss), TrainConfig(total_iters=10, ws=0.0, wm=0.5))
    assert log.records[0].reward == pytest.approx(1.0)
    assert log.records[0].baseline == log.records[0].train_loss
    assert tree.root.visits == 10


def test_rewards_follow_baseline(space3):
    cfg = TrainConfig(total_iters=40, ws=0.25, wm=0.25, beta=0.9)
    _, log = run_training(space3, LossFn(count_loss), cfg)
    b = None
    for rec in log.records:
        b = rec.train_loss if b is None else 0.9 * b + 0.1 * rec.train_loss
        assert rec.baseline == pytest.approx(b)
        if rec.phase != "warmup":
            assert rec.reward == pytest.approx(b / rec.train_loss)


def test_update_tree_off_keeps_tree_empty(space3):
    cfg = TrainConfig(total_iters=30, ws=0.2, wm=0.2, update_tree=False)
    tree, log = run_training(space3, LossFn(count_loss), cfg)
    assert tree.root.visits == 0
    assert all(r.reward is None for r in log.records)


def test_training_is_reproducible(space3):
    cfg = TrainConfig(total_iters=60, ws=0.3, wm=0.3, seed=11)
    a = run_training(space3, LossFn(count_loss), cfg)[1]
    b = run_training(space3, LossFn(count_loss), cfg)[1]
    assert a == b
    c = run_training(space3, LossFn(count_loss), cfg.model_copy(update={"seed": 12}))[1]
    assert [r.arch for r in a.records] != [r.arch for r in c.records]


def test_tree_prefers_better_operation(space3):
    cfg = TrainConfig(total_iters=200, ws=0.0, wm=0.8, seed=3)
    tree, _ = run_training(space3, LossFn(count_loss), cfg)
    assert greedy_path(tree)[0] == 2
    assert node_at(tree, (2,)).visits > node_at(tree, (0,)).visits


def test_progress_callback_events(space3):
    events = []
    run_training(space3, LossFn(count_loss), TrainConfig(total_iters=10, ws=0.5, wm=0.2),
                 progress_callback=lambda step, detail: events.append((step, detail)))
    assert events[:3] == [
        ("phase", {"iter": 0, "phase": "warmup"}),
        ("phase", {"iter": 5, "phase": "mct_warmup"}),
        ("phase", {"iter": 7, "phase": "mcts"}),
    ]
    assert events[-1][0] == "complete"
    assert events[-1][1]["phase_counts"] == {"warmup": 5, "mct_warmup": 2, "mcts": 3}


# ----- FLOPs window -----
def test_census_of_toy_window(toy_space):
    assert flops((1, 1), toy_space) == TOY_BUDGET
    assert flops_window_census(toy_space, TOY_BUDGET) == (1, 4)
    assert in_window((1, 1), toy_space, TOY_BUDGET, (0.9, 1.0))
    assert not in_window((0, 1), toy_space, TOY_BUDGET, (0.9, 1.0))


def test_filtered_phases_stay_in_window(toy_space):
    cfg = TrainConfig(total_iters=40, ws=0.25, wm=0.25, flops_budget=TOY_BUDGET)
    _, log = run_training(toy_space, LossFn(lambda a: 1.0), cfg)
    for rec in log.records:
        if rec.phase != "warmup":
            assert rec.arch == "11"
    assert len({r.arch for r in log.records if r.phase == "warmup"}) > 1


def test_flops_reduction_off_ignores_budget(toy_space):
    cfg = TrainConfig(total_iters=40, ws=0.0, wm=1.0, flops_budget=TOY_BUDGET, flops_reduction=False)
    _, log = run_training(toy_space, LossFn(lambda a: 1.0), cfg)
    assert len({r.arch for r in log.records}) > 1


def test_every_filtered_arch_obeys_budget_on_bench(bench_space):
    budget = 60_000_000
    cfg = TrainConfig(total_iters=60, ws=0.0, wm=0.5, flops_budget=budget)
    _, log = run_training(bench_space, LossFn(lambda a: 1.0 + 0.01 * sum(a)), cfg)
    for rec in log.records:
        f = flops(arch_from_string(rec.arch, bench_space), bench_space)
        assert 0.9 * budget <= f <= budget


def test_infeasible_budget_stalls(toy_space):
    cfg = TrainConfig(total_iters=10, ws=0.0, wm=1.0, flops_budget=1, max_tries=50)
    with pytest.raises(BudgetStallError) as info:
        run_training(toy_space, LossFn(lambda a: 1.0), cfg)
    assert info.value.tries == 50 and info.value.budget == 1


def test_sample_with_flops_budget_direct(toy_space):
    rng = np.random.default_rng(0)
    sampler = lambda: tuple(int(c) for c in rng.integers(0, 2, size=2))  # noqa: E731
    assert sample_with_flops_budget(toy_space, sampler, TOY_BUDGET) == (1, 1)
    with pytest.raises(ValueError):
        sample_with_flops_budget(toy_space, sampler, TOY_BUDGET, max_tries=0)


# ----- evaluator failures -----
def test_evaluator_exception_is_wrapped(space3):
    with pytest.raises(EvaluatorError, match="iteration 7"):
        run_training(space3, LossFn(count_loss, fail_at=7), TrainConfig(total_iters=20, ws=0.5, wm=0.2))


def test_non_positive_loss_is_rejected(space3):
    with pytest.raises(EvaluatorError, match="positive"):
        run_training(space3, LossFn(lambda a: 0.0), TrainConfig(total_iters=5))
