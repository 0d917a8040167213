from typing import Optional

import numpy as np
import pytest

from schemas import SpaceConfig, StageConfig
from services.evaluators import SyntheticOracle, generate_benchmark, generate_synthetic
from services.search_space import SearchSpace, build_space, load_space


def make_space(
    n_layers: int,
    ops: list[str],
    resolution: int = 8,
    channels: int = 16,
    name: str = "toy",
) -> SearchSpace:
    """One stride-1 stage of `n_layers` same-width layers (identity legal everywhere), no stem/head."""
    return build_space(make_config(n_layers, ops, resolution, channels, name))


def make_config(n_layers: int, ops: list[str], resolution: int = 8, channels: int = 16, name: str = "toy") -> SpaceConfig:
    return SpaceConfig(
        name=name,
        input_resolution=resolution,
        input_channels=channels,
        stages=[StageConfig(n=n_layers, out_channels=channels, stride=1, ops=ops)],
    )


def additive_oracle(space: SearchSpace, unary: list[list[float]], batch_noise_sd: float = 0.0) -> SyntheticOracle:
    return SyntheticOracle(
        space,
        [np.array(u) for u in unary],
        [None] * space.num_layers,
        noise_sd=0.0,
        batch_noise_sd=batch_noise_sd,
    )


class TableEvaluator:
    """Validation evaluator over an explicit arch → accuracy map (no noise)."""

    def __init__(self, space: SearchSpace, accs: dict[tuple[int, ...], float]):
        self.space = space
        self.accs = accs
        self.batch_calls = 0

    def eval_acc(self, arch):
        return self.accs[tuple(arch)]

    def eval_acc_batch(self, arch, batch_id):
        self.batch_calls += 1
        return self.accs[tuple(arch)]

    def eval_loss_batch(self, arch, batch_id):
        return 1.0 - self.accs[tuple(arch)] + 1e-3


class LossFn:
    """Training evaluator wrapping a plain function of the architecture."""

    def __init__(self, fn, fail_at: Optional[int] = None):
        self.fn = fn
        self.fail_at = fail_at

    def train_step(self, arch, t):
        if self.fail_at is not None and t == self.fail_at:
            raise RuntimeError("boom")
        return self.fn(tuple(arch))


@pytest.fixture(scope="session")
def bench_space() -> SearchSpace:
    return load_space("bench-macro")


@pytest.fixture(scope="session")
def mobile_space() -> SearchSpace:
    return load_space("mobilenet-21")


@pytest.fixture(scope="session")
def bench_oracle(bench_space):
    return generate_synthetic(bench_space, pairwise_strength=0.5, noise_sd=0.005, seed=7, batch_noise_sd=0.02)


@pytest.fixture(scope="session")
def bench_table(bench_space, bench_oracle):
    return generate_benchmark(bench_space, bench_oracle, seeds_per_arch=3, seed=7, space_spec="bench-macro")
