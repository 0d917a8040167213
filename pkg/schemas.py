"""Pydantic schemas: run configs, log/trace records, reports and on-disk file formats."""
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

Phase = Literal["warmup", "mct_warmup", "mcts"]
PHASE_ORDER: tuple[str, ...] = ("warmup", "mct_warmup", "mcts")

BENCHMARK_FORMAT = "nas-bench-macro-v1"
SNAPSHOT_FORMAT = "mct-snapshot-v1"


# ----- Search space config (one row per macro-structure table line) -----
class FixedLayerConfig(BaseModel):
    """Non-searched stem/head layer. `pool` is global average pooling (spatial → 1)."""
    kind: Literal["conv", "block", "pool", "fc"]
    out_channels: Optional[int] = Field(default=None, gt=0)
    kernel_size: int = Field(default=1, gt=0)
    stride: Literal[1, 2] = 1
    expansion_ratio: int = Field(default=1, gt=0)
    se: bool = False


class StageConfig(BaseModel):
    """`n` stacked choice layers; `stride` applies to the first of them only."""
    n: int = Field(gt=0)
    out_channels: int = Field(gt=0)
    stride: Literal[1, 2] = 1
    ops: list[str] = Field(default_factory=list)
    layer_ops: Optional[list[list[str]]] = None  # per-layer override of `ops`, length n
    identity_projection: bool = False  # identity on the stage's transition layer = 1x1 shortcut


class SpaceConfig(BaseModel):
    name: str = "custom"
    input_resolution: int = Field(gt=0)
    input_channels: int = Field(default=3, gt=0)
    stem: list[FixedLayerConfig] = Field(default_factory=list)
    stages: list[StageConfig] = Field(default_factory=list)
    head: list[FixedLayerConfig] = Field(default_factory=list)


# ----- MCT / sampling parameters -----
class UctParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c1: float = Field(default=0.1, ge=0)  # exploration weight
    c2: float = Field(default=0.2, ge=0)  # node communication weight
    tau: float = Field(default=0.0025, gt=0)  # softmax temperature


class _FlopsWindow(BaseModel):
    flops_budget: Optional[int] = Field(default=None, gt=0)
    flops_range: tuple[float, float] = (0.9, 1.0)
    max_tries: Optional[int] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_range(self):
        lo, hi = self.flops_range
        if not 0 < lo <= hi:
            raise ValueError(f"flops_range must satisfy 0 < lo <= hi, got {self.flops_range}")
        return self


class TrainConfig(_FlopsWindow):
    total_iters: int = Field(default=20_000, gt=0)
    ws: float = Field(default=0.5, ge=0, le=1)  # supernet warm-up ratio
    wm: float = Field(default=0.2, ge=0, le=1)  # MCT warm-up ratio
    uct: UctParams = Field(default_factory=UctParams)
    beta: float = Field(default=0.9, ge=0, le=1)
    gamma: float = Field(default=0.9, ge=0, le=1)
    flops_reduction: bool = True
    update_tree: bool = True
    iters_per_epoch: int = Field(default=100, gt=0)  # reporting only
    seed: int = 0

    @model_validator(mode="after")
    def check_ratios(self):
        if self.ws + self.wm > 1 + 1e-12:
            raise ValueError(f"ws + wm must be <= 1, got {self.ws} + {self.wm}")
        return self


class SearchConfig(_FlopsWindow):
    k: int = Field(default=20, gt=0)  # search number
    n_thrd: int = Field(default=6, ge=0)
    batch_size: int = Field(default=128, gt=0)
    full_set_size: Optional[int] = Field(default=None, gt=0)
    uct: UctParams = Field(default_factory=UctParams)
    # a walk that repeats an evaluated network spends its full evaluation on a one-layer variant instead
    distinct: bool = False
    seed: int = 0


class EvoConfig(_FlopsWindow):
    population: int = Field(default=20, ge=2)
    generations: int = Field(default=20, gt=0)
    parent_fraction: float = Field(default=0.5, gt=0, le=1)
    mutation_prob: float = Field(default=0.1, ge=0, le=1)
    crossover: Literal["single_point", "uniform"] = "single_point"
    max_evals: Optional[int] = Field(default=None, gt=0)
    seed: int = 0


# ----- Evaluator specs -----
class EvaluatorSpec(BaseModel):
    """Validation oracle: a benchmark file or a synthetic dependency-structured oracle."""
    kind: Literal["tabular", "synthetic"] = "synthetic"
    benchmark: Optional[str] = None
    pairwise_strength: float = Field(default=0.5, ge=0, le=1)
    noise_sd: float = Field(default=0.005, ge=0)  # per-seed accuracy noise of generated benchmarks
    batch_noise_sd: float = Field(default=0.02, ge=0)  # per-batch observation noise
    seed: int = 0  # defines the synthetic tables, not the observation noise

    @model_validator(mode="after")
    def check_tabular(self):
        if self.kind == "tabular" and not self.benchmark:
            raise ValueError("tabular evaluator requires a benchmark path")
        return self


class TrainerSpec(BaseModel):
    """Surrogate trainer: loss = (b0·exp(−t/T) + b_floor)·(2 − quality)·lognormal(σ)."""
    quality: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    b0: float = Field(default=2.0, gt=0)
    t_scale: float = Field(default=5_000.0, gt=0)
    b_floor: float = Field(default=0.3, ge=0)
    sigma: float = Field(default=0.05, ge=0)


# ----- Training log -----
class TrainRecord(BaseModel):
    iter: int
    phase: Phase
    arch: str
    train_loss: float
    reward: Optional[float] = None  # None while the tree is not updated
    baseline: float


class TrainLog(BaseModel):
    records: list[TrainRecord] = Field(default_factory=list)

    def phase_counts(self) -> dict[str, int]:
        counts = {p: 0 for p in PHASE_ORDER}
        for r in self.records:
            counts[r.phase] += 1
        return counts


# ----- Search / baseline traces (shared CSV layout across searchers) -----
class TraceRecord(BaseModel):
    step: int
    arch: str
    score: float
    incumbent_score: float


class SearchCandidate(BaseModel):
    arch: str
    full_eval_acc: float


class SearchReport(BaseModel):
    candidates: list[SearchCandidate] = Field(default_factory=list)
    best: str
    best_acc: float
    images_consumed: int
    batch_evals: int
    full_evals: int
    worst_case_images_per_path: int


class ReportConfig(BaseModel):
    runs: list[str] = Field(default_factory=list)
    bench: Optional[str] = None


class BaselineReport(BaseModel):
    kind: Literal["random", "evo"]
    best: str
    best_score: float
    evaluations: int


# ----- Benchmark file -----
class BenchmarkEntry(BaseModel):
    mean_acc: float
    accs: list[float]
    flops: int = Field(ge=0)
    params: int = Field(ge=0)


class BenchmarkFile(BaseModel):
    format: Literal["nas-bench-macro-v1"] = BENCHMARK_FORMAT
    space: Union[str, SpaceConfig]
    fingerprint: str
    entries: dict[str, BenchmarkEntry]


# ----- Tree snapshot -----
class NodeRecord(BaseModel):
    path: str  # arch-string prefix; "" is the root
    visits: int = Field(ge=0)
    q_sum: float


class BaselineRecord(BaseModel):
    value: float
    beta: float
    initialized: bool


class TreeSnapshot(BaseModel):
    format: Literal["mct-snapshot-v1"] = SNAPSHOT_FORMAT
    fingerprint: str
    baseline: BaselineRecord
    gamma: float
    g: list[list[float]]
    nodes: list[NodeRecord]


# ----- Run configs (what --config files hold) -----
class GenBenchRunConfig(BaseModel):
    space: Union[str, SpaceConfig] = "bench-macro"
    oracle: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    seeds_per_arch: int = Field(default=3, gt=0)
    seed: int = 0


class TrainRunConfig(BaseModel):
    space: Union[str, SpaceConfig] = "bench-macro"
    trainer: TrainerSpec = Field(default_factory=TrainerSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    seed: int = 0


class SearchRunConfig(BaseModel):
    space: Union[str, SpaceConfig] = "bench-macro"
    tree: Optional[str] = None
    evaluator: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    search: SearchConfig = Field(default_factory=SearchConfig)
    seed: int = 0


class BaselineRunConfig(BaseModel):
    space: Union[str, SpaceConfig] = "bench-macro"
    kind: Literal["random", "evo"] = "random"
    evaluator: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    budget: Optional[int] = Field(default=None, gt=0)  # random: draws (default 20); evo: max_evals
    dedup: bool = False
    evo: EvoConfig = Field(default_factory=EvoConfig)
    seed: int = 0


# ----- Run manifest -----
class RunManifest(BaseModel):
    command: str
    config: dict[str, Any]
    seed: int
    tool_version: str
    space_fingerprint: Optional[str] = None
    started_at: str
    finished_at: Optional[str] = None
    outputs: dict[str, str] = Field(default_factory=dict)
