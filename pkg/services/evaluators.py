"""
Oracles standing in for supernet training and validation.
- BenchmarkTable: canonical arch-string → (accs, mean_acc, flops, params), JSON on disk
- TabularOracle / SyntheticOracle: validation evaluators (full accuracy + per-batch noisy observations)
- SurrogateTrainer: training evaluator whose loss decays with t and with architecture quality
"""
import logging
import math
from pathlib import Path
from typing import Iterator, Optional, Protocol, Sequence, Union

import numpy as np
from pydantic import ValidationError
from scipy.special import expit, logit

from schemas import BENCHMARK_FORMAT, BenchmarkEntry, BenchmarkFile, EvaluatorSpec, SpaceConfig, TrainerSpec
from services.errors import BenchmarkFormatError
from services.search_space import (
    Architecture,
    SearchSpace,
    arch_from_string,
    arch_index,
    arch_to_string,
    canonicalize,
    enumerate_space,
    flops,
    load_space,
    params,
    random_arch,
)
from utils.file_utils import write_json
from utils.seeding import query_rng, substream

logger = logging.getLogger(__name__)

# synthetic accuracies: raw min of the fitting sample → 0.5, raw max → 0.95
SQUASH_LOW, SQUASH_HIGH = 0.5, 0.95
SQUASH_SAMPLES = 1000
# base loss = LOSS_FLOOR − log(max(acc, ACC_EPS))
LOSS_FLOOR = 1e-3
ACC_EPS = 1e-6
DUPLICATE_TOLERANCE = 1e-6
MEAN_TOLERANCE = 1e-9


class ValidationEvaluator(Protocol):
    space: SearchSpace

    def eval_acc(self, arch: Architecture) -> float: ...

    def eval_acc_batch(self, arch: Architecture, batch_id: int) -> float: ...

    def eval_loss_batch(self, arch: Architecture, batch_id: int) -> float: ...


class TrainingEvaluator(Protocol):
    def train_step(self, arch: Architecture, t: int) -> float: ...


# ----- Benchmark table -----
class BenchmarkTable:
    """Lookups go through canonicalize, so every member of a class hits the same record."""

    def __init__(self, space: SearchSpace, entries: dict[str, BenchmarkEntry], space_spec: Union[str, SpaceConfig]):
        self.space = space
        self.entries = entries
        self.space_spec = space_spec

    def __len__(self) -> int:
        return len(self.entries)

    def key(self, arch: Architecture) -> str:
        return arch_to_string(canonicalize(arch, self.space))

    def lookup(self, arch: Architecture) -> BenchmarkEntry:
        k = self.key(arch)
        entry = self.entries.get(k)
        if entry is None:
            raise KeyError(f"architecture {arch_to_string(arch)} (canonical {k}) not in benchmark")
        return entry

    def items(self) -> Iterator[tuple[str, BenchmarkEntry]]:
        return iter(self.entries.items())

    def best(self) -> tuple[str, BenchmarkEntry]:
        return max(self.entries.items(), key=lambda kv: (kv[1].mean_acc, _neg_key(kv[0])))


def _neg_key(key: str) -> tuple[int, ...]:
    # ties on accuracy resolve to the smaller arch-string
    return tuple(-ord(ch) for ch in key)


def _check_entry(key: str, entry: BenchmarkEntry) -> None:
    if not entry.accs:
        raise BenchmarkFormatError(f"entry {key}: empty accs")
    values = [entry.mean_acc, *entry.accs]
    if any(not (0.0 <= a <= 1.0) or not math.isfinite(a) for a in values):
        raise BenchmarkFormatError(f"entry {key}: accuracy out of [0, 1]")
    if abs(math.fsum(entry.accs) / len(entry.accs) - entry.mean_acc) > MEAN_TOLERANCE:
        raise BenchmarkFormatError(f"entry {key}: mean_acc {entry.mean_acc} != mean(accs)")


def _same_record(a: BenchmarkEntry, b: BenchmarkEntry) -> bool:
    if len(a.accs) != len(b.accs) or a.flops != b.flops or a.params != b.params:
        return False
    pairs = [(a.mean_acc, b.mean_acc), *zip(a.accs, b.accs)]
    return all(abs(x - y) <= DUPLICATE_TOLERANCE for x, y in pairs)


def _canonical_entries(space: SearchSpace, raw: dict[str, BenchmarkEntry]) -> dict[str, BenchmarkEntry]:
    """Collapse raw keys onto canonical keys and check the table covers every class."""
    out: dict[str, BenchmarkEntry] = {}
    for key, entry in raw.items():
        try:
            arch = arch_from_string(key, space)
        except ValueError as e:
            raise BenchmarkFormatError(f"unknown arch key {key!r}") from e
        _check_entry(key, entry)
        canon = arch_to_string(canonicalize(arch, space))
        prev = out.get(canon)
        if prev is not None and not _same_record(prev, entry):
            raise BenchmarkFormatError(f"entries {key} and {canon} denote the same network but disagree")
        if prev is None or key == canon:
            out[canon] = entry

    expected = {arch_to_string(canonicalize(a, space)) for a in enumerate_space(space)}
    missing = expected - out.keys()
    if missing:
        raise BenchmarkFormatError(f"benchmark misses {len(missing)} architecture classes (e.g. {min(missing)})")
    return dict(sorted(out.items()))


def load_benchmark(path: Union[str, Path], space: Optional[SearchSpace] = None) -> BenchmarkTable:
    p = Path(path)
    if not p.is_file():
        raise BenchmarkFormatError(f"Benchmark file not found: {p}")
    try:
        data = BenchmarkFile.model_validate_json(p.read_bytes())
    except ValidationError as e:
        raise BenchmarkFormatError(f"{p}: not a {BENCHMARK_FORMAT} file ({e.error_count()} error(s))") from e
    file_space = load_space(data.space)
    if data.fingerprint != file_space.fingerprint():
        raise BenchmarkFormatError(f"{p}: fingerprint does not match the embedded space")
    if space is not None and space.fingerprint() != data.fingerprint:
        raise BenchmarkFormatError(f"{p}: benchmark was built for space {file_space.name!r}, not {space.name!r}")
    entries = _canonical_entries(file_space, data.entries)
    logger.info("loaded benchmark %s: %d classes over %s", p, len(entries), file_space.name)
    return BenchmarkTable(file_space, entries, data.space)


def save_benchmark(table: BenchmarkTable, path: Union[str, Path]) -> str:
    data = BenchmarkFile(
        space=table.space_spec,
        fingerprint=table.space.fingerprint(),
        entries=dict(sorted(table.entries.items())),
    )
    return write_json(path, data)


def generate_benchmark(
    space: SearchSpace,
    oracle: "SyntheticOracle",
    seeds_per_arch: int = 3,
    seed: int = 0,
    space_spec: Union[str, SpaceConfig, None] = None,
) -> BenchmarkTable:
    """One entry per canonical class; each 'seed' is the noise-free accuracy plus N(0, noise_sd)."""
    entries: dict[str, BenchmarkEntry] = {}
    for arch in enumerate_space(space):
        canon = canonicalize(arch, space)
        key = arch_to_string(canon)
        if key in entries:
            continue
        acc = oracle.eval_acc(canon)
        idx = arch_index(canon, space)
        accs = [
            float(np.clip(acc + oracle.noise_sd * query_rng(seed, "bench-seed", idx, s).standard_normal(), 0.0, 1.0))
            for s in range(seeds_per_arch)
        ]
        entries[key] = BenchmarkEntry(
            mean_acc=math.fsum(accs) / len(accs),
            accs=accs,
            flops=flops(canon, space),
            params=params(canon, space),
        )
    logger.info("generated benchmark over %s: %d classes", space.name, len(entries))
    return BenchmarkTable(space, dict(sorted(entries.items())), space_spec if space_spec is not None else space.name)


# ----- Validation oracles -----
class _BatchNoise:
    """Per-batch observations around eval_acc, reproducible per (noise_seed, arch, batch_id)."""

    space: SearchSpace
    batch_noise_sd: float
    noise_seed: int

    def eval_acc(self, arch: Architecture) -> float:
        raise NotImplementedError

    def _z(self, tag: str, arch: Architecture, batch_id: int) -> float:
        return float(query_rng(self.noise_seed, tag, arch_index(arch, self.space), batch_id).standard_normal())

    def eval_acc_batch(self, arch: Architecture, batch_id: int) -> float:
        acc = self.eval_acc(arch)
        if self.batch_noise_sd == 0:
            return acc
        return float(np.clip(acc + self.batch_noise_sd * self._z("batch-acc", arch, batch_id), 0.0, 1.0))

    def base_loss(self, arch: Architecture) -> float:
        return LOSS_FLOOR - math.log(max(self.eval_acc(arch), ACC_EPS))

    def eval_loss_batch(self, arch: Architecture, batch_id: int) -> float:
        """Lognormal around base_loss with mean exactly base_loss."""
        loss = self.base_loss(arch)
        sd = self.batch_noise_sd
        if sd == 0:
            return loss
        return loss * math.exp(sd * self._z("batch-loss", arch, batch_id) - 0.5 * sd * sd)


class TabularOracle(_BatchNoise):
    def __init__(self, table: BenchmarkTable, batch_noise_sd: float = 0.02, noise_seed: int = 0):
        self.table = table
        self.space = table.space
        self.batch_noise_sd = batch_noise_sd
        self.noise_seed = noise_seed

    def eval_acc(self, arch: Architecture) -> float:
        return self.table.lookup(arch).mean_acc


class SyntheticOracle(_BatchNoise):
    """score(α) = Σ_l u[l][α_l] + Σ_{l≥1} w[l][α_{l−1}][α_l], squashed by a fitted logistic."""

    def __init__(
        self,
        space: SearchSpace,
        unary: Sequence[np.ndarray],
        pairwise: Sequence[Optional[np.ndarray]],
        noise_sd: float = 0.005,
        batch_noise_sd: float = 0.02,
        seed: int = 0,
        noise_seed: Optional[int] = None,
    ):
        if len(unary) != space.num_layers or len(pairwise) != space.num_layers:
            raise ValueError("unary/pairwise tables must have one entry per layer")
        self.space = space
        self.unary = [np.asarray(u, dtype=float) for u in unary]
        self.pairwise = [None if w is None else np.asarray(w, dtype=float) for w in pairwise]
        self.noise_sd = noise_sd
        self.batch_noise_sd = batch_noise_sd
        self.seed = seed
        self.noise_seed = seed if noise_seed is None else noise_seed
        self.scale, self.offset = self._fit_squash()

    def raw_score(self, arch: Architecture) -> float:
        total = 0.0
        for l, c in enumerate(arch):
            total += self.unary[l][c]
            if l > 0 and self.pairwise[l] is not None:
                total += self.pairwise[l][arch[l - 1], c]
        return float(total)

    def _fit_squash(self) -> tuple[float, float]:
        rng = substream(self.seed, "squash")
        raws = [self.raw_score(random_arch(self.space, rng)) for _ in range(SQUASH_SAMPLES)]
        lo, hi = min(raws), max(raws)
        if hi - lo < 1e-12:
            return 0.0, float(logit((SQUASH_LOW + SQUASH_HIGH) / 2))
        scale = float((logit(SQUASH_HIGH) - logit(SQUASH_LOW)) / (hi - lo))
        return scale, float(logit(SQUASH_LOW) - scale * lo)

    def eval_acc(self, arch: Architecture) -> float:
        return float(expit(self.scale * self.raw_score(arch) + self.offset))


def generate_synthetic(
    space: SearchSpace,
    pairwise_strength: float,
    noise_sd: float,
    seed: int,
    batch_noise_sd: float = 0.02,
    noise_seed: Optional[int] = None,
) -> SyntheticOracle:
    if not 0.0 <= pairwise_strength <= 1.0:
        raise ValueError(f"pairwise_strength must be in [0, 1], got {pairwise_strength}")
    rng = substream(seed, "space-gen")
    sizes = space.sizes
    unary = [rng.standard_normal(n) * (1.0 - pairwise_strength) for n in sizes]
    pairwise: list[Optional[np.ndarray]] = [None]
    for l in range(1, len(sizes)):
        pairwise.append(rng.standard_normal((sizes[l - 1], sizes[l])) * pairwise_strength)
    return SyntheticOracle(
        space, unary, pairwise, noise_sd=noise_sd, batch_noise_sd=batch_noise_sd, seed=seed, noise_seed=noise_seed
    )


# ----- Training evaluator -----
class SurrogateTrainer:
    """loss(α, t) = (b0·exp(−t/T) + b_floor) · (2 − quality(α)) · exp(σ·Z)."""

    def __init__(
        self,
        quality: ValidationEvaluator,
        b0: float = 2.0,
        t_scale: float = 5_000.0,
        b_floor: float = 0.3,
        sigma: float = 0.05,
        seed: int = 0,
    ):
        self.quality = quality
        self.space = quality.space
        self.b0 = b0
        self.t_scale = t_scale
        self.b_floor = b_floor
        self.sigma = sigma
        self.seed = seed

    def base(self, t: int) -> float:
        return self.b0 * math.exp(-t / self.t_scale) + self.b_floor

    def train_step(self, arch: Architecture, t: int) -> float:
        if t < 0:
            raise ValueError(f"iteration must be >= 0, got {t}")
        loss = self.base(t) * (2.0 - self.quality.eval_acc(arch))
        if self.sigma == 0:
            return loss
        z = query_rng(self.seed, "train", arch_index(arch, self.space), t).standard_normal()
        return loss * math.exp(self.sigma * float(z))


# ----- Factories -----
def build_evaluator(spec: EvaluatorSpec, space: SearchSpace, noise_seed: Optional[int] = None) -> _BatchNoise:
    """Tabular (benchmark file must match `space`) or synthetic oracle from its spec."""
    noise_seed = spec.seed if noise_seed is None else noise_seed
    if spec.kind == "tabular":
        table = load_benchmark(spec.benchmark, space)
        return TabularOracle(table, batch_noise_sd=spec.batch_noise_sd, noise_seed=noise_seed)
    return generate_synthetic(
        space,
        pairwise_strength=spec.pairwise_strength,
        noise_sd=spec.noise_sd,
        seed=spec.seed,
        batch_noise_sd=spec.batch_noise_sd,
        noise_seed=noise_seed,
    )


def build_trainer(spec: TrainerSpec, space: SearchSpace, seed: int = 0) -> SurrogateTrainer:
    quality = build_evaluator(spec.quality, space)
    return SurrogateTrainer(
        quality, b0=spec.b0, t_scale=spec.t_scale, b_floor=spec.b_floor, sigma=spec.sigma, seed=seed
    )
