"""Named random sub-streams derived from one user seed."""
import hashlib

import numpy as np

STREAMS = ("space-gen", "training", "search", "evaluator", "baseline")

_SEED_MASK = (1 << 64) - 1


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name (independent of PYTHONHASHSEED)."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "big")


def _entropy(seed: int) -> int:
    # SeedSequence rejects negative entropy
    return int(seed) & _SEED_MASK


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for sub-stream `name` of `seed`. Same (seed, name) → same sequence."""
    return np.random.default_rng(np.random.SeedSequence([_entropy(seed), stream_key(name)]))


def derive_seed(seed: int, name: str) -> int:
    """Integer seed for a component that keys its own queries (e.g. oracle noise)."""
    return int(substream(seed, name).integers(0, 2**63 - 1))


def query_rng(seed: int, tag: str, *keys: int) -> np.random.Generator:
    """Generator for one pointwise query, e.g. (seed, "batch", arch_index, batch_id)."""
    return np.random.default_rng([_entropy(seed), stream_key(tag), *(_entropy(k) for k in keys)])


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Independent integer seeds for `count` repeated runs."""
    children = np.random.SeedSequence(_entropy(seed)).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]
