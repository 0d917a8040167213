"""
Chain-structured macro search spaces.
- OperationSpec / LayerSpec / SearchSpace (immutable), built from a SpaceConfig or a named preset
- cost model: multiply-accumulates (1 MAC = 1 FLOP) and weight counts, batch-norm and bias excluded
- canonical form: identities sink to the end of each run of identical stride-1 layers in a stage
"""
import hashlib
import itertools
import logging
import math
import re
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from config import settings
from schemas import FixedLayerConfig, SpaceConfig, StageConfig
from services.errors import SpaceConfigError, SpaceTooLargeError
from utils.file_utils import load_structured

logger = logging.getLogger(__name__)

# one operation index per layer, layer 1 first
Architecture = tuple[int, ...]

SE_REDUCTION = 4
ARCH_DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"
_OP_NAME = re.compile(r"^MB(\d+)_K(\d+)(_SE)?$")


# ----- Cost model -----
def conv_cost(in_channels: int, out_channels: int, kernel_size: int, spatial_out: int) -> tuple[int, int]:
    """Dense k×k convolution: (MACs, weights)."""
    weights = in_channels * out_channels * kernel_size * kernel_size
    return spatial_out * spatial_out * weights, weights


def block_cost(
    in_channels: int,
    out_channels: int,
    expansion_ratio: int,
    kernel_size: int,
    se: bool,
    spatial_in: int,
    stride: int,
) -> tuple[int, int]:
    """Inverted bottleneck: 1x1 expand (skipped when e == 1), k×k depthwise, 1x1 project, optional SE."""
    hidden = expansion_ratio * in_channels
    spatial_out = -(-spatial_in // stride)
    area_in = spatial_in * spatial_in
    area_out = spatial_out * spatial_out
    flops = params = 0
    if expansion_ratio != 1:
        params += in_channels * hidden
        flops += area_in * in_channels * hidden
    params += hidden * kernel_size * kernel_size
    flops += area_out * hidden * kernel_size * kernel_size
    params += hidden * out_channels
    flops += area_out * hidden * out_channels
    if se:
        squeezed = max(1, hidden // SE_REDUCTION)
        fc = 2 * hidden * squeezed
        params += fc
        flops += fc
    return flops, params


# ----- Domain types -----
class OperationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0)
    kind: Literal["identity", "mb_block"]
    expansion_ratio: Optional[int] = None
    kernel_size: Optional[int] = None
    se: Optional[bool] = None

    @model_validator(mode="after")
    def check_attributes(self):
        attrs = (self.expansion_ratio, self.kernel_size, self.se)
        if self.kind == "identity":
            if any(a is not None for a in attrs):
                raise ValueError("identity takes no expansion/kernel/se attributes")
            return self
        if any(a is None for a in attrs):
            raise ValueError("mb_block needs expansion_ratio, kernel_size and se")
        if self.expansion_ratio not in (1, 3, 6):
            raise ValueError(f"expansion ratio must be 1, 3 or 6, got {self.expansion_ratio}")
        if self.kernel_size not in (3, 5, 7):
            raise ValueError(f"kernel size must be 3, 5 or 7, got {self.kernel_size}")
        return self

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    @property
    def name(self) -> str:
        if self.is_identity:
            return "ID"
        return f"MB{self.expansion_ratio}_K{self.kernel_size}" + ("_SE" if self.se else "")

    @classmethod
    def from_name(cls, op_id: int, name: str) -> "OperationSpec":
        """ID | MB{e}_K{k}[_SE]"""
        key = name.strip().upper()
        if key in ("ID", "IDENTITY"):
            return cls(id=op_id, kind="identity")
        m = _OP_NAME.match(key)
        if not m:
            raise SpaceConfigError(f"Unknown operation name {name!r}. Expected ID or MB<e>_K<k>[_SE].")
        return cls(
            id=op_id,
            kind="mb_block",
            expansion_ratio=int(m.group(1)),
            kernel_size=int(m.group(2)),
            se=bool(m.group(3)),
        )


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    ops: tuple[OperationSpec, ...]
    in_channels: int = Field(gt=0)
    out_channels: int = Field(gt=0)
    stride: Literal[1, 2] = 1
    spatial_in: int = Field(gt=0)
    identity_projection: bool = False

    @model_validator(mode="after")
    def check_ops(self):
        if not self.ops:
            raise ValueError("empty operation list")
        ids = [op.id for op in self.ops]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate operation ids {ids}")
        if self.is_transition and self.identity_index is not None and not self.identity_projection:
            raise ValueError(
                f"invalid stride/identity combination: identity cannot map "
                f"{self.in_channels}ch@{self.spatial_in} to {self.out_channels}ch with stride {self.stride} "
                "(enable identity_projection to model it as a 1x1 shortcut)"
            )
        return self

    @property
    def spatial_out(self) -> int:
        return -(-self.spatial_in // self.stride)

    @property
    def is_transition(self) -> bool:
        """Downsamples or changes width; a plain identity is undefined here."""
        return self.stride != 1 or self.in_channels != self.out_channels

    @property
    def identity_index(self) -> Optional[int]:
        for i, op in enumerate(self.ops):
            if op.is_identity:
                return i
        return None

    def geometry_key(self) -> tuple:
        return (self.in_channels, self.out_channels, self.stride, self.spatial_in, tuple(op.name for op in self.ops))

    def op_cost(self, op: OperationSpec) -> tuple[int, int]:
        if op.is_identity:
            if self.is_transition:
                return conv_cost(self.in_channels, self.out_channels, 1, self.spatial_out)
            return 0, 0
        return block_cost(
            self.in_channels,
            self.out_channels,
            op.expansion_ratio,
            op.kernel_size,
            op.se,
            self.spatial_in,
            self.stride,
        )


class SearchSpace(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    layers: tuple[LayerSpec, ...]
    stage_boundaries: tuple[tuple[int, int], ...]
    fixed_cost: tuple[int, int] = (0, 0)  # (flops, params) of stem + head

    _op_costs: tuple = PrivateAttr(default=())
    _runs: tuple = PrivateAttr(default=())

    @model_validator(mode="after")
    def check_partition(self):
        if not self.layers:
            raise ValueError("search space needs at least one layer")
        expected = 0
        for start, end in self.stage_boundaries:
            if start != expected or end <= start:
                raise ValueError(f"stage boundaries {self.stage_boundaries} do not partition [0, {len(self.layers)})")
            expected = end
        if expected != len(self.layers):
            raise ValueError(f"stage boundaries {self.stage_boundaries} do not partition [0, {len(self.layers)})")
        return self

    def model_post_init(self, __context) -> None:
        self._op_costs = tuple(tuple(layer.op_cost(op) for op in layer.ops) for layer in self.layers)
        self._runs = tuple(self._identity_runs())

    def _identity_runs(self) -> Iterator[tuple[int, ...]]:
        """Maximal runs (length ≥ 2) of same-geometry stride-1 layers inside one stage."""
        for start, end in self.stage_boundaries:
            run: list[int] = []
            for i in range(start, end):
                layer = self.layers[i]
                movable = not layer.is_transition and layer.identity_index is not None
                if movable and run and self.layers[run[0]].geometry_key() == layer.geometry_key():
                    run.append(i)
                    continue
                if len(run) > 1:
                    yield tuple(run)
                run = [i] if movable else []
            if len(run) > 1:
                yield tuple(run)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(layer.ops) for layer in self.layers)

    @property
    def size(self) -> int:
        return math.prod(self.sizes)

    @property
    def max_ops(self) -> int:
        return max(self.sizes)

    @property
    def canonical_runs(self) -> tuple[tuple[int, ...], ...]:
        return self._runs

    def op_cost(self, layer: int, op: int) -> tuple[int, int]:
        return self._op_costs[layer][op]

    def fingerprint(self) -> str:
        payload = self.model_dump_json(include={"layers", "stage_boundaries", "fixed_cost"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def validate_arch(self, arch: Architecture) -> Architecture:
        if len(arch) != self.num_layers:
            raise ValueError(f"architecture has {len(arch)} choices, space has {self.num_layers} layers")
        for l, (c, n) in enumerate(zip(arch, self.sizes)):
            if not 0 <= c < n:
                raise ValueError(f"choice {c} at layer {l} out of range [0, {n})")
        return tuple(int(c) for c in arch)


# ----- Operations -----
def _fixed_layer_cost(layer: FixedLayerConfig, channels: int, spatial: int) -> tuple[int, int, int, int]:
    """Returns (flops, params, channels_out, spatial_out) of one stem/head layer."""
    if layer.kind == "pool":
        return 0, 0, channels, 1
    if layer.out_channels is None:
        raise SpaceConfigError(f"fixed {layer.kind} layer needs out_channels")
    if layer.kind == "fc":
        w = channels * layer.out_channels
        return w, w, layer.out_channels, 1
    spatial_out = -(-spatial // layer.stride)
    if layer.kind == "conv":
        f, p = conv_cost(channels, layer.out_channels, layer.kernel_size, spatial_out)
    else:
        f, p = block_cost(
            channels, layer.out_channels, layer.expansion_ratio, layer.kernel_size, layer.se, spatial, layer.stride
        )
    return f, p, layer.out_channels, spatial_out


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    return str(err.get("ctx", {}).get("error", err.get("msg")))


def build_space(config: SpaceConfig) -> SearchSpace:
    """SpaceConfig → validated SearchSpace. Channels and resolution flow through stem, stages, head."""
    channels, spatial = config.input_channels, config.input_resolution
    fixed_flops = fixed_params = 0
    for f in config.stem:
        fl, pa, channels, spatial = _fixed_layer_cost(f, channels, spatial)
        fixed_flops += fl
        fixed_params += pa

    layers: list[LayerSpec] = []
    boundaries: list[tuple[int, int]] = []
    for s, stage in enumerate(config.stages):
        if stage.layer_ops is not None and len(stage.layer_ops) != stage.n:
            raise SpaceConfigError(f"stage {s}: layer_ops has {len(stage.layer_ops)} entries, expected n={stage.n}")
        start = len(layers)
        for i in range(stage.n):
            names = stage.layer_ops[i] if stage.layer_ops is not None else stage.ops
            if not names:
                raise SpaceConfigError(f"stage {s} layer {i}: empty operation list")
            ops = tuple(OperationSpec.from_name(j, name) for j, name in enumerate(names))
            try:
                layer = LayerSpec(
                    ops=ops,
                    in_channels=channels,
                    out_channels=stage.out_channels,
                    stride=stage.stride if i == 0 else 1,
                    spatial_in=spatial,
                    identity_projection=stage.identity_projection,
                )
            except ValidationError as e:
                raise SpaceConfigError(f"stage {s} layer {i}: {_first_error(e)}") from e
            layers.append(layer)
            channels, spatial = layer.out_channels, layer.spatial_out
        boundaries.append((start, len(layers)))

    for f in config.head:
        fl, pa, channels, spatial = _fixed_layer_cost(f, channels, spatial)
        fixed_flops += fl
        fixed_params += pa

    if not layers:
        raise SpaceConfigError(f"space {config.name!r} has no searchable layers")
    space = SearchSpace(
        name=config.name,
        layers=tuple(layers),
        stage_boundaries=tuple(boundaries),
        fixed_cost=(fixed_flops, fixed_params),
    )
    logger.debug("built space %s: %d layers, size %d", space.name, space.num_layers, space.size)
    return space


def flops(arch: Architecture, space: SearchSpace) -> int:
    return space.fixed_cost[0] + sum(space.op_cost(l, c)[0] for l, c in enumerate(arch))


def params(arch: Architecture, space: SearchSpace) -> int:
    return space.fixed_cost[1] + sum(space.op_cost(l, c)[1] for l, c in enumerate(arch))


def canonicalize(arch: Architecture, space: SearchSpace) -> Architecture:
    """Sink identities to the end of each identity run, keeping the order of the other ops."""
    out = list(arch)
    for run in space.canonical_runs:
        identity = space.layers[run[0]].identity_index
        kept = [arch[i] for i in run if arch[i] != identity]
        filled = kept + [identity] * (len(run) - len(kept))
        for i, c in zip(run, filled):
            out[i] = c
    return tuple(out)


def enumerate_space(space: SearchSpace, cap: Optional[int] = None) -> Iterator[Architecture]:
    """Every architecture once, lexicographic (layer 1 most significant)."""
    cap = settings.enumerate_cap if cap is None else cap
    if space.size > cap:
        raise SpaceTooLargeError(space.size, cap)
    return itertools.product(*(range(n) for n in space.sizes))


def random_arch(space: SearchSpace, rng: np.random.Generator) -> Architecture:
    return tuple(int(c) for c in rng.integers(0, space.sizes))


def canonical_classes(space: SearchSpace, cap: Optional[int] = None) -> int:
    return len({canonicalize(a, space) for a in enumerate_space(space, cap)})


# ----- Encoding -----
def arch_to_string(arch: Architecture) -> str:
    """One base-36 digit per layer, e.g. (0, 2, 1) → "021"."""
    return "".join(ARCH_DIGITS[c] for c in arch)


def arch_from_string(text: str, space: SearchSpace) -> Architecture:
    text = text.strip().lower()
    try:
        arch = tuple(ARCH_DIGITS.index(ch) for ch in text)
    except ValueError as e:
        raise ValueError(f"invalid arch string {text!r}") from e
    return space.validate_arch(arch)


def arch_index(arch: Architecture, space: SearchSpace) -> int:
    """Mixed-radix position of `arch` in enumeration order."""
    idx = 0
    for c, n in zip(arch, space.sizes):
        idx = idx * n + c
    return idx


def describe(arch: Architecture, space: SearchSpace) -> list[str]:
    return [space.layers[l].ops[c].name for l, c in enumerate(arch)]


# ----- Presets -----
_BENCH_OPS = ["ID", "MB3_K3", "MB6_K5"]
_MOBILE_OPS = [
    "ID",
    "MB3_K3", "MB3_K5", "MB3_K7", "MB6_K3", "MB6_K5", "MB6_K7",
    "MB3_K3_SE", "MB3_K5_SE", "MB3_K7_SE", "MB6_K3_SE", "MB6_K5_SE", "MB6_K7_SE",
]

PRESETS: dict[str, SpaceConfig] = {
    # CIFAR-10 macro space: 8 choice layers x 3 ops
    "bench-macro": SpaceConfig(
        name="bench-macro",
        input_resolution=32,
        input_channels=3,
        stem=[FixedLayerConfig(kind="conv", out_channels=32, kernel_size=3, stride=1)],
        stages=[
            StageConfig(n=2, out_channels=64, stride=2, ops=_BENCH_OPS, identity_projection=True),
            StageConfig(n=3, out_channels=128, stride=2, ops=_BENCH_OPS, identity_projection=True),
            StageConfig(n=3, out_channels=256, stride=2, ops=_BENCH_OPS, identity_projection=True),
        ],
        head=[
            FixedLayerConfig(kind="conv", out_channels=1280, kernel_size=1),
            FixedLayerConfig(kind="pool"),
            FixedLayerConfig(kind="fc", out_channels=10),
        ],
    ),
    # ImageNet MobileNetV2-like space: 21 choice layers x 13 ops
    "mobilenet-21": SpaceConfig(
        name="mobilenet-21",
        input_resolution=224,
        input_channels=3,
        stem=[
            FixedLayerConfig(kind="conv", out_channels=32, kernel_size=3, stride=2),
            FixedLayerConfig(kind="block", out_channels=16, kernel_size=3, expansion_ratio=1),
        ],
        stages=[
            StageConfig(n=4, out_channels=32, stride=2, ops=_MOBILE_OPS, identity_projection=True),
            StageConfig(n=4, out_channels=40, stride=2, ops=_MOBILE_OPS, identity_projection=True),
            StageConfig(n=4, out_channels=80, stride=2, ops=_MOBILE_OPS, identity_projection=True),
            StageConfig(n=4, out_channels=96, stride=1, ops=_MOBILE_OPS, identity_projection=True),
            StageConfig(n=4, out_channels=192, stride=2, ops=_MOBILE_OPS, identity_projection=True),
            StageConfig(n=1, out_channels=320, stride=1, ops=_MOBILE_OPS, identity_projection=True),
        ],
        head=[
            FixedLayerConfig(kind="conv", out_channels=1280, kernel_size=1),
            FixedLayerConfig(kind="pool"),
            FixedLayerConfig(kind="fc", out_channels=1000),
        ],
    ),
}


@lru_cache(maxsize=None)
def _preset(name: str) -> SearchSpace:
    return build_space(PRESETS[name])


def load_space(spec: Union[str, Path, SpaceConfig]) -> SearchSpace:
    """Preset name, path to a JSON/YAML SpaceConfig, or an already-parsed SpaceConfig."""
    if isinstance(spec, SpaceConfig):
        return build_space(spec)
    key = str(spec)
    if key in PRESETS:
        return _preset(key)
    return build_space(_read_space_config(key))


def _read_space_config(key: str) -> SpaceConfig:
    try:
        data = load_structured(key)
    except FileNotFoundError as e:
        raise SpaceConfigError(f"Unknown space {key!r}: not a preset ({', '.join(PRESETS)}) nor a file") from e
    except ValueError as e:
        raise SpaceConfigError(f"Space file {key}: {e}") from e
    try:
        return SpaceConfig.model_validate(data)
    except ValidationError as e:
        raise SpaceConfigError(f"Space file {key}: {_first_error(e)}") from e


def space_spec_of(spec: Union[str, SpaceConfig]) -> Union[str, SpaceConfig]:
    """Value to embed in files that reference a space: preset name as-is, else the full config."""
    if isinstance(spec, str) and spec not in PRESETS:
        return _read_space_config(spec)
    return spec
