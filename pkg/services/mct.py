"""
Monte Carlo tree over layer-wise operation choices.
- node statistics: visits n and cumulative reward q_sum (UCT uses the running mean q_sum / n)
- moving-average loss baseline; reward = baseline / loss
- node communication table G[layer][op], shared by all nodes choosing `op` at that layer
- UCT scores (train: exploration + communication, search: communication only) and softmax sampling
- JSON snapshot / restore keyed by the space fingerprint
"""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from schemas import SNAPSHOT_FORMAT, BaselineRecord, NodeRecord, TreeSnapshot, UctParams
from services.errors import SnapshotError
from services.search_space import ARCH_DIGITS, Architecture, SearchSpace, arch_to_string
from utils.file_utils import write_text

logger = logging.getLogger(__name__)

Mode = Literal["train", "search"]


# ----- Tree data -----
@dataclass
class MctNode:
    op_index: int  # -1 for the root
    depth: int  # 0 for the root, 1..L for layer choices
    visits: int = 0
    q_sum: float = 0.0
    children: dict[int, "MctNode"] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return self.q_sum / self.visits

    def child(self, op: int) -> "MctNode":
        """Existing child or a new unvisited one."""
        node = self.children.get(op)
        if node is None:
            node = MctNode(op_index=op, depth=self.depth + 1)
            self.children[op] = node
        return node


@dataclass
class NodeCommTable:
    g: list[list[float]]  # g[layer][op], layer 0-based
    gamma: float = 0.9

    @classmethod
    def zeros(cls, space: SearchSpace, gamma: float = 0.9) -> "NodeCommTable":
        return cls(g=[[0.0] * n for n in space.sizes], gamma=gamma)

    def update(self, layer: int, op: int, r: float) -> None:
        self.g[layer][op] = self.gamma * self.g[layer][op] + (1.0 - self.gamma) * r


@dataclass(frozen=True)
class BaselineState:
    value: float = 0.0
    beta: float = 0.9
    initialized: bool = False


@dataclass
class MctTree:
    space: SearchSpace
    root: MctNode
    comm: NodeCommTable
    baseline: BaselineState

    @property
    def num_layers(self) -> int:
        return self.space.num_layers


def new_tree(space: SearchSpace, beta: float = 0.9, gamma: float = 0.9) -> MctTree:
    return MctTree(
        space=space,
        root=MctNode(op_index=-1, depth=0),
        comm=NodeCommTable.zeros(space, gamma),
        baseline=BaselineState(beta=beta),
    )


def node_at(tree: MctTree, prefix: Sequence[int]) -> Optional[MctNode]:
    """Node reached by `prefix` from the root, or None if that path was never expanded."""
    node = tree.root
    for op in prefix:
        node = node.children.get(op)
        if node is None:
            return None
    return node


# ----- Baseline and reward -----
def _check_loss(train_loss: float) -> float:
    loss = float(train_loss)
    if not math.isfinite(loss) or loss <= 0:
        raise ValueError(f"training loss must be positive and finite, got {train_loss!r}")
    return loss


def update_baseline(state: BaselineState, train_loss: float) -> BaselineState:
    loss = _check_loss(train_loss)
    if not state.initialized:
        return replace(state, value=loss, initialized=True)
    return replace(state, value=state.beta * state.value + (1.0 - state.beta) * loss)


def reward(state: BaselineState, train_loss: float) -> float:
    """Baseline / loss; above 1 means better than the running average."""
    if not state.initialized:
        raise ValueError("baseline not initialized; call update_baseline first")
    return state.value / _check_loss(train_loss)


def backpropagate(tree: MctTree, arch: Architecture, r: float) -> None:
    """Route reward `r` through every node on `arch`'s path and into G."""
    arch = tree.space.validate_arch(arch)
    r = float(r)
    if not math.isfinite(r) or r < 0:
        raise ValueError(f"reward must be non-negative and finite, got {r!r}")
    node = tree.root
    node.visits += 1
    node.q_sum += r
    for layer, op in enumerate(arch):
        node = node.child(op)
        node.visits += 1
        node.q_sum += r
        tree.comm.update(layer, op, r)


# ----- UCT -----
def uct_train(node: MctNode, parent_visits: int, g: float, p: UctParams) -> float:
    if node.visits < 1:
        raise ValueError("uct_train needs a visited node")
    if parent_visits < 1:
        raise ValueError(f"parent_visits must be >= 1, got {parent_visits}")
    return node.mean + p.c1 * math.sqrt(math.log(parent_visits) / node.visits) + p.c2 * g


def uct_search(node: MctNode, g: float, p: UctParams) -> float:
    if node.visits < 1:
        raise ValueError("uct_search needs a visited node")
    return node.mean + p.c2 * g


def child_scores(
    tree: MctTree,
    node: Optional[MctNode],
    layer: int,
    mode: Mode,
    p: UctParams,
    ops: Optional[Sequence[int]] = None,
) -> list[float]:
    """UCT score per candidate op of `layer` below `node` (None = never expanded).

    Unvisited children score max(visited sibling) + C1·sqrt(log(n_parent + 1));
    if no sibling was visited all scores are 0 (uniform softmax).
    """
    if ops is None:
        ops = range(tree.space.sizes[layer])
    g_row = tree.comm.g[layer]
    parent_n = 0 if node is None else node.visits
    scores: list[Optional[float]] = []
    for op in ops:
        child = None if node is None else node.children.get(op)
        if child is None or child.visits == 0:
            scores.append(None)
        elif mode == "train":
            scores.append(uct_train(child, parent_n, g_row[op], p))
        else:
            scores.append(uct_search(child, g_row[op], p))
    finite = [s for s in scores if s is not None]
    if not finite:
        return [0.0] * len(scores)
    first_play = max(finite) + p.c1 * math.sqrt(math.log(parent_n + 1))
    return [first_play if s is None else s for s in scores]


def softmax(scores: Sequence[float], tau: float) -> np.ndarray:
    s = np.asarray(scores, dtype=float) / tau
    e = np.exp(s - s.max())
    return e / e.sum()


def sample_child(scores: Sequence[float], tau: float, rng: np.random.Generator) -> int:
    """Index i with probability exp(s_i/τ) / Σ_j exp(s_j/τ)."""
    if len(scores) == 0:
        raise ValueError("sample_child needs at least one score")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not all(math.isfinite(s) for s in scores):
        raise ValueError(f"scores must be finite, got {list(scores)}")
    cdf = np.cumsum(softmax(scores, tau))
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(scores) - 1)


def sample_path(
    tree: MctTree,
    mode: Mode,
    p: UctParams,
    rng: np.random.Generator,
    feasible: Optional[Callable[[tuple[int, ...]], Sequence[int]]] = None,
) -> Architecture:
    """Root-to-leaf walk; each layer's op drawn by softmax over the mode's UCT scores. Read-only.

    `feasible(prefix)` restricts the candidate ops below `prefix`; an empty answer falls back to all ops.
    """
    node: Optional[MctNode] = tree.root
    path: list[int] = []
    for layer in range(tree.num_layers):
        ops = list(feasible(tuple(path))) if feasible else []
        if not ops:
            ops = list(range(tree.space.sizes[layer]))
        scores = child_scores(tree, node, layer, mode, p, ops)
        op = ops[sample_child(scores, p.tau, rng)]
        path.append(op)
        node = None if node is None else node.children.get(op)
    return tuple(path)


def greedy_path(tree: MctTree) -> Architecture:
    """Highest-mean visited child at each depth; falls back to the best G entry below unexplored nodes."""
    node: Optional[MctNode] = tree.root
    path: list[int] = []
    for layer in range(tree.num_layers):
        visited = [] if node is None else [c for c in node.children.values() if c.visits > 0]
        if visited:
            best = max(visited, key=lambda c: (c.mean, -c.op_index))
            op = best.op_index
        else:
            row = tree.comm.g[layer]
            op = max(range(len(row)), key=lambda j: (row[j], -j))
        path.append(op)
        node = None if node is None else node.children.get(op)
    return tuple(path)


# ----- Snapshot -----
def _node_records(tree: MctTree) -> list[NodeRecord]:
    out: list[NodeRecord] = []
    stack: list[tuple[MctNode, tuple[int, ...]]] = [(tree.root, ())]
    while stack:
        node, prefix = stack.pop()
        out.append(NodeRecord(path=arch_to_string(prefix), visits=node.visits, q_sum=node.q_sum))
        for op in sorted(node.children, reverse=True):
            stack.append((node.children[op], prefix + (op,)))
    return out


def snapshot(tree: MctTree) -> bytes:
    snap = TreeSnapshot(
        fingerprint=tree.space.fingerprint(),
        baseline=BaselineRecord(
            value=tree.baseline.value, beta=tree.baseline.beta, initialized=tree.baseline.initialized
        ),
        gamma=tree.comm.gamma,
        g=[list(row) for row in tree.comm.g],
        nodes=_node_records(tree),
    )
    return (snap.model_dump_json(indent=2) + "\n").encode("utf-8")


def restore(data: bytes, space: SearchSpace) -> MctTree:
    try:
        snap = TreeSnapshot.model_validate_json(data)
    except ValidationError as e:
        raise SnapshotError(f"Malformed tree snapshot ({SNAPSHOT_FORMAT} expected): {e.error_count()} error(s)") from e
    if snap.fingerprint != space.fingerprint():
        raise SnapshotError(
            f"Snapshot was taken over a different search space "
            f"(fingerprint {snap.fingerprint[:12]}…, space {space.name!r} is {space.fingerprint()[:12]}…)"
        )
    if [len(row) for row in snap.g] != list(space.sizes):
        raise SnapshotError("G table shape does not match the search space")
    if not snap.nodes or snap.nodes[0].path != "":
        raise SnapshotError("Snapshot node list must start with the root")

    tree = new_tree(space, beta=snap.baseline.beta, gamma=snap.gamma)
    tree.baseline = BaselineState(
        value=snap.baseline.value, beta=snap.baseline.beta, initialized=snap.baseline.initialized
    )
    tree.comm.g = [list(row) for row in snap.g]
    tree.root.visits = snap.nodes[0].visits
    tree.root.q_sum = snap.nodes[0].q_sum
    for rec in snap.nodes[1:]:
        prefix = _parse_prefix(rec.path, space)
        parent = node_at(tree, prefix[:-1])
        if parent is None or prefix[-1] in parent.children:
            raise SnapshotError(f"Node {rec.path!r} is out of order or duplicated")
        node = parent.child(prefix[-1])
        node.visits = rec.visits
        node.q_sum = rec.q_sum
    return tree


def _parse_prefix(path: str, space: SearchSpace) -> tuple[int, ...]:
    if len(path) > space.num_layers or any(ch not in ARCH_DIGITS for ch in path):
        raise SnapshotError(f"Invalid node path {path!r}")
    prefix = tuple(ARCH_DIGITS.index(ch) for ch in path)
    if any(c >= n for c, n in zip(prefix, space.sizes)):
        raise SnapshotError(f"Invalid node path {path!r}: op index out of range")
    return prefix


def save_tree(tree: MctTree, path: str | Path) -> str:
    return write_text(path, snapshot(tree).decode("utf-8"))


def load_tree(path: str | Path, space: SearchSpace) -> MctTree:
    p = Path(path)
    if not p.is_file():
        raise SnapshotError(f"Tree snapshot not found: {p}")
    return restore(p.read_bytes(), space)
