"""Embed a weighted type graph into the Poincare ball or the Euclidean unit ball.

Training follows the usual Poincare-embedding recipe: sample an edge
``(u, v)`` proportionally to its weight, draw negatives among the
non-neighbours of ``u`` and minimise the softmax loss

    -log( exp(-d(u, v)) / sum_{c in {v} + Neg(u)} exp(-d(u, c)) )

with plain SGD. In hyperbolic space the Euclidean gradient is rescaled by
``(1 - |theta|^2)^2 / 4`` (the inverse of the Poincare metric tensor); in
both spaces rows that leave the ball are retracted onto radius
``1 - EPS_BALL``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geometry import (
    SpaceKind,
    check_ball,
    hyperbolic_distance_grad_rows,
    pairwise_distances,
    retract,
)
from .hierarchy import TypeInventory, WeightedTypeGraph

log = logging.getLogger(__name__)


class EmbeddingError(RuntimeError):
    pass


# The inverse-metric scaling shrinks hyperbolic steps near the boundary, so
# the two spaces need very different step sizes.
DEFAULT_LEARNING_RATE = {SpaceKind.HYPERBOLIC: 0.1, SpaceKind.EUCLIDEAN: 0.005}


@dataclass
class GraphEmbedConfig:
    dim: int = 10
    epochs: int = 20
    # None: DEFAULT_LEARNING_RATE for the target space
    learning_rate: Optional[float] = None
    burn_in_epochs: int = 5
    burn_in_lr_factor: float = 0.1
    negatives_per_edge: int = 10
    init_radius: float = 1e-3
    batch_size: int = 10
    # edge samples drawn per epoch; None means one per edge
    samples_per_epoch: Optional[int] = 4800
    seed: int = 0

    def lr_for(self, space: SpaceKind) -> float:
        if self.learning_rate is None:
            return DEFAULT_LEARNING_RATE[space]
        return self.learning_rate

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.negatives_per_edge < 1:
            raise ValueError("negatives_per_edge must be >= 1")
        if not 0 < self.init_radius < 0.1:
            raise ValueError("init_radius must be small and positive")
        if self.epochs < 0 or self.batch_size < 1 or (self.learning_rate or 0) < 0:
            raise ValueError("epochs, batch_size and learning_rate must be nonnegative/positive")


class TypeEmbeddingTable:
    """One point per inventory type, all inside the unit ball."""

    def __init__(self, space, vectors: np.ndarray, names: Sequence[str]):
        self.space = SpaceKind.parse(space)
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(names):
            raise ValueError(
                f"need one {vectors.shape[-1]}-d vector per type; got {vectors.shape} for {len(names)} names"
            )
        self.vectors = check_ball(vectors, "type embedding")
        self.vectors.setflags(write=False)
        self.names = list(names)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, type_id: int) -> np.ndarray:
        return self.vectors[type_id]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TypeEmbeddingTable)
            and self.space is other.space
            and self.names == other.names
            and np.array_equal(self.vectors, other.vectors)
        )

    def distances(self, queries: np.ndarray, ids: "Sequence[int] | None" = None) -> np.ndarray:
        pts = self.vectors if ids is None else self.vectors[np.asarray(ids, dtype=int)]
        return pairwise_distances(queries, pts, self.space)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"space={self.space.value} dim={self.dim} count={len(self)}\n")
            for i, (name, vec) in enumerate(zip(self.names, self.vectors)):
                fh.write(f"{i} {name} " + " ".join(format(x, ".17g") for x in vec) + "\n")

    @classmethod
    def load(cls, path) -> "TypeEmbeddingTable":
        with open(path) as fh:
            header = fh.readline().split()
            try:
                meta = dict(item.split("=", 1) for item in header)
                space, dim, count = meta["space"], int(meta["dim"]), int(meta["count"])
            except (ValueError, KeyError):
                raise ValueError(f"{path}:1: bad header {' '.join(header)!r}") from None
            names, rows = [], []
            for lineno, line in enumerate(fh, 2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != dim + 2 or int(parts[0]) != len(names):
                    raise ValueError(f"{path}:{lineno}: expected '<id> <name>' and {dim} values")
                names.append(parts[1])
                rows.append([float(x) for x in parts[2:]])
        if len(names) != count:
            raise ValueError(f"{path}: header says {count} types, found {len(names)}")
        return cls(space, np.array(rows, dtype=np.float64).reshape(count, dim), names)


class RankedTypes(list):
    """``[(type_id, distance), ...]`` ascending; ``truncated`` is set when fewer than k exist."""

    truncated: bool = False


def nearest_types(
    table: TypeEmbeddingTable,
    query,
    k: int,
    candidates: "Sequence[int] | None" = None,
) -> RankedTypes:
    """The ``k`` types closest to ``query``, optionally restricted to ``candidates``.

    Ties are broken by lower type id.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (table.dim,):
        raise ValueError(f"query must have shape ({table.dim},), got {query.shape}")
    if table.space is SpaceKind.HYPERBOLIC:
        check_ball(query, "query")
    ids = np.arange(len(table)) if candidates is None else np.asarray(sorted(candidates), dtype=int)
    dist = table.distances(query[None], ids)[0]
    order = np.lexsort((ids, dist))
    out = RankedTypes((int(ids[i]), float(dist[i])) for i in order[:k])
    out.truncated = k > len(ids)
    return out


def reconstruction_map(table: TypeEmbeddingTable, graph: WeightedTypeGraph) -> float:
    """Mean average precision of each node's graph neighbours under distance ranking."""
    if graph.num_nodes > len(table):
        raise ValueError("embedding table does not cover the graph")
    n = graph.num_nodes
    dist = table.distances(table.vectors[:n], np.arange(n))
    aps = []
    ids = np.arange(n)
    for u, nbrs in enumerate(graph.neighbors()):
        if not nbrs:
            continue
        others = ids[ids != u]
        order = others[np.lexsort((others, dist[u, others]))]
        is_nbr = np.isin(order, nbrs)
        ranks = np.flatnonzero(is_nbr) + 1
        aps.append(float(np.mean(np.arange(1, len(ranks) + 1) / ranks)))
    return float(np.mean(aps)) if aps else 1.0


@dataclass
class EmbeddingRun:
    table: TypeEmbeddingTable
    epoch_losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


class EdgeSampler:
    """Draws oriented positive edges proportionally to weight, plus negatives."""

    def __init__(self, graph: WeightedTypeGraph, negatives: int, rng: np.random.Generator):
        edges = graph.edge_list()
        if not edges:
            raise EmbeddingError("cannot embed a graph without edges")
        self.pairs = np.array([(a, b) for a, b, _ in edges], dtype=np.int64)
        weights = np.array([w for _, _, w in edges], dtype=np.float64)
        self.probs = weights / weights.sum()
        self.negatives = negatives
        self.rng = rng
        n = graph.num_nodes
        nbrs = graph.neighbors()
        pools = []
        for u in range(n):
            excluded = set(nbrs[u]) | {u}
            pool = [x for x in range(n) if x not in excluded]
            if not pool:
                # complete neighbourhood: fall back to any other node
                pool = [x for x in range(n) if x != u]
            pools.append(pool)
        self.pool_size = np.array([len(p) for p in pools], dtype=np.int64)
        width = max(1, int(self.pool_size.max()))
        self.pool = np.zeros((n, width), dtype=np.int64)
        for u, p in enumerate(pools):
            self.pool[u, : len(p)] = p

    def edges(self, size: int) -> np.ndarray:
        idx = self.rng.choice(len(self.pairs), size=size, p=self.probs)
        pairs = self.pairs[idx]
        flip = self.rng.random(size) < 0.5
        return np.where(flip[:, None], pairs[:, ::-1], pairs)

    def sample(self, size: int):
        pairs = self.edges(size)
        u = pairs[:, 0]
        slot = np.floor(self.rng.random((size, self.negatives)) * self.pool_size[u][:, None]).astype(np.int64)
        negs = self.pool[u[:, None], slot]
        return u, pairs[:, 1], negs


def _softmax_loss_grads(theta: np.ndarray, u, cands, space: SpaceKind):
    """Loss per sample and gradients w.r.t. theta rows of ``u`` and ``cands``."""
    pu = np.broadcast_to(theta[u][:, None, :], cands.shape + (theta.shape[1],))
    pc = theta[cands]
    if space is SpaceKind.HYPERBOLIC:
        d, gu, gc = hyperbolic_distance_grad_rows(pu, pc)
    else:
        # squared distance: a plain |u - v| gradient has unit norm at any
        # separation and collapses sibling clusters onto single points
        diff = pu - pc
        d = np.sum(diff * diff, axis=-1)
        gu = 2.0 * diff
        gc = -gu
    neg = -d
    shift = neg.max(axis=1, keepdims=True)
    expn = np.exp(neg - shift)
    z = expn.sum(axis=1, keepdims=True)
    loss = d[:, 0] + (np.log(z[:, 0]) + shift[:, 0])
    dd = -expn / z
    dd[:, 0] += 1.0
    grad_u = np.einsum("bk,bkd->bd", dd, gu)
    grad_c = dd[..., None] * gc
    return loss, grad_u, grad_c


def train_type_embeddings(
    graph: WeightedTypeGraph,
    inventory: TypeInventory,
    space,
    config: GraphEmbedConfig = GraphEmbedConfig(),
) -> EmbeddingRun:
    space = SpaceKind.parse(space)
    if graph.num_nodes != len(inventory):
        raise EmbeddingError(
            f"graph has {graph.num_nodes} nodes but the inventory has {len(inventory)} types"
        )
    rng = np.random.default_rng(config.seed)
    n = graph.num_nodes
    theta = rng.uniform(-config.init_radius, config.init_radius, size=(n, config.dim))
    sampler = EdgeSampler(graph, config.negatives_per_edge, rng)
    per_epoch = config.samples_per_epoch or len(sampler.pairs)

    losses: List[float] = []
    for epoch in range(config.epochs):
        lr = config.lr_for(space)
        if epoch < config.burn_in_epochs:
            lr *= config.burn_in_lr_factor
        total, count = 0.0, 0
        for batch, start in enumerate(range(0, per_epoch, config.batch_size)):
            size = min(config.batch_size, per_epoch - start)
            u, v, negs = sampler.sample(size)
            cands = np.concatenate([v[:, None], negs], axis=1)
            loss, gu, gc = _softmax_loss_grads(theta, u, cands, space)
            if not np.all(np.isfinite(loss)):
                raise EmbeddingError(f"non-finite loss at epoch {epoch}, batch {batch}")
            grad = np.zeros_like(theta)
            np.add.at(grad, u, gu)
            np.add.at(grad, cands.reshape(-1), gc.reshape(-1, theta.shape[1]))
            grad /= size
            if space is SpaceKind.HYPERBOLIC:
                sq = np.sum(theta * theta, axis=1, keepdims=True)
                grad *= (1.0 - sq) ** 2 / 4.0
            theta -= lr * grad
            retract(theta)
            total += float(loss.sum())
            count += size
        check_ball(theta, f"embeddings after epoch {epoch}")
        losses.append(total / count)
        log.debug("epoch %d loss %.6f", epoch, losses[-1])
    return EmbeddingRun(TypeEmbeddingTable(space, theta, inventory.names), losses)
