"""Type inventories and weighted type graphs.

Graphs come from three sources: an IS-A taxonomy edge list, co-occurrence
counts of gold labels, and positive PMI of those counts. The taxonomy
graph keeps edge orientation (child, parent) so its transitive closure can
be taken; everything downstream treats graphs as undirected.
"""
from __future__ import annotations

import itertools
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

GRANULARITIES = ("coarse", "fine", "ultra")


class HierarchyError(ValueError):
    pass


@dataclass(frozen=True)
class TypeEntry:
    type_id: int
    name: str
    granularity: str


class TypeInventory:
    """Dense list of types, each tagged with one granularity."""

    def __init__(self, entries: Sequence[TypeEntry]):
        self.entries = list(entries)
        self._by_name: Dict[str, int] = {}
        for i, e in enumerate(self.entries):
            if e.type_id != i:
                raise HierarchyError(f"type ids must be dense 0..n-1; entry {i} has id {e.type_id}")
            if e.granularity not in GRANULARITIES:
                raise HierarchyError(f"type {e.name!r}: unknown granularity {e.granularity!r}")
            if e.name in self._by_name:
                raise HierarchyError(f"duplicate type name {e.name!r}")
            self._by_name[e.name] = i
        self._gran_ids = {
            g: [e.type_id for e in self.entries if e.granularity == g] for g in GRANULARITIES
        }

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, str]]) -> "TypeInventory":
        return cls([TypeEntry(i, n, g) for i, (n, g) in enumerate(pairs)])

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, TypeInventory) and self.entries == other.entries

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    def id_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise HierarchyError(f"unknown type name {name!r}") from None

    def has(self, name: str) -> bool:
        return name in self._by_name

    def name_of(self, type_id: int) -> str:
        return self.entries[type_id].name

    def granularity_of(self, type_id: int) -> str:
        return self.entries[type_id].granularity

    def ids(self, granularity: "str | None" = None) -> List[int]:
        if granularity is None:
            return list(range(len(self.entries)))
        if granularity not in GRANULARITIES:
            raise HierarchyError(f"unknown granularity {granularity!r}")
        return list(self._gran_ids[granularity])

    def check_id(self, type_id: int) -> None:
        if not 0 <= type_id < len(self.entries):
            raise HierarchyError(f"unknown type id {type_id}")

    def split_by_granularity(self, type_ids: Iterable[int]) -> Dict[str, List[int]]:
        out: Dict[str, List[int]] = {g: [] for g in GRANULARITIES}
        for t in sorted(set(type_ids)):
            self.check_id(t)
            out[self.entries[t].granularity].append(t)
        return out

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(f"{e.name} {e.granularity}\n")

    @classmethod
    def load(cls, path) -> "TypeInventory":
        """Read ``<name> <granularity>`` lines; ids follow line order."""
        pairs = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise HierarchyError(f"{path}:{lineno}: expected '<name> <granularity>'")
                pairs.append((parts[0], parts[1]))
        return cls.from_pairs(pairs)


@dataclass
class AnnotatedInstance:
    context_tokens: List[str]
    mention_start: int
    mention_end: int
    gold_types: frozenset

    def __post_init__(self):
        self.context_tokens = list(self.context_tokens)
        self.gold_types = frozenset(int(t) for t in self.gold_types)
        if not 0 <= self.mention_start < self.mention_end <= len(self.context_tokens):
            raise HierarchyError(
                f"invalid mention span [{self.mention_start}, {self.mention_end}) "
                f"for {len(self.context_tokens)} tokens"
            )
        if not self.gold_types:
            raise HierarchyError("instance has no gold types")

    @property
    def mention_tokens(self) -> List[str]:
        return self.context_tokens[self.mention_start:self.mention_end]


def _key(a: int, b: int) -> Tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class WeightedTypeGraph:
    """Weighted graph over type ids with at most one edge per unordered pair.

    ``edges`` maps an oriented pair ``(a, b)`` to a positive weight; the
    orientation is only meaningful for taxonomy graphs (child, parent).
    """

    num_nodes: int
    edges: Dict[Tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        given, self.edges = self.edges, {}
        self._pairs: Dict[Tuple[int, int], Tuple[int, int]] = {}
        for (a, b), w in given.items():
            self.add_edge(a, b, w)

    def add_edge(self, a: int, b: int, weight: float = 1.0) -> None:
        a, b = int(a), int(b)
        if a == b:
            raise HierarchyError(f"self-loop on node {a}")
        for n in (a, b):
            if not 0 <= n < self.num_nodes:
                raise HierarchyError(f"edge ({a}, {b}) references unknown node {n}")
        if not weight > 0:
            raise HierarchyError(f"edge ({a}, {b}) has non-positive weight {weight}")
        k = _key(a, b)
        if k in self._pairs:
            raise HierarchyError(f"duplicate edge between {a} and {b}")
        self._pairs[k] = (a, b)
        self.edges[(a, b)] = float(weight)

    def weight(self, a: int, b: int) -> float:
        oriented = self._pairs.get(_key(a, b))
        return 0.0 if oriented is None else self.edges[oriented]

    def set_weight(self, a: int, b: int, weight: float) -> None:
        oriented = self._pairs.get(_key(a, b))
        if oriented is None:
            self.add_edge(a, b, weight)
        else:
            if not weight > 0:
                raise HierarchyError(f"edge ({a}, {b}) has non-positive weight {weight}")
            self.edges[oriented] = float(weight)

    def has_edge(self, a: int, b: int) -> bool:
        return _key(a, b) in self._pairs

    def __len__(self) -> int:
        return len(self.edges)

    def copy(self) -> "WeightedTypeGraph":
        return WeightedTypeGraph(self.num_nodes, dict(self.edges))

    def undirected(self) -> Dict[Tuple[int, int], float]:
        """Edges keyed by ``(min, max)``, sorted."""
        return dict(sorted((_key(a, b), w) for (a, b), w in self.edges.items()))

    def edge_list(self) -> List[Tuple[int, int, float]]:
        return [(a, b, w) for (a, b), w in self.undirected().items()]

    def neighbors(self) -> List[List[int]]:
        adj: List[set] = [set() for _ in range(self.num_nodes)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return [sorted(s) for s in adj]

    def save(self, path) -> None:
        """Text export: ``nodes=<n>`` then ``a b weight`` per edge, in stored orientation."""
        with open(path, "w") as fh:
            fh.write(f"nodes={self.num_nodes}\n")
            for (a, b), w in sorted(self.edges.items()):
                fh.write(f"{a} {b} {w!r}\n")

    @classmethod
    def load(cls, path) -> "WeightedTypeGraph":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("nodes="):
            raise HierarchyError(f"{path}:1: missing 'nodes=<n>' header")
        try:
            graph = cls(int(lines[0][len("nodes="):]))
        except ValueError:
            raise HierarchyError(f"{path}:1: bad node count") from None
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError("expected 'a b weight'")
                graph.add_edge(int(parts[0]), int(parts[1]), float(parts[2]))
            except ValueError as exc:
                raise HierarchyError(f"{path}:{lineno}: {exc}") from None
        return graph


def _count(instances: Sequence[AnnotatedInstance], inventory: TypeInventory):
    if not instances:
        raise HierarchyError("no instances to count")
    single: Counter = Counter()
    pair: Counter = Counter()
    for inst in instances:
        types = sorted(inst.gold_types)
        for t in types:
            inventory.check_id(t)
        single.update(types)
        pair.update(itertools.combinations(types, 2))
    return single, pair


def build_freq_graph(instances, inventory: TypeInventory) -> WeightedTypeGraph:
    """Edge weight = number of instances whose gold set holds both types."""
    _, pair = _count(instances, inventory)
    graph = WeightedTypeGraph(len(inventory))
    for (a, b), c in sorted(pair.items()):
        graph.add_edge(a, b, float(c))
    return graph


def build_pmi_graph(instances, inventory: TypeInventory) -> WeightedTypeGraph:
    """Positive PMI over per-instance occurrence; pairs with PMI <= 0 get no edge."""
    single, pair = _count(instances, inventory)
    n = len(instances)
    graph = WeightedTypeGraph(len(inventory))
    for (a, b), c in sorted(pair.items()):
        # p(a,b) / (p(a) p(b)) == c N / (c_a c_b), exact in integers
        pmi = math.log((c * n) / (single[a] * single[b]))
        if pmi > 0:
            graph.add_edge(a, b, pmi)
    return graph


def load_taxonomy(path, inventory: TypeInventory) -> WeightedTypeGraph:
    """Read ``child parent`` name pairs into a graph of (child, parent) edges of weight 1.

    Every bad line is reported, not just the first.
    """
    graph = WeightedTypeGraph(len(inventory))
    problems = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if len(parts) != 2:
                    raise HierarchyError("expected '<child> <parent>'")
                child, parent = parts
                if child == parent:
                    raise HierarchyError(f"self-loop on {child!r}")
                unknown = [n for n in parts if not inventory.has(n)]
                if unknown:
                    raise HierarchyError("unknown type name(s) " + ", ".join(map(repr, unknown)))
                a, b = inventory.id_of(child), inventory.id_of(parent)
                if graph.has_edge(a, b):
                    raise HierarchyError(f"duplicate edge {child!r} - {parent!r}")
                graph.add_edge(a, b, 1.0)
            except HierarchyError as exc:
                problems.append(f"{os.fspath(path)}:{lineno}: {exc}")
    if problems:
        raise HierarchyError("\n".join(problems))
    return graph


def transitive_closure(graph: WeightedTypeGraph, direction: str = "child_to_parent") -> WeightedTypeGraph:
    """Add an edge of weight 1.0 from every node to each of its ancestors.

    ``direction`` states how stored edges are oriented: ``child_to_parent``
    treats ``(a, b)`` as ``a IS-A b``; ``parent_to_child`` the reverse.
    Existing weights are kept (max with 1.0 where a closure edge coincides).
    """
    if direction not in ("child_to_parent", "parent_to_child"):
        raise HierarchyError(f"unknown direction {direction!r}")
    parents: List[List[int]] = [[] for _ in range(graph.num_nodes)]
    for a, b in graph.edges:
        child, parent = (a, b) if direction == "child_to_parent" else (b, a)
        parents[child].append(parent)

    # iterative DFS with colors for cycle detection
    ancestors: List["set | None"] = [None] * graph.num_nodes
    state = [0] * graph.num_nodes  # 0 new, 1 on stack, 2 done
    for start in range(graph.num_nodes):
        if state[start]:
            continue
        stack = [(start, iter(sorted(parents[start])))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                acc = set()
                for p in parents[node]:
                    acc.add(p)
                    acc |= ancestors[p]
                ancestors[node] = acc
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                raise HierarchyError(f"cycle detected through node {nxt}")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(sorted(parents[nxt]))))

    out = graph.copy()
    for node in range(graph.num_nodes):
        for anc in sorted(ancestors[node]):
            a, b = (node, anc) if direction == "child_to_parent" else (anc, node)
            if out.has_edge(a, b):
                out.set_weight(a, b, max(out.weight(a, b), 1.0))
            else:
                out.add_edge(a, b, 1.0)
    return out


def merge_graphs(a: WeightedTypeGraph, b: WeightedTypeGraph, combine: str = "sum") -> WeightedTypeGraph:
    """Union of edges; shared pairs combine weights by ``sum`` (default) or ``max``."""
    if a.num_nodes != b.num_nodes:
        raise HierarchyError(f"node-count mismatch: {a.num_nodes} vs {b.num_nodes}")
    if combine not in ("sum", "max"):
        raise HierarchyError(f"unknown combine rule {combine!r}")
    out = a.copy()
    for (x, y), w in sorted(b.edges.items()):
        if out.has_edge(x, y):
            old = out.weight(x, y)
            out.set_weight(x, y, old + w if combine == "sum" else max(old, w))
        else:
            out.add_edge(x, y, w)
    return out
