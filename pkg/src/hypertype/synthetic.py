"""Synthetic tree-structured typing corpus.

A complete tree with ``branching`` children per node and ``depth`` levels
(root included) is the type inventory. Level ``depth - 1`` is ultra,
level ``depth - 2`` fine, and every shallower level coarse, so the smallest
valid tree (depth 3) has a single coarse root. With ``include_root=False``
the root is left out of the inventory and the label sets, giving a forest
of ``branching`` coarse types (this needs depth >= 4).

Each instance picks a leaf; its gold set is the root-to-leaf path, with
probability ``noise`` one label on that path is swapped for a random type
of the same granularity. Mention tokens are drawn from the leaf's private
words, context tokens from the words of its (true) ancestors mixed with
filler words.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .data import save_dataset
from .encoder import Vocabulary, WordEmbeddingTable
from .hierarchy import AnnotatedInstance, TypeEntry, TypeInventory


class InfeasibleSizeError(ValueError):
    pass


@dataclass
class SyntheticConfig:
    branching: int = 3
    depth: int = 3
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    noise: float = 0.1
    word_dim: int = 10
    words_per_type: int = 3
    filler_words: int = 50
    min_side: int = 2
    max_side: int = 8
    include_root: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.depth < (3 if self.include_root else 4):
            raise InfeasibleSizeError("too shallow to have coarse, fine and ultra levels")
        if self.branching < 2:
            raise InfeasibleSizeError("branching must be >= 2")
        if self.num_types > 100_000:
            raise InfeasibleSizeError(f"tree would have {self.num_types} types")
        if not 0.0 <= self.noise <= 1.0:
            raise InfeasibleSizeError("noise must be in [0, 1]")
        if self.word_dim < 1 or self.words_per_type < 1 or self.filler_words < 1:
            raise InfeasibleSizeError("word_dim, words_per_type and filler_words must be positive")
        if not 1 <= self.min_side <= self.max_side:
            raise InfeasibleSizeError("need 1 <= min_side <= max_side")
        if min(self.n_train, self.n_dev, self.n_test) < 0:
            raise InfeasibleSizeError("split sizes must be nonnegative")

    @property
    def num_types(self) -> int:
        first = 0 if self.include_root else 1
        return sum(self.branching ** level for level in range(first, self.depth))


@dataclass
class SyntheticCorpus:
    inventory: TypeInventory
    parent: List[int]
    level: List[int]
    splits: Dict[str, List[AnnotatedInstance]]
    words: WordEmbeddingTable

    def taxonomy_lines(self) -> List[str]:
        names = self.inventory.names
        return [f"{names[c]} {names[p]}" for c, p in enumerate(self.parent) if p >= 0]

    def path(self, node: int) -> List[int]:
        return _path(self.parent, node)


def _path(parent: List[int], node: int) -> List[int]:
    out = []
    while node >= 0:
        out.append(node)
        node = parent[node]
    return out[::-1]


def _granularity(level: int, depth: int) -> str:
    if level == depth - 1:
        return "ultra"
    if level == depth - 2:
        return "fine"
    return "coarse"


def generate(config: SyntheticConfig) -> SyntheticCorpus:
    config.validate()
    rng = np.random.default_rng(config.seed)
    parent, level = [-1], [0]
    frontier = [0]
    for lvl in range(1, config.depth):
        nxt = []
        for p in frontier:
            for _ in range(config.branching):
                parent.append(p)
                level.append(lvl)
                nxt.append(len(parent) - 1)
        frontier = nxt
    if not config.include_root:
        # drop node 0 and renumber
        parent = [p - 1 if p > 0 else -1 for p in parent[1:]]
        level = level[1:]
        frontier = [f - 1 for f in frontier]
    n = len(parent)
    inventory = TypeInventory(
        [TypeEntry(i, f"type{i}_L{level[i]}", _granularity(level[i], config.depth)) for i in range(n)]
    )
    leaves = frontier
    by_gran = {g: inventory.ids(g) for g in ("coarse", "fine", "ultra")}

    vocab = Vocabulary()
    type_words = [[vocab.add(f"w{t}_{k}") for k in range(config.words_per_type)] for t in range(n)]
    fillers = [vocab.add(f"filler{k}") for k in range(config.filler_words)]
    matrix = np.zeros((len(vocab), config.word_dim))
    matrix[2:] = rng.normal(0.0, 1.0 / np.sqrt(config.word_dim), size=(len(vocab) - 2, config.word_dim))
    words = WordEmbeddingTable(vocab, matrix)
    tok = vocab.tokens

    def make_instance():
        leaf = leaves[int(rng.integers(len(leaves)))]
        path = _path(parent, leaf)
        mention = [tok[type_words[leaf][int(rng.integers(config.words_per_type))]]
                   for _ in range(int(rng.integers(1, 4)))]

        def side():
            out = []
            for _ in range(int(rng.integers(config.min_side, config.max_side + 1))):
                if rng.random() < 0.5:
                    t = path[int(rng.integers(len(path) - 1))]
                    out.append(tok[type_words[t][int(rng.integers(config.words_per_type))]])
                else:
                    out.append(tok[fillers[int(rng.integers(len(fillers)))]])
            return out

        left, right = side(), side()
        gold = list(path)
        if rng.random() < config.noise:
            j = int(rng.integers(len(gold)))
            pool = by_gran[inventory.granularity_of(gold[j])]
            gold[j] = pool[int(rng.integers(len(pool)))]
        tokens = left + mention + right
        return AnnotatedInstance(tokens, len(left), len(left) + len(mention), frozenset(gold))

    splits = {}
    for name, size in (("train", config.n_train), ("dev", config.n_dev), ("test", config.n_test)):
        splits[name] = [make_instance() for _ in range(size)]
    return SyntheticCorpus(inventory, parent, level, splits, words)


def write_corpus(corpus: SyntheticCorpus, out_dir) -> Dict[str, str]:
    """Write inventory, taxonomy, word vectors and the three splits; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "inventory": os.path.join(out_dir, "inventory.txt"),
        "taxonomy": os.path.join(out_dir, "taxonomy.txt"),
        "words": os.path.join(out_dir, "words.txt"),
    }
    corpus.inventory.save(paths["inventory"])
    with open(paths["taxonomy"], "w") as fh:
        fh.writelines(line + "\n" for line in corpus.taxonomy_lines())
    corpus.words.save(paths["words"])
    for name, instances in corpus.splits.items():
        paths[name] = os.path.join(out_dir, f"{name}.jsonl")
        save_dataset(paths[name], instances, corpus.inventory)
    return paths
