"""Small shared builders for projection/evaluation/acceptance tests."""
import numpy as np

from hypertype import encoder as enc
from hypertype.hierarchy import AnnotatedInstance, TypeInventory
from hypertype.projection import StackedProjector
from hypertype.type_embedding import TypeEmbeddingTable

SMALL_ENC = enc.EncoderConfig(pos_dim=3, attn_dim=4, window=3, max_mention=2)


def small_inventory():
    return TypeInventory.from_pairs(
        [("c0", "coarse"), ("c1", "coarse"), ("f0", "fine"), ("f1", "fine"),
         ("u0", "ultra"), ("u1", "ultra"), ("u2", "ultra"), ("u3", "ultra")]
    )


def random_table(rng, inventory, space, dim=3, radius=0.8):
    x = rng.normal(size=(len(inventory), dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= rng.uniform(0.2, radius, size=(len(inventory), 1))
    return TypeEmbeddingTable(space, x, inventory.names)


def random_words(rng, tokens, dim=3):
    vocab = enc.Vocabulary(tokens)
    matrix = np.zeros((len(vocab), dim))
    matrix[2:] = rng.normal(size=(len(vocab) - 2, dim))
    return enc.WordEmbeddingTable(vocab, matrix)


def random_instance(rng, inventory, tokens, n_tokens=6):
    toks = [tokens[i] for i in rng.integers(len(tokens), size=n_tokens)]
    start = int(rng.integers(0, n_tokens - 1))
    end = int(rng.integers(start + 1, n_tokens + (0 if start == 0 else 1)))
    gold = set()
    for g in ("coarse", "fine", "ultra"):
        ids = inventory.ids(g)
        k = int(rng.integers(0, 3))
        gold.update(rng.choice(ids, size=min(k, len(ids)), replace=False).tolist())
    if not gold:
        gold.add(inventory.ids("ultra")[0])
    return AnnotatedInstance(toks, start, end, frozenset(gold))


def small_model(rng, space, word_dim=3, type_dim=3, hidden=16, dropout=0.0, seed=None):
    seed = int(rng.integers(1 << 30)) if seed is None else seed
    return StackedProjector.init(word_dim, type_dim, SMALL_ENC, hidden, dropout, space, seed)
