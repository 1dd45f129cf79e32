"""Reconstruction MAP and depth/norm correlation of type embeddings on a balanced tree.

    python3 scripts/tree_sweep.py --seeds 5 --epochs 20 50
    python3 scripts/tree_sweep.py --space euclidean --lr 0.005 0.02
"""
import argparse
from itertools import product

import numpy as np

from hypertype.hierarchy import TypeInventory, WeightedTypeGraph
from hypertype.type_embedding import GraphEmbedConfig, reconstruction_map, train_type_embeddings


def balanced_tree(branching, levels):
    parent, depth = [-1], [0]
    for lvl in range(1, levels):
        for p in [i for i, d in enumerate(depth) if d == lvl - 1]:
            for _ in range(branching):
                parent.append(p)
                depth.append(lvl)
    g = WeightedTypeGraph(len(parent))
    for c, p in enumerate(parent):
        if p >= 0:
            g.add_edge(c, p, 1.0)
    inv = TypeInventory.from_pairs([(f"n{i}", "ultra") for i in range(len(parent))])
    return inv, g, np.array(depth)


def spearman(a, b):
    # average ranks handle the tied depths
    def ranks(x):
        order = np.argsort(x, kind="stable")
        r = np.empty(len(x))
        r[order] = np.arange(len(x))
        for v in np.unique(x):
            r[x == v] = r[x == v].mean()
        return r
    return float(np.corrcoef(ranks(np.asarray(a, float)), ranks(np.asarray(b, float)))[0, 1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--space", default="hyperbolic", choices=["hyperbolic", "euclidean"])
    ap.add_argument("--branching", type=int, default=3)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, nargs="+", default=[20])
    ap.add_argument("--lr", type=float, nargs="+", default=[None])
    args = ap.parse_args()
    inv, graph, depth = balanced_tree(args.branching, args.levels)
    for epochs, lr in product(args.epochs, args.lr):
        maps, rhos = [], []
        for seed in range(args.seeds):
            cfg = GraphEmbedConfig(epochs=epochs, learning_rate=lr, seed=seed)
            table = train_type_embeddings(graph, inv, args.space, cfg).table
            maps.append(reconstruction_map(table, graph))
            rhos.append(spearman(depth, np.linalg.norm(table.vectors, axis=1)))
        print(f"space={args.space} epochs={epochs} lr={lr} MAP " + " ".join(f"{m:.3f}" for m in maps)
              + " rho " + " ".join(f"{r:.3f}" for r in rhos))


if __name__ == "__main__":
    main()
