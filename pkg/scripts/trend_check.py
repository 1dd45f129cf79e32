"""Hyperbolic vs Euclidean on the synthetic corpus, several seeds.

Prints ultra macro-F1 per run, the seed means, the uniform-random baseline
and the coarse precision/recall with and without coarse-from-ultra
augmentation.

    python3 scripts/trend_check.py --seeds 3
    python3 scripts/trend_check.py --no-root   # 39 types, no shared root label
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from hypertype.experiments import TrendConfig, run_trend, uniform_random_macro_f1
from hypertype.synthetic import generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--no-root", action="store_true", help="leave the tree root out of the inventory")
    args = ap.parse_args()
    cfg = TrendConfig()
    if args.no_root:
        cfg.corpus = replace(cfg.corpus, include_root=False)
    t0 = time.perf_counter()
    ultra = {"hyperbolic": [], "euclidean": []}
    baselines = []
    for seed in range(args.seeds):
        corpus = generate(replace(cfg.corpus, seed=seed))
        baselines.append(uniform_random_macro_f1(corpus))
        for space in ultra:
            run = run_trend(seed, space, cfg, corpus=corpus)
            ultra[space].append(run.ultra_macro_f1)
            b, a = run.base.granularity["coarse"], run.augmented.granularity["coarse"]
            print(f"seed={seed} space={space:10s} map={run.embedding_map:.3f} best_epoch={run.best_epoch:2d} "
                  f"ultra={run.ultra_macro_f1:.3f} coarse P {b.macro_p:.3f}->{a.macro_p:.3f} "
                  f"R {b.macro_r:.3f}->{a.macro_r:.3f} ({run.seconds:.1f}s)")
    base = float(np.mean(baselines))
    for space, vals in ultra.items():
        print(f"{space}: mean ultra macro-F1 {np.mean(vals):.4f}")
    print(f"uniform-random baseline {base:.4f}; total {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
