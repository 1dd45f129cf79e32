"""Nearest-neighbour decoding and loose macro/micro metrics.

A prediction is the union of the nearest coarse type to ``v_coarse``, the
nearest fine type to ``v_fine`` and the three nearest ultra types to
``v_ultra``. Distance ties go to the lower type id.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from .hierarchy import GRANULARITIES, AnnotatedInstance, TypeInventory
from .projection import PreparedData, StackedProjector, prepare
from .type_embedding import TypeEmbeddingTable

PREDICT_K = {"coarse": 1, "fine": 1, "ultra": 3}


class EvaluationError(ValueError):
    pass


@dataclass
class Prediction:
    instance_id: int
    predicted: frozenset
    neighbors: Dict[str, List[Tuple[int, float]]] = field(default_factory=dict)


def _ranked(table: TypeEmbeddingTable, queries: np.ndarray, ids: Sequence[int], k: int):
    """Top-k (ids, distances) for each query, ascending with id tie-break."""
    ids = np.asarray(ids, dtype=int)
    dist = table.distances(queries, ids)
    out = []
    for row in dist:
        order = np.lexsort((ids, row))[:k]
        out.append([(int(ids[i]), float(row[i])) for i in order])
    return out


def _populations(inventory: TypeInventory) -> Dict[str, List[int]]:
    pops = {g: inventory.ids(g) for g in GRANULARITIES}
    for g, ids in pops.items():
        if not ids:
            raise EvaluationError(f"no {g} types in the inventory")
    return pops


def decode(vs: Dict[str, np.ndarray], table: TypeEmbeddingTable, inventory: TypeInventory) -> List[Prediction]:
    """Predictions from already-projected points."""
    pops = _populations(inventory)
    ranked = {g: _ranked(table, vs[g], pops[g], PREDICT_K[g]) for g in GRANULARITIES}
    preds = []
    for i in range(len(vs["coarse"])):
        nbrs = {g: ranked[g][i] for g in GRANULARITIES}
        pred = frozenset(t for g in GRANULARITIES for t, _ in nbrs[g])
        preds.append(Prediction(i, pred, nbrs))
    return preds


def predict_batch(model: StackedProjector, data: PreparedData, words, table, inventory) -> List[Prediction]:
    return decode(model.project(data.tokens, words), table, inventory)


def predict(instance: AnnotatedInstance, model: StackedProjector, words, table, inventory) -> Prediction:
    data = prepare([instance], inventory, words.vocab, model.encoder_config)
    return predict_batch(model, data, words, table, inventory)[0]


def augment_with_coarse(prediction: Prediction, table: TypeEmbeddingTable, inventory: TypeInventory) -> Prediction:
    """Add the coarse type nearest to the top-ranked ultra type's embedding."""
    ultra = prediction.neighbors.get("ultra") or []
    if not ultra:
        raise EvaluationError("prediction has no ultra neighbours")
    coarse = inventory.ids("coarse")
    if not coarse:
        raise EvaluationError("no coarse types in the inventory")
    top = ultra[0][0]
    best = _ranked(table, table.vectors[top][None], coarse, 1)[0][0][0]
    return Prediction(prediction.instance_id, prediction.predicted | {best}, dict(prediction.neighbors))


# ---------------------------------------------------------------------------
# metrics


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def _check_aligned(predictions, gold):
    if len(predictions) != len(gold):
        raise EvaluationError(f"{len(predictions)} predictions for {len(gold)} gold sets")


def _as_sets(items) -> List[Set[int]]:
    return [set(x.predicted) if isinstance(x, Prediction) else set(x) for x in items]


def loose_macro_f1(predictions, gold) -> Tuple[float, float, float]:
    """Per-instance averaged precision and recall, then their harmonic mean.

    Precision averages over instances with a nonempty prediction, recall
    over instances with a nonempty gold set; an empty average counts as 0.
    """
    _check_aligned(predictions, gold)
    preds, golds = _as_sets(predictions), _as_sets(gold)
    ps = [len(p & g) / len(p) for p, g in zip(preds, golds) if p]
    rs = [len(p & g) / len(g) for p, g in zip(preds, golds) if g]
    p = float(np.mean(ps)) if ps else 0.0
    r = float(np.mean(rs)) if rs else 0.0
    return p, r, _f1(p, r)


def loose_micro_f1(predictions, gold) -> Tuple[float, float, float]:
    """Pooled counts; an undefined ratio is reported as 0."""
    _check_aligned(predictions, gold)
    preds, golds = _as_sets(predictions), _as_sets(gold)
    hit = sum(len(p & g) for p, g in zip(preds, golds))
    n_pred = sum(len(p) for p in preds)
    n_gold = sum(len(g) for g in golds)
    p = hit / n_pred if n_pred else 0.0
    r = hit / n_gold if n_gold else 0.0
    return p, r, _f1(p, r)


def strict_accuracy(predictions, gold) -> float:
    _check_aligned(predictions, gold)
    preds, golds = _as_sets(predictions), _as_sets(gold)
    if not preds:
        return 0.0
    return sum(p == g for p, g in zip(preds, golds)) / len(preds)


@dataclass
class Scores:
    macro_p: float
    macro_r: float
    macro_f1: float
    micro_p: float
    micro_r: float
    micro_f1: float

    @classmethod
    def of(cls, preds, golds) -> "Scores":
        return cls(*loose_macro_f1(preds, golds), *loose_micro_f1(preds, golds))


@dataclass
class MetricReport:
    granularity: Dict[str, Scores]
    overall: Scores
    strict_accuracy: float

    def items(self) -> List[Tuple[str, float]]:
        out = []
        for name, s in [*self.granularity.items(), ("overall", self.overall)]:
            for k, v in vars(s).items():
                out.append((f"{name}.{k}", v))
        out.append(("overall.strict_accuracy", self.strict_accuracy))
        return out

    def to_text(self, prefix: str = "") -> str:
        return "".join(f"{prefix}{k}={v!r}\n" for k, v in self.items())


def restrict(sets: Sequence[Set[int]], inventory: TypeInventory, granularity: str) -> List[Set[int]]:
    keep = set(inventory.ids(granularity))
    return [set(s) & keep for s in sets]


def metric_report(predictions, gold, inventory: TypeInventory) -> MetricReport:
    preds, golds = _as_sets(predictions), _as_sets(gold)
    _check_aligned(preds, golds)
    if not preds:
        raise EvaluationError("no instances to evaluate")
    per = {
        g: Scores.of(restrict(preds, inventory, g), restrict(golds, inventory, g))
        for g in GRANULARITIES
    }
    return MetricReport(per, Scores.of(preds, golds), strict_accuracy(preds, golds))


def coarse_macro_f1(model, data: PreparedData, words, table, inventory) -> float:
    preds = predict_batch(model, data, words, table, inventory)
    golds = [inst.gold_types for inst in data.instances]
    return loose_macro_f1(
        restrict(_as_sets(preds), inventory, "coarse"), restrict(_as_sets(golds), inventory, "coarse")
    )[2]


def neighbor_rank_histogram(model, data: PreparedData, words, table, inventory,
                            granularity: str = "ultra", within_granularity: bool = True) -> Dict[int, int]:
    """1-based rank of every gold type of ``granularity`` among the neighbours of v_granularity.

    Ranks are taken within that granularity's types, or over the whole
    inventory with ``within_granularity=False``.
    """
    vs = model.project(data.tokens, words)[granularity]
    pool = np.asarray(inventory.ids(granularity) if within_granularity else inventory.ids(), dtype=int)
    if pool.size == 0:
        raise EvaluationError(f"no {granularity} types in the inventory")
    if len(table) != len(inventory):
        raise EvaluationError("embedding table does not match the inventory")
    dist = table.distances(vs, pool)
    counts: Counter = Counter()
    for i, gd in enumerate(data.gold):
        golds = gd[granularity]
        if not golds:
            continue
        order = pool[np.lexsort((pool, dist[i]))]
        rank_of = {int(t): r + 1 for r, t in enumerate(order)}
        for t in golds:
            if t not in rank_of:
                raise EvaluationError(f"gold type {t} not among the ranked types")
            counts[rank_of[t]] += 1
    return dict(sorted(counts.items()))
