"""JSON-lines dataset files.

One record per line::

    {"tokens": [...], "mention": [start, end], "coarse": [...], "fine": [...], "ultra": [...]}

Label names are resolved against a :class:`TypeInventory`; the inventory,
not the list a label appears in, decides its granularity.
"""
from __future__ import annotations

import json
from typing import List

from .hierarchy import GRANULARITIES, AnnotatedInstance, HierarchyError, TypeInventory


class DatasetError(ValueError):
    def __init__(self, problems: List[str]):
        self.problems = problems
        shown = "\n  ".join(problems[:50])
        more = f"\n  ... and {len(problems) - 50} more" if len(problems) > 50 else ""
        super().__init__(f"{len(problems)} problem(s):\n  {shown}{more}")


def load_dataset(path, inventory: TypeInventory) -> List[AnnotatedInstance]:
    """Parse a dataset file, collecting every problem before raising."""
    out: List[AnnotatedInstance] = []
    problems: List[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
                tokens = rec["tokens"]
                start, end = rec["mention"]
            except (ValueError, KeyError, TypeError) as exc:
                problems.append(f"{where}: malformed record ({exc})")
                continue
            ids = []
            for g in GRANULARITIES:
                for name in rec.get(g, []):
                    if inventory.has(name):
                        ids.append(inventory.id_of(name))
                    else:
                        problems.append(f"{where}: unknown type {name!r}")
            if not ids:
                if not any(rec.get(g) for g in GRANULARITIES):
                    problems.append(f"{where}: no labels")
                continue
            try:
                out.append(AnnotatedInstance(tokens, int(start), int(end), frozenset(ids)))
            except HierarchyError as exc:
                problems.append(f"{where}: {exc}")
    if problems:
        raise DatasetError(problems)
    return out


def instance_record(inst: AnnotatedInstance, inventory: TypeInventory) -> dict:
    split = inventory.split_by_granularity(inst.gold_types)
    rec = {"tokens": inst.context_tokens, "mention": [inst.mention_start, inst.mention_end]}
    for g in GRANULARITIES:
        rec[g] = [inventory.name_of(t) for t in split[g]]
    return rec


def save_dataset(path, instances, inventory: TypeInventory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_record(inst, inventory)) + "\n")
