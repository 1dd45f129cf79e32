import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypertype.hierarchy import (
    AnnotatedInstance,
    HierarchyError,
    TypeEntry,
    TypeInventory,
    WeightedTypeGraph,
    build_freq_graph,
    build_pmi_graph,
    load_taxonomy,
    merge_graphs,
    transitive_closure,
)


def inv_of(names, granularity="ultra"):
    return TypeInventory.from_pairs([(n, granularity) for n in names])


def inst(*types):
    return AnnotatedInstance(["a", "b", "c"], 1, 2, frozenset(types))


def brute_counts(gold_sets):
    single, pair = {}, {}
    for gs in gold_sets:
        gs = sorted(gs)
        for t in gs:
            single[t] = single.get(t, 0) + 1
        for i in range(len(gs)):
            for j in range(i + 1, len(gs)):
                pair[(gs[i], gs[j])] = pair.get((gs[i], gs[j]), 0) + 1
    return single, pair


def brute_ppmi(gold_sets):
    n = len(gold_sets)
    single, pair = brute_counts(gold_sets)
    out = {}
    for (a, b), c in pair.items():
        pmi = math.log((c / n) / ((single[a] / n) * (single[b] / n)))
        if pmi > 0:
            out[(a, b)] = pmi
    return out


def random_corpus(rng, n_types):
    n = int(rng.integers(1, 1001))
    sets = []
    for _ in range(n):
        k = int(rng.integers(1, 7))
        sets.append(frozenset(rng.choice(n_types, size=min(k, n_types), replace=False).tolist()))
    return sets


# -- inventory and instances -----------------------------------------------


def test_inventory_roundtrip(tmp_path):
    inv = TypeInventory.from_pairs([("person", "coarse"), ("artist", "fine"), ("painter", "ultra")])
    path = tmp_path / "inv.txt"
    inv.save(path)
    assert TypeInventory.load(path) == inv
    assert inv.id_of("artist") == 1 and inv.granularity_of(2) == "ultra"
    assert inv.split_by_granularity({2, 0}) == {"coarse": [0], "fine": [], "ultra": [2]}


def test_inventory_invariants():
    with pytest.raises(HierarchyError):
        TypeInventory([TypeEntry(1, "a", "coarse")])
    with pytest.raises(HierarchyError):
        TypeInventory.from_pairs([("a", "coarse"), ("a", "fine")])
    with pytest.raises(HierarchyError):
        TypeInventory.from_pairs([("a", "medium")])
    with pytest.raises(HierarchyError):
        inv_of(["a"]).id_of("b")


def test_instance_invariants():
    with pytest.raises(HierarchyError):
        AnnotatedInstance(["a"], 0, 0, frozenset({0}))
    with pytest.raises(HierarchyError):
        AnnotatedInstance(["a"], 0, 2, frozenset({0}))
    with pytest.raises(HierarchyError):
        AnnotatedInstance(["a"], 0, 1, frozenset())
    assert inst(0).mention_tokens == ["b"]


# -- graph container ----------------------------------------------------------


def test_graph_invariants():
    g = WeightedTypeGraph(3)
    g.add_edge(0, 1, 2.0)
    with pytest.raises(HierarchyError):
        g.add_edge(1, 0, 1.0)
    with pytest.raises(HierarchyError):
        g.add_edge(2, 2, 1.0)
    with pytest.raises(HierarchyError):
        g.add_edge(0, 5, 1.0)
    with pytest.raises(HierarchyError):
        g.add_edge(0, 2, 0.0)
    assert g.weight(1, 0) == 2.0


def test_graph_file_roundtrip(tmp_path):
    g = WeightedTypeGraph(4)
    g.add_edge(0, 1, 0.1 + 0.2)
    g.add_edge(3, 2, 1.0)
    path = tmp_path / "g.txt"
    g.save(path)
    back = WeightedTypeGraph.load(path)
    assert back.num_nodes == 4 and back.undirected() == g.undirected()
    assert path.read_text().splitlines()[0] == "nodes=4"


def test_graph_parse_error_has_line_number(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("nodes=3\n0 1 1.0\n1 2 oops\n")
    with pytest.raises(HierarchyError, match=":3:"):
        WeightedTypeGraph.load(path)


# -- frequency and PPMI -------------------------------------------------------


def test_freq_example():
    g = build_freq_graph([inst(0, 1), inst(0, 1), inst(0, 2)], inv_of("ABC"))
    assert g.undirected() == {(0, 1): 2.0, (0, 2): 1.0}


def test_freq_single_typed_is_empty():
    assert len(build_freq_graph([inst(0), inst(1), inst(1)], inv_of("AB"))) == 0


def test_pmi_worked_example():
    g = build_pmi_graph([inst(0, 1), inst(0, 1), inst(0, 2), inst(3)], inv_of("ABCD"))
    # (A, C) also has p(A,C) / (p(A) p(C)) = (1/4) / (3/4 * 1/4) = 4/3
    assert set(g.undirected()) == {(0, 1), (0, 2)}
    assert abs(g.weight(0, 1) - math.log(4 / 3)) < 1e-12
    assert abs(g.weight(0, 2) - math.log(4 / 3)) < 1e-12
    assert abs(g.weight(0, 1) - 0.2877) < 1e-4


def test_pmi_drops_independent_pairs():
    # p(A,C) = 1/4 = p(A) p(C) = 1/2 * 1/2 -> pmi 0 -> no edge
    sets = [inst(0, 2), inst(0), inst(1, 2), inst(1)]
    assert not build_pmi_graph(sets, inv_of("ABC")).has_edge(0, 2)


def test_builders_reject_unknown_and_empty():
    with pytest.raises(HierarchyError):
        build_freq_graph([inst(0, 7)], inv_of("AB"))
    with pytest.raises(HierarchyError):
        build_pmi_graph([], inv_of("AB"))


def test_builders_match_brute_force_on_random_corpora():
    rng = np.random.default_rng(7)
    for trial in range(100):
        n_types = int(rng.integers(2, 15))
        sets = random_corpus(rng, n_types)
        inv = inv_of([f"t{i}" for i in range(n_types)])
        instances = [inst(*s) for s in sets]
        _, pair = brute_counts(sets)
        assert build_freq_graph(instances, inv).undirected() == {k: float(v) for k, v in pair.items()}
        ppmi = build_pmi_graph(instances, inv).undirected()
        expected = brute_ppmi(sets)
        assert set(ppmi) == set(expected), trial
        for k, w in expected.items():
            assert abs(ppmi[k] - w) < 1e-12
            assert ppmi[k] > 0


@given(st.lists(st.sets(st.integers(0, 5), min_size=1, max_size=4), min_size=1, max_size=40))
def test_ppmi_invariant_under_duplication(sets):
    inv = inv_of("ABCDEF")
    once = build_pmi_graph([inst(*s) for s in sets], inv).undirected()
    twice = build_pmi_graph([inst(*s) for s in sets + sets], inv).undirected()
    assert set(once) == set(twice)
    for k in once:
        assert abs(once[k] - twice[k]) < 1e-12


# -- taxonomy -----------------------------------------------------------------


POLITICS = inv_of(["person", "politician", "president", "diplomat"])


def test_taxonomy_example(tmp_path):
    path = tmp_path / "tax.txt"
    path.write_text("president politician\npolitician person\ndiplomat politician\n")
    g = load_taxonomy(path, POLITICS)
    assert len(g) == 3 and all(w == 1.0 for _, _, w in g.edge_list())
    assert g.has_edge(2, 1) and g.has_edge(1, 0) and g.has_edge(3, 1)


def test_taxonomy_empty(tmp_path):
    path = tmp_path / "tax.txt"
    path.write_text("")
    assert len(load_taxonomy(path, POLITICS)) == 0


@pytest.mark.parametrize("text", ["person person\n", "president politician\npresident politician\n",
                                  "wizard person\n", "only\n"])
def test_taxonomy_errors(tmp_path, text):
    path = tmp_path / "tax.txt"
    path.write_text(text)
    with pytest.raises(HierarchyError):
        load_taxonomy(path, POLITICS)


def test_taxonomy_lists_every_unknown_name(tmp_path):
    path = tmp_path / "tax.txt"
    path.write_text("wizard person\npolitician person\nelf hobbit\n")
    with pytest.raises(HierarchyError) as err:
        load_taxonomy(path, POLITICS)
    msg = str(err.value)
    assert all(name in msg for name in ("wizard", "elf", "hobbit"))
    assert ":1:" in msg and ":3:" in msg


# -- closure and merge --------------------------------------------------------


def chain(n):
    g = WeightedTypeGraph(n)
    for i in range(n - 1):
        g.add_edge(i, i + 1, 1.0)
    return g


def binary_tree(levels):
    n = 2 ** levels - 1
    g = WeightedTypeGraph(n)
    for child in range(1, n):
        g.add_edge(child, (child - 1) // 2, 1.0)
    return g


def brute_closure_pairs(g):
    parents = {}
    for a, b, _ in g.edge_list():
        parents.setdefault(a, []).append(b)
    pairs = set()
    for start in range(g.num_nodes):
        stack = list(parents.get(start, []))
        while stack:
            x = stack.pop()
            pairs.add(tuple(sorted((start, x))))
            stack.extend(parents.get(x, []))
    return pairs


def test_closure_chain():
    c = transitive_closure(chain(3))
    assert c.has_edge(0, 2) and len(c) == 3


def test_closure_tree_has_ten_edges():
    g = binary_tree(3)
    c = transitive_closure(g)
    assert len(c) == 10
    assert set(c.undirected()) == brute_closure_pairs(g)


def test_closure_idempotent_and_monotone():
    g = binary_tree(4)
    g.set_weight(1, 0, 3.0)
    once = transitive_closure(g)
    assert transitive_closure(once).undirected() == once.undirected()
    for k, w in g.undirected().items():
        assert once.undirected()[k] >= w
    assert once.weight(1, 0) == 3.0


def test_closure_parent_to_child_direction():
    g = WeightedTypeGraph(3)
    g.add_edge(2, 1, 1.0)
    g.add_edge(1, 0, 1.0)
    c = transitive_closure(g, direction="parent_to_child")
    assert c.has_edge(2, 0)


def test_closure_detects_cycle():
    g = WeightedTypeGraph(3)
    g.add_edge(0, 1)
    g.add_edge(1, 2)
    g.add_edge(2, 0)
    with pytest.raises(HierarchyError, match="cycle"):
        transitive_closure(g)


def test_merge_rules():
    a = WeightedTypeGraph(3)
    a.add_edge(0, 1, 2.0)
    b = WeightedTypeGraph(3)
    b.add_edge(1, 0, 0.5)
    b.add_edge(1, 2, 1.0)
    assert merge_graphs(a, b).weight(0, 1) == 2.5
    assert merge_graphs(a, b, "max").weight(0, 1) == 2.0
    assert merge_graphs(a, b).undirected() == merge_graphs(b, a).undirected()
    assert merge_graphs(a, WeightedTypeGraph(3)).undirected() == a.undirected()
    with pytest.raises(HierarchyError):
        merge_graphs(a, WeightedTypeGraph(4))
