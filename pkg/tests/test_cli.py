import json
import logging
import os

import numpy as np
import pytest

from hypertype.cli import RunConfig, main, parse_config_file, resolve_config
from hypertype.hierarchy import TypeInventory, WeightedTypeGraph
from hypertype.projection import StackedProjector
from hypertype.type_embedding import TypeEmbeddingTable

TINY = ["--n-train", "90", "--n-dev", "30", "--n-test", "30"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def corpus(tmp_path):
    out = tmp_path / "syn"
    assert run("gen-synthetic", "--out-dir", out, *TINY) == 0
    return out


def write_inventory(path, pairs):
    path.write_text("".join(f"{n} {g}\n" for n, g in pairs))
    return path


def write_records(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_toy_freq_graph_file(tmp_path, capsys):
    inv = write_inventory(tmp_path / "inv.txt", [("A", "coarse"), ("B", "fine"), ("C", "ultra")])
    rec = lambda *labels: {"tokens": ["x"], "mention": [0, 1], "coarse": list(labels)}
    train = write_records(tmp_path / "t.jsonl", [rec("A", "B"), rec("A", "B"), rec("A", "C")])
    graph = tmp_path / "g.txt"
    assert run("build-hierarchy", "--inventory", inv, "--train", train, "--graph", graph) == 0
    assert graph.read_text() == "nodes=3\n0 1 2.0\n0 2 1.0\n"
    assert "edges=2" in capsys.readouterr().out


def test_empty_taxonomy_warns(tmp_path, caplog):
    inv = write_inventory(tmp_path / "inv.txt", [("A", "coarse"), ("B", "fine")])
    (tmp_path / "tax.txt").write_text("")
    graph = tmp_path / "g.txt"
    with caplog.at_level(logging.WARNING, logger="hypertype"):
        assert run("build-hierarchy", "--inventory", inv, "--taxonomy", tmp_path / "tax.txt",
                   "--method", "taxonomy", "--graph", graph) == 0
    assert "no edges" in caplog.text
    assert len(WeightedTypeGraph.load(graph)) == 0


def test_unknown_method_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("build-hierarchy", "--method", "wordnet")
    assert info.value.code == 2


def test_unknown_labels_listed(tmp_path, capsys):
    inv = write_inventory(tmp_path / "inv.txt", [("A", "coarse")])
    train = write_records(tmp_path / "t.jsonl", [{"tokens": ["x"], "mention": [0, 1], "coarse": ["Q", "A"]},
                                                 {"tokens": ["y"], "mention": [0, 1], "fine": ["R"]}])
    graph = tmp_path / "g.txt"
    assert run("build-hierarchy", "--inventory", inv, "--train", train, "--graph", graph) == 1
    err = capsys.readouterr().err
    assert "'Q'" in err and "'R'" in err and "2 problem(s)" in err
    assert not graph.exists()


def test_config_file_then_flags(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nepochs = 7\nlearning-rate = 0.5\nspace = euclidean\ninclude_root = false\n")
    values = parse_config_file(cfg_file)
    cfg = resolve_config(values, {"epochs": 3})
    assert (cfg.epochs, cfg.learning_rate, cfg.space, cfg.include_root) == (3, 0.5, "euclidean", False)
    assert cfg.batch_size == RunConfig().batch_size
    (tmp_path / "bad.cfg").write_text("no_such_key = 1\n")
    with pytest.raises(ValueError, match="no_such_key"):
        parse_config_file(tmp_path / "bad.cfg")


def test_embed_dim2_file(corpus, tmp_path, capsys):
    graph, emb = tmp_path / "g.txt", tmp_path / "e.txt"
    assert run("build-hierarchy", "--inventory", corpus / "inventory.txt", "--taxonomy", corpus / "taxonomy.txt",
               "--method", "taxonomy", "--graph", graph) == 0
    assert run("embed-types", "--inventory", corpus / "inventory.txt", "--graph", graph,
               "--embeddings", emb, "--embed-dim", 2, "--embed-epochs", 3) == 0
    table = TypeEmbeddingTable.load(emb)
    assert table.dim == 2 and len(table) == 13
    assert np.all(np.linalg.norm(table.vectors, axis=1) < 1)
    assert emb.read_text().splitlines()[0] == "space=hyperbolic dim=2 count=13"
    assert "map=" in capsys.readouterr().out


def test_corrupt_graph_reports_line(corpus, tmp_path, capsys):
    graph = tmp_path / "g.txt"
    graph.write_text("nodes=13\n0 1 1.0\n0 two 1.0\n")
    assert run("embed-types", "--inventory", corpus / "inventory.txt", "--graph", graph,
               "--embeddings", tmp_path / "e.txt") == 1
    assert "g.txt:3" in capsys.readouterr().err
    assert not (tmp_path / "e.txt").exists()


@pytest.fixture
def embedded(corpus, tmp_path):
    graph, emb = tmp_path / "g.txt", tmp_path / "e.txt"
    assert run("build-hierarchy", "--inventory", corpus / "inventory.txt", "--train", corpus / "train.jsonl",
               "--graph", graph) == 0
    assert run("embed-types", "--inventory", corpus / "inventory.txt", "--graph", graph,
               "--embeddings", emb, "--embed-epochs", 2) == 0
    return corpus, emb


def train_args(corpus, emb, ckpt, **extra):
    args = ["train", "--inventory", corpus / "inventory.txt", "--embeddings", emb, "--words", corpus / "words.txt",
            "--train", corpus / "train.jsonl", "--dev", corpus / "dev.jsonl", "--checkpoint", ckpt,
            "--hidden-dim", 16, "--attn-dim", 8, "--pos-dim", 4]
    for k, v in extra.items():
        args += ["--" + k.replace("_", "-"), v]
    return args


def test_zero_epochs_checkpoint_is_initialization(embedded, tmp_path):
    corpus, emb = embedded
    ckpt = tmp_path / "m.zip"
    assert run(*train_args(corpus, emb, ckpt, epochs=0, seed=5)) == 0
    model, meta = StackedProjector.load(ckpt)
    fresh = StackedProjector.init(model.word_dim, model.type_dim, model.encoder_config, 16, 0.3, "hyperbolic", 5)
    for k, v in fresh.parameters().items():
        assert np.array_equal(v, model.parameters()[k])
    assert (tmp_path / "m.zip.losses.txt").read_text() == "epoch loss dev_coarse_macro_f1\n"


def test_missing_dev_is_error(embedded, tmp_path, capsys):
    corpus, emb = embedded
    args = train_args(corpus, emb, tmp_path / "m.zip", epochs=1)
    args[args.index("--dev") + 1] = tmp_path / "nope.jsonl"
    assert run(*args) == 1
    assert "dev file not found" in capsys.readouterr().err
    assert not (tmp_path / "m.zip").exists()


def test_space_mismatch_writes_nothing(embedded, tmp_path, capsys):
    corpus, emb = embedded
    assert run(*train_args(corpus, emb, tmp_path / "m.zip", epochs=1, space="euclidean")) == 1
    assert "space mismatch" in capsys.readouterr().err
    assert not (tmp_path / "m.zip").exists() and not (tmp_path / "m.zip.losses.txt").exists()


def test_evaluate_writes_report_and_histogram(embedded, tmp_path, capsys):
    corpus, emb = embedded
    ckpt = tmp_path / "m.zip"
    assert run(*train_args(corpus, emb, ckpt, epochs=2, batch_size=32)) == 0
    report, hist = tmp_path / "r.txt", tmp_path / "h.txt"
    assert run("evaluate", "--inventory", corpus / "inventory.txt", "--embeddings", emb, "--words",
               corpus / "words.txt", "--test", corpus / "test.jsonl", "--checkpoint", ckpt,
               "--report", report, "--histogram", hist) == 0
    keys = [line.split("=")[0] for line in report.read_text().splitlines()]
    assert "base.ultra.macro_f1" in keys and "augmented.coarse.macro_p" in keys
    counts = [tuple(map(int, line.split())) for line in hist.read_text().splitlines()]
    assert all(1 <= r <= 9 for r, _ in counts)
    n_ultra = sum(1 for line in open(corpus / "test.jsonl") if json.loads(line)["ultra"])
    assert sum(c for _, c in counts) == n_ultra


def forced_fixture(tmp_path, records):
    """1 coarse, 1 fine and 3 ultra types: every prediction is the whole inventory."""
    pairs = [("c", "coarse"), ("f", "fine"), ("u0", "ultra"), ("u1", "ultra"), ("u2", "ultra")]
    inv = write_inventory(tmp_path / "inv.txt", pairs)
    rng = np.random.default_rng(0)
    TypeEmbeddingTable("euclidean", rng.uniform(-0.3, 0.3, size=(5, 3)), [n for n, _ in pairs]).save(tmp_path / "e.txt")
    (tmp_path / "w.txt").write_text("x 0.1 0.2\ny -0.3 0.4\n")
    StackedProjector.init(2, 3, hidden_dim=8, space="euclidean", seed=0).save(tmp_path / "m.zip")
    test = write_records(tmp_path / "test.jsonl", records)
    return ["evaluate", "--inventory", inv, "--embeddings", tmp_path / "e.txt", "--words", tmp_path / "w.txt",
            "--test", test, "--checkpoint", tmp_path / "m.zip", "--report", tmp_path / "r.txt",
            "--histogram", tmp_path / "h.txt"]


def test_planted_perfect_scores_one(tmp_path):
    full = {"tokens": ["x", "y", "x"], "mention": [1, 2], "coarse": ["c"], "fine": ["f"], "ultra": ["u0", "u1", "u2"]}
    assert run(*forced_fixture(tmp_path, [full, full])) == 0
    report = dict(line.split("=") for line in (tmp_path / "r.txt").read_text().splitlines())
    f1_keys = [k for k in report if k.endswith("f1")]
    assert f1_keys and all(float(report[k]) == 1.0 for k in f1_keys)
    assert float(report["base.overall.strict_accuracy"]) == 1.0


def test_empty_test_set_is_error(tmp_path, capsys):
    assert run(*forced_fixture(tmp_path, [])) == 1
    assert "empty" in capsys.readouterr().err
    assert not (tmp_path / "r.txt").exists() and not (tmp_path / "h.txt").exists()


def test_separable_corpus_dev_coarse_f1(tmp_path, capsys):
    # seeds 1-5 of this setup reach 0.95-0.98
    out = tmp_path / "syn"
    assert run("gen-synthetic", "--out-dir", out, "--depth", 4, "--include-root", "false", "--noise", 0,
               "--n-train", 1500, "--n-dev", 100, "--n-test", 10, "--seed", 1) == 0
    graph, emb, ckpt = tmp_path / "g.txt", tmp_path / "e.txt", tmp_path / "m.zip"
    assert run("build-hierarchy", "--inventory", out / "inventory.txt", "--train", out / "train.jsonl",
               "--graph", graph) == 0
    assert run("embed-types", "--inventory", out / "inventory.txt", "--graph", graph, "--embeddings", emb) == 0
    capsys.readouterr()
    assert run(*train_args(out, emb, ckpt, epochs=20, batch_size=32, learning_rate=0.005,
                          hidden_dim=64, attn_dim=100, pos_dim=25)) == 0
    summary = dict(kv.split("=") for kv in capsys.readouterr().out.split())
    assert float(summary["dev_coarse_macro_f1"]) >= 0.9
