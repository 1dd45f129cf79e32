"""Command-line pipeline: gen-synthetic, build-hierarchy, embed-types, train, evaluate.

Every setting lives in :class:`RunConfig`. A run reads defaults, then an
optional ``--config`` file of ``key = value`` lines, then command-line
flags, later sources winning. Commands check their inputs before writing
anything and exit nonzero with a one-line diagnostic on failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Dict, List, Optional

from . import encoder as enc
from .data import DatasetError, load_dataset
from .evaluation import (
    EvaluationError,
    augment_with_coarse,
    metric_report,
    neighbor_rank_histogram,
    predict_batch,
)
from .geometry import BallError, LossWeights, SpaceKind
from .hierarchy import (
    GRANULARITIES,
    HierarchyError,
    TypeInventory,
    WeightedTypeGraph,
    build_freq_graph,
    build_pmi_graph,
    load_taxonomy,
    merge_graphs,
    transitive_closure,
)
from .projection import StackedProjector, TrainConfig, TrainingError, prepare, train
from .synthetic import InfeasibleSizeError, SyntheticConfig, generate, write_corpus
from .type_embedding import (
    EmbeddingError,
    GraphEmbedConfig,
    TypeEmbeddingTable,
    reconstruction_map,
    train_type_embeddings,
)

log = logging.getLogger("hypertype")

METHODS = ("taxonomy", "freq", "pmi", "taxonomy+freq")
CHOICES = {
    "method": METHODS,
    "combine": ("sum", "max"),
    "space": tuple(s.value for s in SpaceKind),
    "histogram_granularity": GRANULARITIES,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # files
    inventory: Optional[str] = None
    taxonomy: Optional[str] = None
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    words: Optional[str] = None
    graph: Optional[str] = None
    embeddings: Optional[str] = None
    checkpoint: Optional[str] = None
    loss_trace: Optional[str] = None
    report: Optional[str] = None
    histogram: Optional[str] = None
    out_dir: Optional[str] = None
    # hierarchy
    method: str = "freq"
    combine: str = "sum"
    # shared
    space: Optional[str] = None
    seed: int = 0
    # type embedding
    embed_dim: int = 10
    embed_epochs: int = 20
    embed_learning_rate: Optional[float] = None
    embed_burn_in_epochs: int = 5
    embed_burn_in_lr_factor: float = 0.1
    embed_negatives_per_edge: int = 10
    embed_init_radius: float = 1e-3
    embed_batch_size: int = 10
    embed_samples_per_epoch: Optional[int] = 4800
    # encoder
    pos_dim: int = 25
    attn_dim: int = 100
    window: int = 10
    max_mention: int = 5
    # projection training
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 50
    max_grad_norm: float = 10.0
    dropout: float = 0.3
    hidden_dim: int = 500
    alpha: float = 1.0
    beta: float = 1.0
    coarse_weight: float = 1.0
    fine_weight: float = 1.0
    ultra_weight: float = 1.0
    # evaluation
    histogram_granularity: str = "ultra"
    within_granularity: bool = True
    # synthetic corpus
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

    def graph_config(self) -> GraphEmbedConfig:
        return GraphEmbedConfig(
            dim=self.embed_dim,
            epochs=self.embed_epochs,
            learning_rate=self.embed_learning_rate,
            burn_in_epochs=self.embed_burn_in_epochs,
            burn_in_lr_factor=self.embed_burn_in_lr_factor,
            negatives_per_edge=self.embed_negatives_per_edge,
            init_radius=self.embed_init_radius,
            batch_size=self.embed_batch_size,
            samples_per_epoch=self.embed_samples_per_epoch,
            seed=self.seed,
        )

    def encoder_config(self) -> enc.EncoderConfig:
        return enc.EncoderConfig(self.pos_dim, self.attn_dim, self.window, self.max_mention)

    def train_config(self, space: SpaceKind) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            max_grad_norm=self.max_grad_norm,
            dropout=self.dropout,
            hidden_dim=self.hidden_dim,
            space=space,
            loss_weights={g: LossWeights(self.alpha, self.beta) for g in GRANULARITIES},
            granularity_weights={
                "coarse": self.coarse_weight, "fine": self.fine_weight, "ultra": self.ultra_weight,
            },
            seed=self.seed,
        )

    def synthetic_config(self) -> SyntheticConfig:
        names = {f.name for f in fields(SyntheticConfig)}
        return SyntheticConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(key: str, text: str):
    field = _FIELDS[key]
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", str(field.type))
    if text.strip().lower() == "none" and kind.startswith("Optional"):
        return None
    if "bool" in kind:
        return _parse_bool(text)
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text


def parse_config_file(path) -> Dict[str, object]:
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, text = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
            try:
                values[key] = _coerce(key, text)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None
    return values


def resolve_config(file_values: Dict[str, object], flag_values: Dict[str, object]) -> RunConfig:
    merged = dict(file_values)
    merged.update(flag_values)
    cfg = RunConfig(**merged)
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown hierarchy method {cfg.method!r}; choose from {', '.join(METHODS)}")
    if cfg.combine not in ("sum", "max"):
        raise ConfigError(f"unknown combine rule {cfg.combine!r}")
    if cfg.space is not None:
        SpaceKind.parse(cfg.space)
    if cfg.histogram_granularity not in GRANULARITIES:
        raise ConfigError(f"unknown granularity {cfg.histogram_granularity!r}")
    return cfg


# ---------------------------------------------------------------------------
# validation helpers


def _need_inputs(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        path = getattr(cfg, key)
        if path is None:
            raise ConfigError(f"missing required setting --{key.replace('_', '-')}")
        if not os.path.isfile(path):
            raise ConfigError(f"{key} file not found: {path}")


def _need_outputs(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        path = getattr(cfg, key)
        if path is None:
            raise ConfigError(f"missing required setting --{key.replace('_', '-')}")
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise ConfigError(f"output directory does not exist: {parent}")


def _write_text(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_synthetic(cfg: RunConfig) -> int:
    if cfg.out_dir is None:
        raise ConfigError("missing required setting --out-dir")
    syn = cfg.synthetic_config()
    syn.validate()
    corpus = generate(syn)
    paths = write_corpus(corpus, cfg.out_dir)
    print(f"wrote {len(corpus.inventory)} types, "
          + ", ".join(f"{k}={len(v)}" for k, v in corpus.splits.items()) + f" to {cfg.out_dir}")
    for key in sorted(paths):
        print(f"{key}={paths[key]}")
    return 0


def build_graph(cfg: RunConfig, inventory: TypeInventory) -> WeightedTypeGraph:
    """The graph for ``cfg.method``; inputs must already be validated."""
    if cfg.method == "taxonomy":
        graph = load_taxonomy(cfg.taxonomy, inventory)
        if len(graph) == 0:
            log.warning("taxonomy %s has no edges; writing an empty graph", cfg.taxonomy)
        return graph
    instances = load_dataset(cfg.train, inventory)
    builder = build_pmi_graph if cfg.method == "pmi" else build_freq_graph
    graph = builder(instances, inventory)
    if cfg.method == "taxonomy+freq":
        taxonomy = load_taxonomy(cfg.taxonomy, inventory)
        if len(taxonomy) == 0:
            log.warning("taxonomy %s has no edges", cfg.taxonomy)
        graph = merge_graphs(transitive_closure(taxonomy), graph, cfg.combine)
    return graph


def cmd_build_hierarchy(cfg: RunConfig) -> int:
    needs = {"taxonomy": ["taxonomy"], "freq": ["train"], "pmi": ["train"], "taxonomy+freq": ["taxonomy", "train"]}
    _need_inputs(cfg, "inventory", *needs[cfg.method])
    _need_outputs(cfg, "graph")
    inventory = TypeInventory.load(cfg.inventory)
    graph = build_graph(cfg, inventory)
    graph.save(cfg.graph)
    print(f"method={cfg.method} nodes={graph.num_nodes} edges={len(graph)}")
    return 0


def cmd_embed_types(cfg: RunConfig) -> int:
    _need_inputs(cfg, "inventory", "graph")
    _need_outputs(cfg, "embeddings")
    space = SpaceKind.parse(cfg.space or "hyperbolic")
    gcfg = cfg.graph_config()
    inventory = TypeInventory.load(cfg.inventory)
    graph = WeightedTypeGraph.load(cfg.graph)
    run = train_type_embeddings(graph, inventory, space, gcfg)
    run.table.save(cfg.embeddings)
    print(f"space={space.value} final_loss={run.final_loss!r} map={reconstruction_map(run.table, graph)!r}")
    return 0


def _load_common(cfg: RunConfig):
    inventory = TypeInventory.load(cfg.inventory)
    table = TypeEmbeddingTable.load(cfg.embeddings)
    if table.names != inventory.names:
        raise ConfigError("embedding file does not match the inventory")
    words = enc.WordEmbeddingTable.load(cfg.words)
    return inventory, table, words


def cmd_train(cfg: RunConfig) -> int:
    _need_inputs(cfg, "inventory", "embeddings", "words", "train", "dev")
    if cfg.loss_trace is None:
        cfg.loss_trace = (cfg.checkpoint or "") + ".losses.txt"
    _need_outputs(cfg, "checkpoint", "loss_trace")
    inventory, table, words = _load_common(cfg)
    space = SpaceKind.parse(cfg.space) if cfg.space is not None else table.space
    if space is not table.space:
        raise ConfigError(f"space mismatch: config says {space.value}, embedding file is {table.space.value}")
    tcfg = cfg.train_config(space)
    ecfg = cfg.encoder_config()
    train_data = prepare(load_dataset(cfg.train, inventory), inventory, words.vocab, ecfg)
    dev_data = prepare(load_dataset(cfg.dev, inventory), inventory, words.vocab, ecfg)
    if len(train_data) == 0 or len(dev_data) == 0:
        raise ConfigError("train and dev sets must be nonempty")
    model = StackedProjector.init(words.dim, table.dim, ecfg, tcfg.hidden_dim, tcfg.dropout, space, tcfg.seed)
    result = train(model, train_data, words, table, tcfg, inventory, dev_data)
    result.model.save(cfg.checkpoint, tcfg, {"best_epoch": result.best_epoch})
    lines = ["epoch loss dev_coarse_macro_f1\n"]
    for i, loss in enumerate(result.epoch_losses):
        dev = result.dev_scores[i] if i < len(result.dev_scores) else float("nan")
        lines.append(f"{i + 1} {loss!r} {dev!r}\n")
    _write_text(cfg.loss_trace, "".join(lines))
    best = result.dev_scores[result.best_epoch - 1] if result.dev_scores else float("nan")
    print(f"epochs={len(result.epoch_losses)} best_epoch={result.best_epoch} dev_coarse_macro_f1={best!r}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    _need_inputs(cfg, "inventory", "embeddings", "words", "test", "checkpoint")
    _need_outputs(cfg, "report", "histogram")
    inventory, table, words = _load_common(cfg)
    model, meta = StackedProjector.load(cfg.checkpoint)
    if model.space is not table.space:
        raise ConfigError(f"checkpoint is {model.space.value} but the embeddings are {table.space.value}")
    instances = load_dataset(cfg.test, inventory)
    if not instances:
        raise EvaluationError(f"test set {cfg.test} is empty")
    data = prepare(instances, inventory, words.vocab, model.encoder_config)
    preds = predict_batch(model, data, words, table, inventory)
    golds = [inst.gold_types for inst in instances]
    base = metric_report(preds, golds, inventory)
    augmented = metric_report([augment_with_coarse(p, table, inventory) for p in preds], golds, inventory)
    hist = neighbor_rank_histogram(model, data, words, table, inventory,
                                   cfg.histogram_granularity, cfg.within_granularity)
    _write_text(cfg.report, base.to_text("base.") + augmented.to_text("augmented."))
    _write_text(cfg.histogram, "".join(f"{r} {c}\n" for r, c in hist.items()))
    for g in GRANULARITIES:
        s = base.granularity[g]
        print(f"{g}: macro_f1={s.macro_f1:.4f} micro_f1={s.micro_f1:.4f}")
    print(f"coarse+augment: macro_f1={augmented.granularity['coarse'].macro_f1:.4f}")
    return 0


COMMANDS = {
    "gen-synthetic": (cmd_gen_synthetic, "write a synthetic tree-structured corpus",
                      ["out_dir", "seed", "branching", "depth", "n_train", "n_dev", "n_test", "noise", "word_dim",
                       "words_per_type", "filler_words", "min_side", "max_side", "include_root"]),
    "build-hierarchy": (cmd_build_hierarchy, "derive a weighted type graph",
                        ["inventory", "taxonomy", "train", "graph", "method", "combine"]),
    "embed-types": (cmd_embed_types, "embed a type graph in the ball",
                    ["inventory", "graph", "embeddings", "space", "seed"]
                    + [f.name for f in fields(RunConfig) if f.name.startswith("embed_")]),
    "train": (cmd_train, "train the stacked projection model",
              ["inventory", "embeddings", "words", "train", "dev", "checkpoint", "loss_trace", "space", "seed",
               "pos_dim", "attn_dim", "window", "max_mention", "learning_rate", "batch_size", "epochs",
               "max_grad_norm", "dropout", "hidden_dim", "alpha", "beta", "coarse_weight", "fine_weight",
               "ultra_weight"]),
    "evaluate": (cmd_evaluate, "score a checkpoint on a test set",
                 ["inventory", "embeddings", "words", "test", "checkpoint", "report", "histogram",
                  "histogram_granularity", "within_granularity"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypertype", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value settings file; flags override it")
        for key in keys:
            default = _FIELDS[key].default
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS,
                           choices=CHOICES.get(key), metavar=key.upper(), help=f"(default: {default})")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command, verbose, config_path = args.pop("command"), args.pop("verbose"), args.pop("config", None)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        flags = {}
        for key, text in args.items():
            try:
                flags[key] = _coerce(key, text)
            except ValueError as exc:
                raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from None
        file_values = parse_config_file(config_path) if config_path else {}
        cfg = resolve_config(file_values, flags)
        return COMMANDS[command][0](cfg)
    except (ConfigError, DatasetError, HierarchyError, EmbeddingError, TrainingError, EvaluationError,
            InfeasibleSizeError, BallError, enc.EncoderError, FloatingPointError, OSError, ValueError) as exc:
        print(f"hypertype {command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
