"""Stacked coarse/fine/ultra projections of mention features into the ball.

Each projection factors its output into a direction and a norm,

    r = phi_dir(x) / |phi_dir(x)|,   lam = max((1 - EPS_BALL) * sigmoid(phi_norm(x)), 1e-10),
    v = lam * r,

so every output lies strictly inside the unit ball and ordinary Adam can be
used. ``phi_dir`` is a one-hidden-layer ReLU MLP with dropout and
``phi_norm`` a single affine map. The fine layer sees ``[e; v_coarse]`` and
the ultra layer ``[e; v_fine]``, where ``e`` is the encoder output.
"""
from __future__ import annotations

import copy
import io
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import encoder as enc
from .geometry import (
    MAX_NORM,
    MIN_DIRECTION_NORM,
    BallError,
    LossWeights,
    SpaceKind,
    combined_loss_rows,
)
from .hierarchy import GRANULARITIES, AnnotatedInstance, TypeInventory
from .optim import AdamState, adam_step, clip_global_norm

log = logging.getLogger(__name__)

# sigmoid underflows for very negative norm logits; keep lam off the origin
MIN_LAMBDA = 1e-10


class DegenerateDirectionError(FloatingPointError):
    pass


class TrainingError(RuntimeError):
    pass


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass
class ProjectionLayer:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    wn: np.ndarray
    bn: np.ndarray
    dropout: float = 0.0

    PARAMS = ("W1", "b1", "W2", "b2", "wn", "bn")

    @classmethod
    def init(cls, in_dim: int, out_dim: int, hidden: int, dropout: float, rng) -> "ProjectionLayer":
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")

        def glorot(a, b):
            bound = np.sqrt(6.0 / (a + b))
            return rng.uniform(-bound, bound, size=(a, b))

        return cls(
            W1=glorot(in_dim, hidden),
            b1=np.zeros(hidden),
            W2=glorot(hidden, out_dim),
            b2=np.zeros(out_dim),
            wn=glorot(in_dim, 1)[:, 0],
            bn=np.zeros(()),
            dropout=dropout,
        )

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    def params(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAMS}

    def forward(self, x: np.ndarray, train_mode: bool = False, rng=None):
        h_pre = x @ self.W1 + self.b1
        h = np.maximum(h_pre, 0.0)
        keep = None
        if train_mode and self.dropout > 0:
            keep = (rng.random(h.shape) >= self.dropout) / (1.0 - self.dropout)
            h = h * keep
        rbar = h @ self.W2 + self.b2
        nr = np.linalg.norm(rbar, axis=1, keepdims=True)
        if np.any(nr < MIN_DIRECTION_NORM):
            raise DegenerateDirectionError("direction network produced a zero vector")
        r = rbar / nr
        sig = _sigmoid(x @ self.wn + self.bn)
        lam = np.maximum(MAX_NORM * sig, MIN_LAMBDA)
        v = lam[:, None] * r
        norms = np.linalg.norm(v, axis=1)
        cap = MAX_NORM * (1 - 8 * np.finfo(float).eps)
        over = norms > cap
        if np.any(over):
            # lam * r can round a few ulps past the cap when sigma saturates
            v[over] *= (cap / norms[over])[:, None]
            norms = np.linalg.norm(v, axis=1)
        if np.any(norms <= 0) or np.any(norms > MAX_NORM):
            raise BallError(f"projection left the ball: norms in [{norms.min()}, {norms.max()}]")
        return v, (x, h_pre, h, keep, nr, r, sig, lam)

    def backward(self, cache, dv: np.ndarray):
        x, h_pre, h, keep, nr, r, sig, lam = cache
        dlam = np.sum(dv * r, axis=1)
        dr = lam[:, None] * dv
        drbar = (dr - r * np.sum(r * dr, axis=1, keepdims=True)) / nr
        dlbar = np.where(lam > MIN_LAMBDA, dlam * MAX_NORM * sig * (1.0 - sig), 0.0)
        dh = drbar @ self.W2.T
        if keep is not None:
            dh = dh * keep
        dh_pre = dh * (h_pre > 0)
        grads = {
            "W1": x.T @ dh_pre,
            "b1": dh_pre.sum(axis=0),
            "W2": h.T @ drbar,
            "b2": drbar.sum(axis=0),
            "wn": x.T @ dlbar,
            "bn": np.asarray(dlbar.sum()),
        }
        dx = dh_pre @ self.W1.T + dlbar[:, None] * self.wn[None, :]
        return grads, dx


def reparameterize(e, layer: ProjectionLayer, train_mode: bool = False, rng=None) -> np.ndarray:
    """Project one feature vector (or a stack of them) into the ball."""
    e = np.asarray(e, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise ValueError("features must be finite")
    v, _ = layer.forward(np.atleast_2d(e), train_mode, rng)
    return v[0] if e.ndim == 1 else v


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 50
    max_grad_norm: float = 10.0
    dropout: float = 0.3
    hidden_dim: int = 500
    space: SpaceKind = SpaceKind.HYPERBOLIC
    loss_weights: Dict[str, LossWeights] = field(
        default_factory=lambda: {g: LossWeights(1.0, 1.0) for g in GRANULARITIES}
    )
    granularity_weights: Dict[str, float] = field(
        default_factory=lambda: {g: 1.0 for g in GRANULARITIES}
    )
    seed: int = 0

    def __post_init__(self):
        self.space = SpaceKind.parse(self.space)
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0 or self.max_grad_norm <= 0:
            raise ValueError("learning rate, batch size, epochs and max_grad_norm must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["space"] = self.space.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss_weights"] = {g: LossWeights(**w) for g, w in d["loss_weights"].items()}
        return cls(**d)


class StackedProjector:
    """Encoder parameters plus the three granularity projections."""

    def __init__(self, encoder_params, layers: Dict[str, ProjectionLayer], encoder_config: enc.EncoderConfig, space):
        self.encoder_params = encoder_params
        self.layers = layers
        self.encoder_config = encoder_config
        self.space = SpaceKind.parse(space)
        feat = self.feature_dim
        n = layers["coarse"].out_dim
        expected = {"coarse": feat, "fine": feat + n, "ultra": feat + n}
        for g, d in expected.items():
            if layers[g].in_dim != d or layers[g].out_dim != n:
                raise ValueError(f"{g} layer has shape {layers[g].in_dim}->{layers[g].out_dim}, expected {d}->{n}")

    @classmethod
    def init(cls, word_dim: int, type_dim: int, encoder_config=enc.EncoderConfig(),
             hidden_dim: int = 500, dropout: float = 0.3, space=SpaceKind.HYPERBOLIC, seed: int = 0):
        rng = np.random.default_rng(seed)
        params = enc.init_params(word_dim, encoder_config, rng)
        feat = enc.output_dim(word_dim, encoder_config)
        layers = {
            "coarse": ProjectionLayer.init(feat, type_dim, hidden_dim, dropout, rng),
            "fine": ProjectionLayer.init(feat + type_dim, type_dim, hidden_dim, dropout, rng),
            "ultra": ProjectionLayer.init(feat + type_dim, type_dim, hidden_dim, dropout, rng),
        }
        return cls(params, layers, encoder_config, space)

    @property
    def word_dim(self) -> int:
        return self.encoder_params["men_W"].shape[1]

    @property
    def feature_dim(self) -> int:
        return enc.output_dim(self.word_dim, self.encoder_config)

    @property
    def type_dim(self) -> int:
        return self.layers["coarse"].out_dim

    def parameters(self) -> Dict[str, np.ndarray]:
        """Flat view (shared arrays, not copies) of every trainable block."""
        out = {f"enc.{k}": v for k, v in self.encoder_params.items()}
        for g in GRANULARITIES:
            for k, v in self.layers[g].params().items():
                out[f"{g}.{k}"] = v
        return out

    def load_parameters(self, values: Dict[str, np.ndarray]) -> None:
        for name, arr in self.parameters().items():
            arr[...] = values[name]

    def forward(self, batch: enc.TokenBatch, words: enc.WordEmbeddingTable, train_mode: bool = False, rng=None):
        e, enc_cache = enc.forward(batch, self.encoder_params, words)
        vc, cc = self.layers["coarse"].forward(e, train_mode, rng)
        vf, cf = self.layers["fine"].forward(np.concatenate([e, vc], axis=1), train_mode, rng)
        vu, cu = self.layers["ultra"].forward(np.concatenate([e, vf], axis=1), train_mode, rng)
        return {"coarse": vc, "fine": vf, "ultra": vu}, (enc_cache, cc, cf, cu, e.shape[1])

    def backward(self, cache, dv: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        enc_cache, cc, cf, cu, fd = cache
        grads = {}
        g_u, dx_u = self.layers["ultra"].backward(cu, dv["ultra"])
        de = dx_u[:, :fd]
        g_f, dx_f = self.layers["fine"].backward(cf, dv["fine"] + dx_u[:, fd:])
        de = de + dx_f[:, :fd]
        g_c, dx_c = self.layers["coarse"].backward(cc, dv["coarse"] + dx_f[:, fd:])
        de = de + dx_c
        for g, gg in (("coarse", g_c), ("fine", g_f), ("ultra", g_u)):
            for k, v in gg.items():
                grads[f"{g}.{k}"] = v
        for k, v in enc.backward(enc_cache, self.encoder_params, de).items():
            grads[f"enc.{k}"] = v
        return grads

    def project(self, batch: enc.TokenBatch, words, chunk: int = 4096) -> Dict[str, np.ndarray]:
        """Eval-mode projections for a (possibly large) batch."""
        parts = {g: [] for g in GRANULARITIES}
        for start in range(0, len(batch), chunk):
            vs, _ = self.forward(batch.take(slice(start, start + chunk)), words)
            for g in GRANULARITIES:
                parts[g].append(vs[g])
        return {g: np.concatenate(parts[g]) if parts[g] else np.zeros((0, self.type_dim)) for g in GRANULARITIES}

    def copy(self) -> "StackedProjector":
        return copy.deepcopy(self)

    # -- checkpoints -------------------------------------------------------

    def save(self, path, config: Optional[TrainConfig] = None, extra: Optional[dict] = None) -> None:
        """Zip of one .npy per parameter block plus ``meta.json``; byte-stable."""
        meta = {
            "space": self.space.value,
            "word_dim": self.word_dim,
            "type_dim": self.type_dim,
            "hidden_dim": self.layers["coarse"].W1.shape[1],
            "dropout": self.layers["coarse"].dropout,
            "encoder": asdict(self.encoder_config),
            "config": config.to_json() if config else None,
            "seed": config.seed if config else None,
        }
        if extra:
            meta.update(extra)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            def put(name, data):
                zf.writestr(zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0)), data)

            put("meta.json", json.dumps(meta, sort_keys=True, indent=1))
            for name, arr in sorted(self.parameters().items()):
                buf = io.BytesIO()
                np.save(buf, arr, allow_pickle=False)
                put(name + ".npy", buf.getvalue())

    @classmethod
    def load(cls, path) -> Tuple["StackedProjector", dict]:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {
                n[:-4]: np.load(io.BytesIO(zf.read(n)), allow_pickle=False)
                for n in zf.namelist() if n.endswith(".npy")
            }
        ecfg = enc.EncoderConfig(**meta["encoder"])
        encoder_params = {k[4:]: v for k, v in arrays.items() if k.startswith("enc.")}
        layers = {
            g: ProjectionLayer(*(arrays[f"{g}.{k}"] for k in ProjectionLayer.PARAMS), dropout=meta["dropout"])
            for g in GRANULARITIES
        }
        return cls(encoder_params, layers, ecfg, meta["space"]), meta


# ---------------------------------------------------------------------------
# data and loss


@dataclass
class PreparedData:
    instances: List[AnnotatedInstance]
    tokens: enc.TokenBatch
    gold: List[Dict[str, List[int]]]

    def __len__(self) -> int:
        return len(self.instances)

    def take(self, idx) -> "PreparedData":
        idx = np.asarray(idx)
        return PreparedData([self.instances[i] for i in idx], self.tokens.take(idx), [self.gold[i] for i in idx])


def prepare(instances: Sequence[AnnotatedInstance], inventory: TypeInventory,
            vocab: enc.Vocabulary, encoder_config: enc.EncoderConfig) -> PreparedData:
    instances = list(instances)
    gold = [inventory.split_by_granularity(inst.gold_types) for inst in instances]
    return PreparedData(instances, enc.featurize(instances, vocab, encoder_config), gold)


def _loss_terms(vs, gold, table, config: TrainConfig):
    """Per-instance summed loss and d(loss)/d(v_g) per granularity."""
    B = len(gold)
    total = np.zeros(B)
    dv = {g: np.zeros_like(vs[g]) for g in GRANULARITIES}
    for g in GRANULARITIES:
        rows, types, wts = [], [], []
        for i, gd in enumerate(gold):
            ids = gd[g]
            if ids:
                rows.extend([i] * len(ids))
                types.extend(ids)
                wts.extend([1.0 / len(ids)] * len(ids))
        if not rows:
            continue
        rows = np.asarray(rows)
        targets = table.vectors[np.asarray(types)]
        loss, grad = combined_loss_rows(vs[g][rows], targets, config.loss_weights[g], config.space)
        scale = config.granularity_weights[g] * np.asarray(wts)
        np.add.at(total, rows, scale * loss)
        np.add.at(dv[g], rows, scale[:, None] * grad)
    return total, dv


def batch_loss(model: StackedProjector, data: PreparedData, words, table, config: TrainConfig,
               train_mode: bool = False, rng=None, with_grad: bool = True):
    """Mean instance loss over ``data`` and, optionally, its parameter gradients."""
    vs, cache = model.forward(data.tokens, words, train_mode, rng)
    per_instance, dv = _loss_terms(vs, data.gold, table, config)
    loss = float(per_instance.mean())
    if not with_grad:
        return loss, None
    B = len(data)
    grads = model.backward(cache, {g: d / B for g, d in dv.items()})
    return loss, grads


def instance_loss(instance: AnnotatedInstance, model: StackedProjector, words, table,
                  inventory: TypeInventory, config: TrainConfig) -> float:
    data = prepare([instance], inventory, words.vocab, model.encoder_config)
    loss, _ = batch_loss(model, data, words, table, config, with_grad=False)
    return loss


@dataclass
class TrainResult:
    model: StackedProjector
    epoch_losses: List[float]
    dev_scores: List[float]
    best_epoch: int


def train(model: StackedProjector, data: PreparedData, words, table, config: TrainConfig,
          inventory: Optional[TypeInventory] = None, dev: Optional[PreparedData] = None) -> TrainResult:
    """Minibatch Adam with global-norm clipping.

    With ``dev`` given, the returned model carries the parameters of the
    epoch with the best coarse loose macro-F1 on it (latest on ties).
    """
    if table.space is not config.space or model.space is not config.space:
        raise TrainingError(
            f"space mismatch: table {table.space.value}, model {model.space.value}, config {config.space.value}"
        )
    if dev is not None and inventory is None:
        raise TrainingError("dev selection needs the type inventory")
    from .evaluation import coarse_macro_f1

    params = model.parameters()
    state = AdamState(lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    losses: List[float] = []
    dev_scores: List[float] = []
    best, best_epoch, best_params = -1.0, 0, None
    n = len(data)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads = batch_loss(model, data.take(idx), words, table, config, True, rng)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}, batch {b}")
            grads = clip_global_norm(grads, config.max_grad_norm)
            adam_step(params, grads, state)
            total += loss * len(idx)
        losses.append(total / n)
        if dev is not None:
            score = coarse_macro_f1(model, dev, words, table, inventory)
            dev_scores.append(score)
            if score >= best:
                best, best_epoch = score, epoch + 1
                best_params = {k: v.copy() for k, v in params.items()}
            log.info("epoch %d loss %.5f dev coarse macro-F1 %.4f", epoch + 1, losses[-1], score)
        else:
            log.info("epoch %d loss %.5f", epoch + 1, losses[-1])
    if best_params is not None:
        model.load_parameters(best_params)
    else:
        best_epoch = config.epochs
    return TrainResult(model, losses, dev_scores, best_epoch)
