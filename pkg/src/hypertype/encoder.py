"""Mention-in-context features from frozen word vectors and position embeddings.

The context representation is self-attentive pooling over ``[w_i; p_i]``
for the tokens in a window of ``window`` tokens each side of the mention,
where ``p_i`` embeds the token's relative offset to the mention. The
mention representation pools the mention's word vectors the same way.
The output is ``[M; C]`` of size ``d_word + (d_word + d_pos)``.

Everything is batched: instances are turned into padded index arrays by
:func:`featurize` and pushed through :func:`forward` / :func:`backward`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .hierarchy import AnnotatedInstance

PAD = "<pad>"
UNK = "<unk>"


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    pos_dim: int = 25
    attn_dim: int = 100
    window: int = 10
    max_mention: int = 5
    train_words: bool = False


class Vocabulary:
    def __init__(self, tokens: Sequence[str] = ()):
        self.tokens: List[str] = [PAD, UNK]
        self.index: Dict[str, int] = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.index.get(token, 1)


class WordEmbeddingTable:
    """Row per vocabulary entry; PAD and UNK rows are zero."""

    def __init__(self, vocab: Vocabulary, matrix: np.ndarray, frozen: bool = True):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[0] != len(vocab):
            raise EncoderError(f"{matrix.shape[0]} rows for a vocabulary of {len(vocab)}")
        self.vocab = vocab
        self.matrix = matrix
        self.frozen = frozen

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def load(cls, path, frozen: bool = True) -> "WordEmbeddingTable":
        """Read the plain ``token v1 ... vd`` text format."""
        vocab = Vocabulary()
        rows = []
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                if dim is None:
                    dim = len(parts) - 1
                if len(parts) - 1 != dim:
                    raise EncoderError(f"{path}:{lineno}: expected {dim} values")
                if parts[0] in vocab.index:
                    continue
                vocab.add(parts[0])
                rows.append([float(x) for x in parts[1:]])
        if dim is None:
            raise EncoderError(f"{path}: no vectors")
        matrix = np.vstack([np.zeros((2, dim)), np.array(rows, dtype=np.float64)])
        return cls(vocab, matrix, frozen)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok, row in zip(self.vocab.tokens[2:], self.matrix[2:]):
                fh.write(tok + " " + " ".join(format(x, ".17g") for x in row) + "\n")


def init_params(word_dim: int, config: EncoderConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Glorot-uniform attention weights, small random position table."""
    def glorot(shape):
        bound = np.sqrt(6.0 / (shape[0] + shape[-1]))
        return rng.uniform(-bound, bound, size=shape)

    d_ctx = word_dim + config.pos_dim
    return {
        "pos": rng.normal(0.0, 0.1, size=(2 * config.window + 1, config.pos_dim)),
        "ctx_W": glorot((config.attn_dim, d_ctx)),
        "ctx_s": glorot((config.attn_dim, 1))[:, 0],
        "men_W": glorot((config.attn_dim, word_dim)),
        "men_s": glorot((config.attn_dim, 1))[:, 0],
    }


def output_dim(word_dim: int, config: EncoderConfig) -> int:
    return 2 * word_dim + config.pos_dim


@dataclass
class TokenBatch:
    ctx_ids: np.ndarray  # (B, 2L) word rows
    ctx_pos: np.ndarray  # (B, 2L) position rows, offset + L
    ctx_mask: np.ndarray  # (B, 2L)
    men_ids: np.ndarray  # (B, max_mention)
    men_mask: np.ndarray

    def __len__(self) -> int:
        return self.ctx_ids.shape[0]

    def take(self, idx) -> "TokenBatch":
        return TokenBatch(*(a[idx] for a in (self.ctx_ids, self.ctx_pos, self.ctx_mask, self.men_ids, self.men_mask)))


def featurize(instances: Sequence[AnnotatedInstance], vocab: Vocabulary, config: EncoderConfig) -> TokenBatch:
    L, M = config.window, config.max_mention
    B = len(instances)
    ctx_ids = np.zeros((B, 2 * L), dtype=np.int64)
    ctx_pos = np.full((B, 2 * L), L, dtype=np.int64)
    ctx_mask = np.zeros((B, 2 * L), dtype=bool)
    men_ids = np.zeros((B, M), dtype=np.int64)
    men_mask = np.zeros((B, M), dtype=bool)
    for b, inst in enumerate(instances):
        toks, s, e = inst.context_tokens, inst.mention_start, inst.mention_end
        if e <= s:
            raise EncoderError(f"instance {b}: empty mention span")
        slots = [(i, i - s) for i in range(max(0, s - L), s)]
        slots += [(i, i - e + 1) for i in range(e, min(len(toks), e + L))]
        if not slots:
            raise EncoderError(f"instance {b}: no context tokens around the mention")
        for j, (i, off) in enumerate(slots):
            ctx_ids[b, j] = vocab[toks[i]]
            ctx_pos[b, j] = off + L
            ctx_mask[b, j] = True
        # tail truncation of long mentions
        for j, tok in enumerate(toks[s:e][:M]):
            men_ids[b, j] = vocab[tok]
            men_mask[b, j] = True
    return TokenBatch(ctx_ids, ctx_pos, ctx_mask, men_ids, men_mask)


def _masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    scores = np.where(mask, scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(scores), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def _attend(X, mask, W, s):
    H = np.tanh(X @ W.T)
    a = _masked_softmax(H @ s, mask)
    return np.einsum("bt,btd->bd", a, X), (X, mask, H, a)


def _attend_backward(cache, W, s, dout):
    X, mask, H, a = cache
    dX = a[..., None] * dout[:, None, :]
    da = np.einsum("btd,bd->bt", X, dout)
    dscore = a * (da - np.sum(a * da, axis=1, keepdims=True))
    dscore = np.where(mask, dscore, 0.0)
    ds = np.einsum("bt,btk->k", dscore, H)
    dpre = dscore[..., None] * s * (1.0 - H * H)
    dW = np.einsum("btk,btd->kd", dpre, X)
    dX += dpre @ W
    return dX, dW, ds


def forward(batch: TokenBatch, params: Dict[str, np.ndarray], words: WordEmbeddingTable):
    """Features ``[M; C]`` of shape (B, output_dim) and a cache for :func:`backward`."""
    table = params.get("words", words.matrix)
    ctx_x = np.concatenate([table[batch.ctx_ids], params["pos"][batch.ctx_pos]], axis=-1)
    C, ctx_cache = _attend(ctx_x, batch.ctx_mask, params["ctx_W"], params["ctx_s"])
    men_x = table[batch.men_ids]
    M, men_cache = _attend(men_x, batch.men_mask, params["men_W"], params["men_s"])
    return np.concatenate([M, C], axis=1), (batch, ctx_cache, men_cache, table.shape[1])


def attention_weights(batch: TokenBatch, params, words: WordEmbeddingTable):
    """Context and mention attention distributions, (B, 2L) and (B, max_mention)."""
    _, (_, ctx_cache, men_cache, _) = forward(batch, params, words)
    return ctx_cache[3], men_cache[3]


def backward(cache, params: Dict[str, np.ndarray], upstream: np.ndarray) -> Dict[str, np.ndarray]:
    """Parameter gradients given d(loss)/d(features).

    The word table gets a ``words`` block only when it is part of ``params``.
    """
    batch, ctx_cache, men_cache, dw = cache
    dM, dC = upstream[:, :dw], upstream[:, dw:]
    dctx, dcW, dcs = _attend_backward(ctx_cache, params["ctx_W"], params["ctx_s"], dC)
    dmen, dmW, dms = _attend_backward(men_cache, params["men_W"], params["men_s"], dM)
    dpos = np.zeros_like(params["pos"])
    mask = batch.ctx_mask
    np.add.at(dpos, batch.ctx_pos[mask], dctx[..., dw:][mask])
    grads = {"pos": dpos, "ctx_W": dcW, "ctx_s": dcs, "men_W": dmW, "men_s": dms}
    if "words" in params:
        dwords = np.zeros_like(params["words"])
        np.add.at(dwords, batch.ctx_ids[mask], dctx[..., :dw][mask])
        np.add.at(dwords, batch.men_ids[batch.men_mask], dmen[batch.men_mask])
        grads["words"] = dwords
    return grads


def encode(instance: AnnotatedInstance, params, words: WordEmbeddingTable, config: EncoderConfig = EncoderConfig()) -> np.ndarray:
    feats, _ = forward(featurize([instance], words.vocab, config), params, words)
    return feats[0]


def encode_gradient(instance, params, words: WordEmbeddingTable, upstream, config: EncoderConfig = EncoderConfig()):
    _, cache = forward(featurize([instance], words.vocab, config), params, words)
    return backward(cache, params, np.asarray(upstream, dtype=np.float64)[None])
