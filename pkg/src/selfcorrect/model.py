"""A compact trainable conditional sequence model: log-linear
autoregressive over a small vocabulary, with exact cross-entropy
gradients and greedy / temperature / beam decoding.

The model scores the next token as a sum of weights over sparse features
of (conditioning context, generated prefix): bag-of-token features of the
context's input / current-hypothesis / feedback segments, n-gram features
of the last three prefix tokens, and a bias. Feature ids are stable
64-bit FNV-1a hashes, so parameter tables are reproducible across runs
and platforms.
"""

from __future__ import annotations

import struct
import weakref
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import CURR, END, FEEDBACK, NEWLINE, SC, START, ConfigError, TokenSeq

MAX_VOCAB = 4096
_SEP = "\x1f"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: str) -> int:
    h = _FNV_OFFSET
    for b in data.encode("utf-8"):
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


BIAS_FEATURE = fnv1a64("bias")


class Vocab:
    """Ordered token/index bijection, reserved markers first."""

    def __init__(self, tokens: Sequence[str]):
        toks = tuple(tokens)
        if len(set(toks)) != len(toks):
            raise ValueError("vocab tokens must be unique")
        if END not in toks:
            raise ValueError(f"vocab must contain the end-of-sequence token {END}")
        if len(toks) > MAX_VOCAB:
            raise ValueError(f"vocab size {len(toks)} exceeds {MAX_VOCAB}")
        self._tokens = toks
        self._index = {t: i for i, t in enumerate(toks)}

    @classmethod
    def build(cls, sequences: Iterable[TokenSeq]) -> "Vocab":
        reserved = [END, SC, CURR, FEEDBACK, START, NEWLINE]
        seen = {tok for seq in sequences for tok in seq}
        rest = sorted(seen - set(reserved))
        return cls(reserved + rest)

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise ValueError(f"token {token!r} not in vocab") from None

    def token(self, i: int) -> str:
        return self._tokens[i]

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def end_index(self) -> int:
        return self._index[END]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self._tokens:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


@dataclass
class ToyModelParams:
    """Sparse feature-weight table; a missing feature row reads as zeros."""

    vocab: Vocab
    weights: dict[int, np.ndarray] = field(default_factory=dict)
    l2: float = 0.0
    lr: float = 0.1

    def row(self, feature_id: int) -> np.ndarray | None:
        return self.weights.get(feature_id)


@dataclass(frozen=True)
class TrainingExample:
    """Context (ending in [START]) and target (ending in [END])."""

    context: TokenSeq
    target: TokenSeq

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", tuple(self.context))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.context or self.context[-1] != START:
            raise ValueError(f"context must end with {START}")
        if not self.target or self.target[-1] != END:
            raise ValueError(f"target must end with {END}")


# ---------------------------------------------------------------------------
# Features


def _segments(context: TokenSeq) -> tuple[TokenSeq, TokenSeq, TokenSeq]:
    """Split a context into (input, current-hypothesis, feedback) segments.
    A context without markers is treated as a bare input prompt."""
    if SC not in context:
        stop = context.index(START) if START in context else len(context)
        return context[:stop], (), ()
    i_sc = context.index(SC)
    i_curr = context.index(CURR) if CURR in context else len(context)
    i_start = context.index(START) if START in context else len(context)
    sc = context[i_sc + 1 : min(i_curr, i_start)]
    if FEEDBACK in context:
        i_fb = context.index(FEEDBACK)
        cur = context[i_curr + 1 : i_fb]
        fb = context[i_fb + 1 : i_start]
    else:
        cur = context[i_curr + 1 : i_start]
        fb = ()
    return sc, cur, fb


def context_features(context: TokenSeq) -> tuple[int, ...]:
    """Prefix-independent features: segment bags plus the bias."""
    sc, cur, fb = _segments(context)
    feats = {BIAS_FEATURE}
    for tok in set(sc):
        feats.add(fnv1a64("sc" + _SEP + tok))
    for tok in set(cur):
        feats.add(fnv1a64("cur" + _SEP + tok))
    for tok in set(fb):
        feats.add(fnv1a64("fb" + _SEP + tok))
    return tuple(sorted(feats))


def prefix_features(prefix: TokenSeq) -> tuple[int, ...]:
    """N-gram features of the last three prefix tokens (orders 1-3)."""
    feats = []
    n = len(prefix)
    if n >= 1:
        feats.append(fnv1a64("ng1" + _SEP + prefix[-1]))
    if n >= 2:
        feats.append(fnv1a64("ng2" + _SEP + _SEP.join(prefix[-2:])))
    if n >= 3:
        feats.append(fnv1a64("ng3" + _SEP + _SEP.join(prefix[-3:])))
    return tuple(feats)


def features(context: TokenSeq, prefix: TokenSeq) -> tuple[int, ...]:
    """All active feature ids for predicting the token after ``prefix``,
    deduplicated and sorted for deterministic accumulation order."""
    return tuple(sorted(set(context_features(context)) | set(prefix_features(prefix))))


# ---------------------------------------------------------------------------
# Forward / backward


def _logits(params: ToyModelParams, feats: Sequence[int]) -> np.ndarray:
    logits = np.zeros(len(params.vocab))
    weights = params.weights
    for f in feats:
        row = weights.get(f)
        if row is not None:
            logits += row
    return logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def next_token_dist(
    params: ToyModelParams, context: TokenSeq, prefix: TokenSeq
) -> np.ndarray:
    """Probability vector over the vocab for the next token."""
    return _softmax(_logits(params, features(context, prefix)))


@dataclass
class _Prepared:
    uids: list[int]           # sorted unique feature ids of the example
    membership: np.ndarray    # positions x unique-features, 0/1
    target_idx: np.ndarray    # vocab index per position


_prep_cache: "weakref.WeakKeyDictionary[Vocab, dict[TrainingExample, _Prepared]]" = (
    weakref.WeakKeyDictionary()
)
_PREP_CACHE_MAX = 200_000


def _prepare(vocab: Vocab, example: TrainingExample) -> _Prepared:
    per_vocab = _prep_cache.setdefault(vocab, {})
    prep = per_vocab.get(example)
    if prep is not None:
        return prep
    ctx_feats = context_features(example.context)
    per_pos: list[tuple[int, ...]] = []
    for i in range(len(example.target)):
        per_pos.append(tuple(set(ctx_feats) | set(prefix_features(example.target[:i]))))
    uids = sorted({f for feats in per_pos for f in feats})
    col = {f: k for k, f in enumerate(uids)}
    membership = np.zeros((len(per_pos), len(uids)))
    for i, feats in enumerate(per_pos):
        for f in feats:
            membership[i, col[f]] = 1.0
    target_idx = np.array([vocab.index(t) for t in example.target], dtype=np.intp)
    if len(per_vocab) >= _PREP_CACHE_MAX:
        per_vocab.clear()
    prep = _Prepared(uids, membership, target_idx)
    per_vocab[example] = prep
    return prep


def loss_and_grad(
    params: ToyModelParams, example: TrainingExample
) -> tuple[float, dict[int, np.ndarray]]:
    """Mean per-token cross-entropy and its exact gradient, restricted to
    the example's active features. The returned loss is the data term
    only; the l2 penalty enters the gradient as decoupled weight decay on
    touched rows."""
    prep = _prepare(params.vocab, example)
    n_pos = len(prep.target_idx)
    n_feat = len(prep.uids)
    vocab_size = len(params.vocab)
    w = np.zeros((n_feat, vocab_size))
    for k, f in enumerate(prep.uids):
        row = params.weights.get(f)
        if row is not None:
            w[k] = row
    logits = prep.membership @ w
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    denom = exp.sum(axis=1, keepdims=True)
    probs = exp / denom
    rows = np.arange(n_pos)
    logp = logits[rows, prep.target_idx] - np.log(denom[:, 0])
    loss = float(-logp.mean())
    err = probs
    err[rows, prep.target_idx] -= 1.0
    err /= n_pos
    grad_mat = prep.membership.T @ err
    if params.l2:
        grad_mat += params.l2 * w
    return loss, {f: grad_mat[k].copy() for k, f in enumerate(prep.uids)}


def train_batch(
    params: ToyModelParams, batch: Sequence[TrainingExample], lr: float
) -> ToyModelParams:
    """One SGD step on the mean batch loss; deterministic given ordering."""
    if not batch:
        raise ValueError("batch must be non-empty")
    acc: dict[int, np.ndarray] = {}
    for ex in batch:
        _, grad = loss_and_grad(params, ex)
        for f, g in grad.items():
            if f in acc:
                acc[f] += g
            else:
                acc[f] = g
    scale = lr / len(batch)
    vocab_size = len(params.vocab)
    for f, g in acc.items():
        row = params.weights.get(f)
        if row is None:
            row = np.zeros(vocab_size)
            params.weights[f] = row
        row -= scale * g
    return params


# ---------------------------------------------------------------------------
# Decoding


def parse_decode_mode(mode: str) -> tuple[str, float]:
    """Accepts "greedy", "temperature:<tau>", or "beam:<k>"."""
    if mode == "greedy":
        return "greedy", 0.0
    kind, _, arg = mode.partition(":")
    if kind == "temperature":
        try:
            tau = float(arg)
        except ValueError:
            raise ConfigError(f"bad decode mode {mode!r}") from None
        if tau <= 0:
            raise ConfigError("temperature must be > 0")
        return "temperature", tau
    if kind == "beam":
        try:
            k = int(arg)
        except ValueError:
            raise ConfigError(f"bad decode mode {mode!r}") from None
        if k < 1:
            raise ConfigError("beam width must be >= 1")
        return "beam", float(k)
    raise ConfigError(f"unknown decode mode {mode!r}")


def decode(
    params: ToyModelParams,
    context: TokenSeq,
    mode: str = "greedy",
    max_len: int = 64,
    rng: np.random.Generator | None = None,
) -> list[TokenSeq]:
    """Generate from the model; returns one sequence (greedy/temperature)
    or k ranked sequences (beam:k). Generation stops at [END] or max_len;
    the end token is not included in the output."""
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    kind, arg = parse_decode_mode(mode)
    if kind == "beam":
        return _beam_decode(params, context, int(arg), max_len)
    if kind == "temperature" and rng is None:
        raise ValueError("temperature decoding needs an rng")
    ctx_feats = set(context_features(context))
    end_idx = params.vocab.end_index
    out: list[str] = []
    for _ in range(max_len):
        feats = tuple(sorted(ctx_feats | set(prefix_features(tuple(out)))))
        logits = _logits(params, feats)
        if kind == "greedy":
            idx = int(np.argmax(logits))
        else:
            probs = _softmax(logits / arg)
            idx = int(rng.choice(len(probs), p=probs))
        if idx == end_idx:
            break
        out.append(params.vocab.token(idx))
    return [tuple(out)]


def _beam_decode(
    params: ToyModelParams, context: TokenSeq, k: int, max_len: int
) -> list[TokenSeq]:
    """Beam search ranked by length-normalized total log-probability."""
    ctx_feats = set(context_features(context))
    end_idx = params.vocab.end_index
    vocab_size = len(params.vocab)
    # beam entries: (tokens, total_logp)
    live: list[tuple[tuple[str, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[str, ...], float, int]] = []  # (tokens, logp, gen_len)
    for _ in range(max_len):
        if not live:
            break
        scores: list[tuple[float, int, tuple[str, ...], float, bool]] = []
        for b, (toks, lp) in enumerate(live):
            feats = tuple(sorted(ctx_feats | set(prefix_features(toks))))
            logits = _logits(params, feats)
            logits = logits - logits.max()
            logprobs = logits - np.log(np.exp(logits).sum())
            gen_len = len(toks) + 1
            for idx in range(vocab_size):
                total = lp + float(logprobs[idx])
                norm = total / gen_len
                if idx == end_idx:
                    scores.append((norm, b * vocab_size + idx, toks, total, True))
                else:
                    scores.append(
                        (norm, b * vocab_size + idx, toks + (params.vocab.token(idx),), total, False)
                    )
        scores.sort(key=lambda s: (-s[0], s[1]))
        live = []
        for norm, _, toks, total, done in scores[:k]:
            if done:
                finished.append((toks, total, len(toks) + 1))
            else:
                live.append((toks, total))
    pool = [(lp / gen_len, toks) for toks, lp, gen_len in finished]
    pool += [(lp / max(1, len(toks)), toks) for toks, lp in live]
    pool.sort(key=lambda s: (-s[0], s[1]))
    return [toks for _, toks in pool[:k]]


def beam_top_score(params: ToyModelParams, context: TokenSeq, k: int, max_len: int = 64) -> float:
    """Length-normalized score of the best beam(k) sequence (for
    monotonicity checks)."""
    best = _beam_decode(params, context, k, max_len)[0]
    total = 0.0
    ctx_feats = set(context_features(context))
    for i, tok in enumerate(best + (END,)):
        feats = tuple(sorted(ctx_feats | set(prefix_features(best[:i]))))
        logits = _logits(params, feats)
        logits = logits - logits.max()
        logprobs = logits - np.log(np.exp(logits).sum())
        total += float(logprobs[params.vocab.index(tok)])
    return total / (len(best) + 1)


# ---------------------------------------------------------------------------
# Serialization: sorted-key binary table of ((feature_id, token_index), weight)

_MAGIC = b"SCLLIN1\n"


def save_params(params: ToyModelParams, path: str) -> None:
    fids: list[int] = []
    tids: list[int] = []
    vals: list[float] = []
    for f in sorted(params.weights):
        row = params.weights[f]
        for t in np.nonzero(row)[0]:
            fids.append(f)
            tids.append(int(t))
            vals.append(float(row[t]))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<ddQ", params.l2, params.lr, len(fids)))
        fh.write(np.array(fids, dtype="<u8").tobytes())
        fh.write(np.array(tids, dtype="<u4").tobytes())
        fh.write(np.array(vals, dtype="<f8").tobytes())


def load_params(path: str, vocab: Vocab) -> ToyModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path} is not a parameter table")
        l2, lr, n = struct.unpack("<ddQ", fh.read(24))
        fids = np.frombuffer(fh.read(8 * n), dtype="<u8")
        tids = np.frombuffer(fh.read(4 * n), dtype="<u4")
        vals = np.frombuffer(fh.read(8 * n), dtype="<f8")
    params = ToyModelParams(vocab=vocab, l2=l2, lr=lr)
    vocab_size = len(vocab)
    for f, t, v in zip(fids.tolist(), tids.tolist(), vals.tolist()):
        row = params.weights.get(f)
        if row is None:
            row = np.zeros(vocab_size)
            params.weights[f] = row
        row[t] = v
    return params
