"""Character vocabulary, token distributions and smoothed n-gram language models.

The same :class:`NGramModel` type plays both roles in speculative decoding:
low-order single-domain models act as drafters and a higher-order model fit on
every domain acts as the target.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-9


class VocabularyMismatch(ValueError):
    """Two models disagree on vocabulary size or reserved ids."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered character symbols plus reserved ``bos``/``eos`` ids.

    Plain symbols take ids ``0..len(symbols)-1`` and the two reserved tokens
    are appended after them, so an argmax over a uniform distribution lands on
    the first real symbol rather than on a control token.
    """

    symbols: tuple[str, ...]
    bos_id: int = -1
    eos_id: int = -1

    def __post_init__(self):
        syms = tuple(self.symbols)
        if len(set(syms)) != len(syms):
            raise ValueError("vocabulary symbols must be distinct")
        if any(len(s) != 1 for s in syms):
            raise ValueError("vocabulary symbols must be single characters")
        object.__setattr__(self, "symbols", syms)
        n = len(syms)
        if self.bos_id == -1 and self.eos_id == -1:
            object.__setattr__(self, "bos_id", n)
            object.__setattr__(self, "eos_id", n + 1)
        if self.bos_id == self.eos_id:
            raise ValueError("bos_id and eos_id must differ")
        if sorted((self.bos_id, self.eos_id)) != [n, n + 1]:
            raise ValueError("bos_id/eos_id must be the two ids after the symbols")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(syms)})

    @property
    def size(self) -> int:
        return len(self.symbols) + 2

    def __len__(self) -> int:
        return self.size

    def encode(self, text: str) -> list[int]:
        try:
            return [self._index[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"symbol {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Iterable[int]) -> str:
        n = len(self.symbols)
        return "".join(self.symbols[i] for i in ids if 0 <= i < n)

    def to_json(self) -> str:
        return json.dumps(
            {"symbols": "".join(self.symbols), "bos_id": self.bos_id, "eos_id": self.eos_id}
        )

    @classmethod
    def from_json(cls, blob: str) -> "Vocabulary":
        d = json.loads(blob)
        return cls(tuple(d["symbols"]), d["bos_id"], d["eos_id"])


def check_distribution(probs: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    """Raise if ``probs`` is not a probability vector; return it unchanged."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("distribution must be a non-empty vector")
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ValueError("distribution has negative or non-finite entries")
    if abs(probs.sum() - 1.0) > tol:
        raise ValueError(f"distribution sums to {probs.sum()!r}")
    return probs


def apply_temperature(probs: np.ndarray, temperature: float) -> np.ndarray:
    """Sharpen or flatten a distribution.

    ``temperature == 0`` gives a one-hot vector at the argmax (lowest id wins
    ties); otherwise entries are raised to ``1/temperature`` and renormalized.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    probs = np.asarray(probs, dtype=np.float64)
    if temperature == 0:
        out = np.zeros_like(probs)
        out[int(np.argmax(probs))] = 1.0
        return out
    if temperature == 1:
        return probs
    # power in log space keeps tiny temperatures from underflowing to all-zero
    with np.errstate(divide="ignore"):
        logp = np.log(probs) / temperature
    logp -= logp.max()
    out = np.exp(logp)
    return out / out.sum()


def sample_index(probs: np.ndarray, rng) -> int:
    """Inverse-CDF draw using a single ``rng.random()`` uniform."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    # guard against u landing exactly on the last edge through rounding
    idx = min(idx, len(probs) - 1)
    while probs[idx] == 0 and idx > 0:
        idx -= 1
    return idx


@dataclass(frozen=True)
class GenerationOutput:
    tokens: tuple[int, ...]
    text: str


@dataclass
class NGramModel:
    """Additively smoothed conditional-count model over a fixed vocabulary.

    ``counts`` maps an ``order-1`` token context (a tuple) to a dense count
    vector of length ``V``. Models are treated as immutable once fitted.
    """

    order: int
    vocab: Vocabulary
    smoothing: float
    param_count: float
    model_id: str
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be > 0")
        if not self.param_count > 0:
            raise ValueError("param_count must be > 0")
        if any(c in self.model_id for c in " \t\n"):
            raise ValueError("model_id may not contain whitespace")
        V = self.vocab_size
        self._uniform = np.full(V, 1.0 / V)
        self._uniform.flags.writeable = False
        self._cache: dict = {}

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    def count(self, context: Sequence[int], token: int) -> int:
        row = self.counts.get(tuple(context))
        return 0 if row is None else int(row[token])

    def context_key(self, context: Sequence[int]) -> tuple[int, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        ctx = tuple(context[-n:])
        if len(ctx) < n:
            ctx = (self.vocab.bos_id,) * (n - len(ctx)) + ctx
        return ctx

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        """Smoothed next-token distribution; unseen contexts give the uniform law.

        The returned array is shared and read-only.
        """
        key = self.context_key(context)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        row = self.counts.get(key)
        if row is None:
            probs = self._uniform
        else:
            probs = (row + self.smoothing) / (row.sum() + self.smoothing * self.vocab_size)
            probs.flags.writeable = False
        self._cache[key] = probs
        return probs


def fit_ngram(
    corpus: Sequence[Sequence[int]],
    order: int,
    smoothing: float,
    param_count: float,
    model_id: str,
    vocab: Vocabulary,
) -> NGramModel:
    """Count every length-``order`` window of each bos-padded sequence."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    V = vocab.size
    pad = [vocab.bos_id] * (order - 1)
    raw: dict = defaultdict(lambda: np.zeros(V, dtype=np.int64))
    for seq in corpus:
        toks = pad + list(seq)
        for i in range(order - 1, len(toks)):
            tok = toks[i]
            if not 0 <= tok < V:
                raise ValueError(f"token id {tok} outside vocabulary")
            raw[tuple(toks[i - order + 1 : i])][tok] += 1
    return NGramModel(order, vocab, float(smoothing), float(param_count), model_id, dict(raw))


def next_distribution(model: NGramModel, context: Sequence[int]) -> np.ndarray:
    return model.next_distribution(context)


def generate(
    model: NGramModel,
    prompt: Sequence[int],
    max_len: int,
    temperature: float,
    rng=None,
) -> GenerationOutput:
    """Autoregressive rollout of ``max_len`` tokens or until ``eos``.

    ``rng`` is only consulted when ``temperature > 0``. The returned tokens
    exclude the prompt.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ctx = list(prompt)
    out: list[int] = []
    eos = model.vocab.eos_id
    for _ in range(max_len):
        probs = model.next_distribution(ctx)
        if temperature == 0:
            tok = int(np.argmax(probs))
        else:
            tok = sample_index(apply_temperature(probs, temperature), rng)
        out.append(tok)
        ctx.append(tok)
        if tok == eos:
            break
    return GenerationOutput(tuple(out), model.vocab.decode(out))


def check_same_vocab(a: NGramModel, b: NGramModel) -> None:
    if a.vocab != b.vocab:
        raise VocabularyMismatch(f"{a.model_id} and {b.model_id} use different vocabularies")


# -- serialization ---------------------------------------------------------

def save_model(model: NGramModel, path) -> None:
    lines = [
        f"ngram v1 {model.order} {model.smoothing!r} {model.param_count!r} "
        f"{model.model_id} {model.vocab_size}",
        "vocab " + model.vocab.to_json(),
    ]
    for ctx in sorted(model.counts):
        row = model.counts[ctx]
        ctx_s = " ".join(map(str, ctx))
        for tok in np.flatnonzero(row):
            lines.append(f"{ctx_s}\t{tok}\t{row[tok]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> NGramModel:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty model file")
    head = text[0].split(" ")
    if len(head) != 7 or head[:2] != ["ngram", "v1"]:
        raise ValueError(f"{path}:1: bad header {text[0]!r}")
    order, delta, pcount, model_id, V = int(head[2]), float(head[3]), float(head[4]), head[5], int(head[6])
    if len(text) < 2 or not text[1].startswith("vocab "):
        raise ValueError(f"{path}:2: missing vocab line")
    vocab = Vocabulary.from_json(text[1][len("vocab "):])
    if vocab.size != V:
        raise ValueError(f"{path}: header V={V} disagrees with vocabulary size {vocab.size}")
    counts: dict = {}
    for lineno, line in enumerate(text[2:], start=3):
        try:
            ctx_s, tok_s, cnt_s = line.split("\t")
            ctx = tuple(int(t) for t in ctx_s.split()) if ctx_s else ()
            tok, cnt = int(tok_s), int(cnt_s)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed count line {line!r}") from None
        if len(ctx) != order - 1 or not 0 <= tok < V or cnt <= 0:
            raise ValueError(f"{path}:{lineno}: invalid count entry {line!r}")
        row = counts.setdefault(ctx, np.zeros(V, dtype=np.int64))
        row[tok] = cnt
    return NGramModel(order, vocab, delta, pcount, model_id, counts)
