"""Deterministic synthetic domains and labeled query sets.

Three rule families stand in for real task datasets:

``periodic-repeat``
    every sequence repeats a motif, either one of ``rule_params["motifs"]`` or
    a fresh random motif with length drawn from ``rule_params["motif_len"]``.
``markov-chain``
    first-order chain over the alphabet with ``rule_params["transitions"]``
    (row-stochastic, rows and columns ordered like ``alphabet``).
``arithmetic-sequence``
    comma-separated terms ``start, start+step, ...`` with start and step drawn
    from ``rule_params["start"]`` and ``rule_params["step"]`` (inclusive ranges).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .hashing import fnv1a_64

PATTERNS = ("periodic-repeat", "markov-chain", "arithmetic-sequence")


@dataclass(frozen=True)
class DomainSpec:
    domain_id: str
    alphabet: str
    pattern: str
    rule_params: dict = field(default_factory=dict, hash=False, compare=False)
    query_prefix_len: int = 8

    def __post_init__(self):
        if not self.alphabet:
            raise ValueError(f"domain {self.domain_id}: empty alphabet")
        if self.query_prefix_len < 1:
            raise ValueError("query_prefix_len must be >= 1")


@dataclass(frozen=True)
class LabeledQuery:
    query_id: str
    text: str
    true_domain: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"query {self.query_id}: empty text")


def alphabet_jaccard(a: DomainSpec, b: DomainSpec) -> float:
    sa, sb = set(a.alphabet), set(b.alphabet)
    return len(sa & sb) / len(sa | sb)


def check_domains(specs: Sequence[DomainSpec], symbols: Sequence[str] | None = None) -> None:
    """Experiment-level checks: distinct ids, alphabets in vocab, overlap <= 0.5."""
    ids = [s.domain_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate domain ids in {ids}")
    for i, a in enumerate(specs):
        if symbols is not None and not set(a.alphabet) <= set(symbols):
            raise ValueError(f"domain {a.domain_id}: alphabet not in vocabulary")
        for b in specs[i + 1 :]:
            if alphabet_jaccard(a, b) > 0.5:
                raise ValueError(f"domains {a.domain_id} and {b.domain_id} overlap too much")


def _periodic(spec: DomainSpec, length: int, rng) -> str:
    motifs = spec.rule_params.get("motifs")
    if motifs:
        motif = motifs[int(rng.integers(len(motifs)))]
    else:
        lo, hi = spec.rule_params.get("motif_len", (2, 3))
        n = int(rng.integers(lo, hi + 1))
        motif = "".join(spec.alphabet[i] for i in rng.integers(len(spec.alphabet), size=n))
    reps = length // len(motif) + 1
    return (motif * reps)[:length]


def _markov(spec: DomainSpec, length: int, rng) -> str:
    P = np.asarray(spec.rule_params["transitions"], dtype=np.float64)
    n = len(spec.alphabet)
    if P.shape != (n, n):
        raise ValueError(f"domain {spec.domain_id}: transition table must be {n}x{n}")
    init = np.asarray(spec.rule_params.get("initial", np.full(n, 1.0 / n)))
    cdf = np.cumsum(P, axis=1)
    state = int(np.searchsorted(np.cumsum(init), rng.random() * init.sum(), side="right"))
    out = [state]
    for _ in range(length - 1):
        state = int(np.searchsorted(cdf[state], rng.random() * cdf[state, -1], side="right"))
        state = min(state, n - 1)
        out.append(state)
    return "".join(spec.alphabet[i] for i in out)


def _arithmetic(spec: DomainSpec, length: int, rng) -> str:
    s_lo, s_hi = spec.rule_params.get("start", (0, 9))
    d_lo, d_hi = spec.rule_params.get("step", (1, 9))
    sep = spec.rule_params.get("sep", ",")
    term = int(rng.integers(s_lo, s_hi + 1))
    step = int(rng.integers(d_lo, d_hi + 1))
    parts: list[str] = []
    total = 0
    while total < length:
        parts.append(f"{term}{sep}")
        total += len(parts[-1])
        term += step
    return "".join(parts)[:length]


_RULES = {
    "periodic-repeat": _periodic,
    "markov-chain": _markov,
    "arithmetic-sequence": _arithmetic,
}


def sample_sequence(spec: DomainSpec, length: int, rng) -> str:
    try:
        rule = _RULES[spec.pattern]
    except KeyError:
        raise ValueError(f"unknown pattern {spec.pattern!r}") from None
    return rule(spec, length, rng)


def make_corpus(spec: DomainSpec, n_sequences: int, seq_len: int, seed: int) -> list[str]:
    """``n_sequences`` strings of length ``seq_len`` following the domain rule."""
    if n_sequences < 1:
        raise ValueError("n_sequences must be >= 1")
    if spec.pattern not in _RULES:
        raise ValueError(f"unknown pattern {spec.pattern!r}")
    rng = np.random.default_rng([seed, fnv1a_64(spec.domain_id.encode()) & 0xFFFFFFFF, 0])
    return [sample_sequence(spec, seq_len, rng) for _ in range(n_sequences)]


_SPLIT_STREAM = {"train": 1, "test": 2}


def query_split(text: str) -> str:
    """Content-addressed split assignment; keeps train and test texts disjoint."""
    return "train" if fnv1a_64(text.encode()) % 4 else "test"


def make_query_set(
    specs: Sequence[DomainSpec], n_per_domain: int, split: str, seed: int
) -> list[LabeledQuery]:
    """Balanced, shuffled queries for one split.

    Each split draws from its own seed stream and only keeps texts whose hash
    assigns them to that split, so no text can appear in both.
    """
    if not specs:
        raise ValueError("no domain specs")
    if split not in _SPLIT_STREAM:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    out: list[LabeledQuery] = []
    for spec in specs:
        rng = np.random.default_rng(
            [seed, fnv1a_64(spec.domain_id.encode()) & 0xFFFFFFFF, _SPLIT_STREAM[split]]
        )
        got = 0
        tries = 0
        while got < n_per_domain:
            text = sample_sequence(spec, spec.query_prefix_len, rng)
            tries += 1
            if query_split(text) != split:
                if tries > 1000 * (n_per_domain + 1):
                    raise RuntimeError(f"domain {spec.domain_id} cannot fill the {split} split")
                continue
            out.append(LabeledQuery(f"{split}-{spec.domain_id}-{got:06d}", text, spec.domain_id))
            got += 1
    order = np.random.default_rng([seed, 7, _SPLIT_STREAM[split]]).permutation(len(out))
    return [out[i] for i in order]


# -- files -----------------------------------------------------------------

def save_corpus(seqs: Sequence[str], path) -> None:
    Path(path).write_text("".join(s + "\n" for s in seqs))


def load_corpus(path) -> list[str]:
    return Path(path).read_text().splitlines()


def save_queries(queries: Sequence[LabeledQuery], path) -> None:
    lines = []
    for q in queries:
        for part in (q.query_id, q.true_domain, q.text):
            if "\t" in part or "\n" in part:
                raise ValueError(f"query {q.query_id}: tab/newline not allowed in fields")
        lines.append(f"{q.query_id}\t{q.true_domain}\t{q.text}\n")
    Path(path).write_text("".join(lines))


def load_queries(path) -> list[LabeledQuery]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
        out.append(LabeledQuery(parts[0], parts[2], parts[1]))
    return out


# -- stock presets -----------------------------------------------------------

PERIODIC_ALPHABET = "abcdef"
MARKOV_ALPHABET = "ghijkl"
DIGITS_ALPHABET = "0123456789,"
# the leading space belongs to no domain; it is where a model with no
# information (uniform next-token law) lands under argmax
STOCK_SYMBOLS = " " + PERIODIC_ALPHABET + MARKOV_ALPHABET + DIGITS_ALPHABET

# each state has one dominant successor, one runner-up and a little noise
_MARKOV_TABLE = [
    [0.02, 0.80, 0.10, 0.04, 0.02, 0.02],
    [0.02, 0.02, 0.10, 0.80, 0.04, 0.02],
    [0.80, 0.04, 0.02, 0.02, 0.10, 0.02],
    [0.02, 0.04, 0.02, 0.02, 0.80, 0.10],
    [0.10, 0.02, 0.80, 0.02, 0.02, 0.04],
    [0.04, 0.10, 0.02, 0.80, 0.02, 0.02],
]


def stock_domain(name: str, query_prefix_len: int = 8) -> DomainSpec:
    if name == "periodic":
        return DomainSpec("periodic", PERIODIC_ALPHABET, "periodic-repeat",
                          {"motif_len": (2, 3)}, query_prefix_len)
    if name == "markov":
        return DomainSpec("markov", MARKOV_ALPHABET, "markov-chain",
                          {"transitions": _MARKOV_TABLE}, query_prefix_len)
    if name == "digits":
        return DomainSpec("digits", DIGITS_ALPHABET, "arithmetic-sequence",
                          {"start": (0, 49), "step": (1, 9)}, query_prefix_len)
    raise ValueError(f"unknown stock domain {name!r}")
