"""Speculative sampling, greedy assisted decoding and per-run accounting.

One verification round drafts up to ``gamma`` tokens with the drafter and then
scores every drafted position with the target. The round counts as a single
target call, modelling the parallel verification pass of a real accelerator.
All randomness goes through ``rng.random()`` so a run is reproducible from
its seed and can be driven by scripted uniforms.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .lm import (
    GenerationOutput,
    NGramModel,
    apply_temperature,
    check_same_vocab,
    generate,
    sample_index,
)

# below this total residual mass the target and draft laws are treated as equal
RESIDUAL_FLOOR = 1e-15


@dataclass(frozen=True)
class DecodeConfig:
    gamma: int = 7
    temperature: float = 1.0
    max_len: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class DecodeStats:
    target_calls: int = 0
    draft_calls: int = 0
    tokens_emitted: int = 0
    draft_tokens_generated: int = 0
    draft_tokens_accepted: int = 0
    wall_ns_total: int = 0
    wall_ns_decode: int = 0
    wall_ns_policy: int = 0
    wall_ns_featurize: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def accept_rate(stats: DecodeStats) -> float:
    """Accepted draft tokens over drafted tokens, pooled over every round."""
    if stats.draft_tokens_generated <= 0:
        raise ValueError("accept rate undefined: no draft tokens were generated")
    return stats.draft_tokens_accepted / stats.draft_tokens_generated


def acceptance_prob(p_x: float, q_x: float) -> float:
    if q_x >= p_x:
        return 1.0
    return q_x / p_x


def residual(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``norm(max(0, q - p))``, falling back to ``q`` when the mass vanishes."""
    r = np.maximum(q - p, 0.0)
    total = r.sum()
    if total < RESIDUAL_FLOOR:
        return q
    return r / total


def speculative_decode(
    target: NGramModel,
    draft: NGramModel,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    rng,
) -> tuple[GenerationOutput, DecodeStats]:
    """Lossless draft-then-verify sampling from the temperature-adjusted target."""
    check_same_vocab(target, draft)
    start = time.perf_counter_ns()
    T = cfg.temperature
    eos = target.vocab.eos_id
    stats = DecodeStats()
    ctx = list(prompt)
    out: list[int] = []
    done = False
    while not done and len(out) < cfg.max_len:
        room = cfg.max_len - len(out)
        g = min(cfg.gamma, room)
        drafted: list[int] = []
        p_rows: list[np.ndarray] = []
        dctx = list(ctx)
        for _ in range(g):
            p = apply_temperature(draft.next_distribution(dctx), T)
            x = sample_index(p, rng)
            drafted.append(x)
            p_rows.append(p)
            dctx.append(x)
            if x == eos:
                break
        stats.draft_calls += len(drafted)
        stats.draft_tokens_generated += len(drafted)
        stats.target_calls += 1

        emitted: list[int] = []
        n_acc = 0
        for i, x in enumerate(drafted):
            q = apply_temperature(target.next_distribution(ctx + drafted[:i]), T)
            if rng.random() < acceptance_prob(p_rows[i][x], q[x]):
                emitted.append(x)
                n_acc += 1
                continue
            emitted.append(sample_index(residual(q, p_rows[i]), rng))
            break
        if n_acc == len(drafted) and drafted[-1] != eos and len(emitted) < room:
            q = apply_temperature(target.next_distribution(ctx + drafted), T)
            emitted.append(sample_index(q, rng))
        stats.draft_tokens_accepted += n_acc

        for tok in emitted:
            out.append(tok)
            ctx.append(tok)
            if tok == eos:
                done = True
                break
    stats.tokens_emitted = len(out)
    stats.wall_ns_decode = time.perf_counter_ns() - start
    stats.wall_ns_total = stats.wall_ns_decode
    return GenerationOutput(tuple(out), target.vocab.decode(out)), stats


def greedy_assisted_decode(
    target: NGramModel,
    draft: NGramModel,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    rng=None,
) -> tuple[GenerationOutput, DecodeStats]:
    """Exact-match verification: keep drafted argmaxes while the target agrees.

    The output is token-for-token the target's own greedy rollout; ``rng`` is
    accepted for interface symmetry and never used.
    """
    check_same_vocab(target, draft)
    start = time.perf_counter_ns()
    eos = target.vocab.eos_id
    stats = DecodeStats()
    ctx = list(prompt)
    out: list[int] = []
    done = False
    while not done and len(out) < cfg.max_len:
        room = cfg.max_len - len(out)
        drafted: list[int] = []
        dctx = list(ctx)
        for _ in range(min(cfg.gamma, room)):
            x = int(np.argmax(draft.next_distribution(dctx)))
            drafted.append(x)
            dctx.append(x)
            if x == eos:
                break
        stats.draft_calls += len(drafted)
        stats.draft_tokens_generated += len(drafted)
        stats.target_calls += 1

        emitted: list[int] = []
        n_acc = 0
        for i, x in enumerate(drafted):
            y = int(np.argmax(target.next_distribution(ctx + drafted[:i])))
            emitted.append(y)
            if y != x:
                break
            n_acc += 1
        if n_acc == len(drafted) and drafted[-1] != eos and len(emitted) < room:
            emitted.append(int(np.argmax(target.next_distribution(ctx + drafted))))
        stats.draft_tokens_accepted += n_acc

        for tok in emitted:
            out.append(tok)
            ctx.append(tok)
            if tok == eos:
                done = True
                break
    stats.tokens_emitted = len(out)
    stats.wall_ns_decode = time.perf_counter_ns() - start
    stats.wall_ns_total = stats.wall_ns_decode
    return GenerationOutput(tuple(out), target.vocab.decode(out)), stats


def autoregressive_decode(
    target: NGramModel,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    rng,
) -> tuple[GenerationOutput, DecodeStats]:
    """Target-only generation with the same accounting (one call per token)."""
    start = time.perf_counter_ns()
    out = generate(target, prompt, cfg.max_len, cfg.temperature, rng)
    stats = DecodeStats(target_calls=len(out.tokens), tokens_emitted=len(out.tokens))
    stats.wall_ns_decode = time.perf_counter_ns() - start
    stats.wall_ns_total = stats.wall_ns_decode
    return out, stats
