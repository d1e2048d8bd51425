"""Per-query routing: featurize, pick an arm, decode, and account time.

Reported time follows a fixed rule. Policy inference is charged to the query
and featurization is not, since in a real deployment the target's encoding
pass is reused as the first verification pass. ``wall_ns_featurize`` is still
recorded so the exclusion can be audited.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import LabeledQuery
from .dataset import AUTOREGRESSIVE, ArmSpec, check_arms
from .lm import GenerationOutput, NGramModel
from .policy import PolicyParams, featurize, policy_forward
from .specdec import (
    DecodeConfig,
    DecodeStats,
    autoregressive_decode,
    greedy_assisted_decode,
    speculative_decode,
)

GREEDY = "greedy"
DYNAMIC = "dynamic"


@dataclass(frozen=True)
class RoutedResult:
    arm_id: str
    arm_index: int
    output: GenerationOutput
    stats: DecodeStats
    policy_probs: np.ndarray


def choose(probs: np.ndarray, mode: str, rng=None) -> int:
    if mode == GREEDY:
        return int(np.argmax(probs))
    if mode == DYNAMIC:
        cdf = np.cumsum(probs)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(idx, len(probs) - 1)
    raise ValueError(f"mode must be 'greedy' or 'dynamic', got {mode!r}")


def select_arm(
    params: PolicyParams, query_text: str, mode: str = GREEDY, rng=None, dim: int | None = None
) -> tuple[int, np.ndarray]:
    """Greedy takes the argmax (lowest index on ties); dynamic samples."""
    D = params.dims[0] if dim is None else dim
    probs = policy_forward(params, featurize(query_text, D))
    return choose(probs, mode, rng), probs


def decode_with_arm(
    arm: ArmSpec, target: NGramModel, prompt, cfg: DecodeConfig, rng
) -> tuple[GenerationOutput, DecodeStats]:
    """Run one arm's decoder; greedy assisted decoding is used at temperature 0."""
    if arm.kind == AUTOREGRESSIVE:
        return autoregressive_decode(target, prompt, cfg, rng)
    if cfg.temperature == 0:
        return greedy_assisted_decode(target, arm.model, prompt, cfg, rng)
    return speculative_decode(target, arm.model, prompt, cfg, rng)


def route_and_decode(
    params: PolicyParams,
    arms: Sequence[ArmSpec],
    target: NGramModel,
    query: LabeledQuery | str,
    cfg: DecodeConfig,
    mode: str = GREEDY,
    rng=None,
    select_rng=None,
) -> RoutedResult:
    """Route one query and decode it with the chosen arm.

    ``select_rng`` (dynamic mode only) defaults to ``rng``; passing a separate
    generator keeps the decode stream identical to a fixed-arm run.
    """
    check_arms(arms, target)
    D, _, k = params.dims
    if k != len(arms):
        raise ValueError(f"policy has {k} outputs but {len(arms)} arms were given")
    text = query.text if isinstance(query, LabeledQuery) else query

    t0 = time.perf_counter_ns()
    x = featurize(text, D)
    t1 = time.perf_counter_ns()
    probs = policy_forward(params, x)
    idx = choose(probs, mode, select_rng if select_rng is not None else rng)
    t2 = time.perf_counter_ns()

    arm = arms[idx]
    output, stats = decode_with_arm(arm, target, target.vocab.encode(text), cfg, rng)
    stats.wall_ns_featurize = t1 - t0
    stats.wall_ns_policy = t2 - t1
    stats.wall_ns_total = stats.wall_ns_decode + stats.wall_ns_policy
    return RoutedResult(arm.arm_id, idx, output, stats, probs)
