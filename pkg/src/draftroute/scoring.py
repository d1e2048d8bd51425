"""Output alignment, size costs and the mixed reward used for policy training."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence length with a rolling one-row table."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(cur[j - 1] if cur[j - 1] > prev[j] else prev[j])
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence, reference: Sequence) -> float:
    """LCS-based F1 between two token sequences (0 when either is empty)."""
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


def size_costs(param_counts: Sequence[float]) -> list[float]:
    """Fixed per-model cost bonus ``1 - exp(p_i - p_max)``.

    Sizes are expected in normalized units (the largest model around 1-10);
    raw parameter counts would make every smaller model's cost exactly 1.
    """
    p = np.asarray(param_counts, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("need at least one parameter count")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise ValueError("parameter counts must be positive and finite")
    # adding 0.0 turns the -0.0 of the largest model into +0.0
    return [float(c) + 0.0 for c in -np.expm1(p - p.max())]


def compose_reward(alignment: float, cost: float, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    return alpha * alignment + (1 - alpha) * cost


@dataclass(frozen=True)
class RewardComponents:
    alignment: float
    cost: float
    alpha: float
    reward: float

    @classmethod
    def build(cls, alignment: float, cost: float, alpha: float) -> "RewardComponents":
        return cls(alignment, cost, alpha, compose_reward(alignment, cost, alpha))
