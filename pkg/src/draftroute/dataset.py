"""Offline reward collection: greedy rollouts scored against the target's.

Every query yields one :class:`RewardRecord` per arm. Drafter arms are scored
by the ROUGE-L of their greedy rollout against the target's greedy rollout.
The optional autoregressive arm is scored with a temperature-1 sample of the
target, which keeps its alignment from being a trivial 1.0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .corpus import LabeledQuery
from .hashing import fnv1a_64
from .lm import NGramModel, check_same_vocab, generate
from .scoring import compose_reward, rouge_l, size_costs

DRAFTER = "drafter"
AUTOREGRESSIVE = "autoregressive"

HEADER_PREFIX = "rewardset v1 k="
# tolerance for re-deriving a stored reward from its stored components
REWARD_TOL = 1e-12


@dataclass(frozen=True)
class ArmSpec:
    arm_id: str
    kind: str
    model: Optional[NGramModel]
    param_count: float

    def __post_init__(self):
        if self.kind not in (DRAFTER, AUTOREGRESSIVE):
            raise ValueError(f"arm {self.arm_id}: unknown kind {self.kind!r}")
        if self.kind == DRAFTER and self.model is None:
            raise ValueError(f"drafter arm {self.arm_id} needs a model")
        if any(c in self.arm_id for c in " \t\n"):
            raise ValueError("arm_id may not contain whitespace")

    @classmethod
    def drafter(cls, model: NGramModel) -> "ArmSpec":
        return cls(model.model_id, DRAFTER, model, model.param_count)

    @classmethod
    def autoregressive(cls, target: NGramModel, arm_id: str = "autoregressive") -> "ArmSpec":
        return cls(arm_id, AUTOREGRESSIVE, None, target.param_count)


def check_arms(arms: Sequence[ArmSpec], target: NGramModel | None = None) -> None:
    if not arms:
        raise ValueError("no arms")
    ids = [a.arm_id for a in arms]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate arm ids {ids}")
    if sum(a.kind == AUTOREGRESSIVE for a in arms) > 1:
        raise ValueError("at most one autoregressive arm is allowed")
    if target is not None:
        for a in arms:
            if a.model is not None:
                check_same_vocab(target, a.model)


@dataclass(frozen=True)
class RewardRecord:
    query_id: str
    query_text: str
    arm_id: str
    arm_index: int
    alignment: float
    cost: float
    alpha: float
    reward: float
    meta: dict = field(default_factory=dict, hash=False)


def arm_costs(arms: Sequence[ArmSpec], target: NGramModel) -> list[float]:
    """Size costs of each arm, normalized against every arm and the target."""
    return size_costs([a.param_count for a in arms] + [target.param_count])[: len(arms)]


def query_rng(seed: int, query_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, fnv1a_64(query_id.encode()) & 0xFFFFFFFF])


def collect(
    queries: Sequence[LabeledQuery],
    target: NGramModel,
    arms: Sequence[ArmSpec],
    alpha: float,
    max_len: int = 32,
    seed: int = 0,
) -> Iterator[RewardRecord]:
    """Yield ``len(arms)`` records per query, in query order then arm order.

    Randomness for the autoregressive arm is derived from ``(seed, query_id)``
    so the output does not depend on how queries are partitioned or ordered.
    """
    if not queries:
        raise ValueError("no queries")
    check_arms(arms, target)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    ids = [q.query_id for q in queries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate query ids")
    costs = arm_costs(arms, target)
    vocab = target.vocab
    greedy_cache: dict = {}

    def greedy(model: NGramModel, prompt: tuple) -> tuple:
        key = (model.model_id, prompt)
        if key not in greedy_cache:
            greedy_cache[key] = generate(model, prompt, max_len, 0.0).tokens
        return greedy_cache[key]

    for q in queries:
        prompt = tuple(vocab.encode(q.text))
        ref = greedy(target, prompt)
        for j, arm in enumerate(arms):
            if arm.kind == DRAFTER:
                out = greedy(arm.model, prompt)
            else:
                out = generate(target, prompt, max_len, 1.0, query_rng(seed, q.query_id)).tokens
            align = rouge_l(out, ref)
            yield RewardRecord(
                q.query_id, q.text, arm.arm_id, j, align, costs[j], alpha,
                compose_reward(align, costs[j], alpha), {"true_domain": q.true_domain},
            )


# -- file format -------------------------------------------------------------

def _check_text_field(value: str, name: str) -> None:
    if "\t" in value or "\n" in value or "\r" in value:
        raise ValueError(f"{name} may not contain tabs or newlines: {value!r}")


def save_records(records: Sequence[RewardRecord], path) -> None:
    records = list(records)
    k = 1 + max((r.arm_index for r in records), default=-1)
    lines = [f"{HEADER_PREFIX}{k}"]
    for r in records:
        _check_text_field(r.query_id, "query_id")
        _check_text_field(r.arm_id, "arm_id")
        _check_text_field(r.query_text, "query_text")
        meta = json.dumps(r.meta, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        lines.append("\t".join([
            r.query_id, str(r.arm_index), r.arm_id, repr(float(r.alignment)),
            repr(float(r.cost)), repr(float(r.alpha)), repr(float(r.reward)),
            r.query_text, meta,
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_real(text: str, name: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{name} is not finite")
    return value


def load_records(path) -> list[RewardRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        return []
    if not lines[0].startswith(HEADER_PREFIX):
        raise ValueError(f"{path}:1: expected header '{HEADER_PREFIX}<arms>'")
    try:
        k = int(lines[0][len(HEADER_PREFIX):])
    except ValueError:
        raise ValueError(f"{path}:1: bad arm count in header") from None
    arm_names: dict[int, str] = {}
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            parts = line.split("\t")
            if len(parts) != 9:
                raise ValueError(f"expected 9 fields, got {len(parts)}")
            qid, idx_s, arm_id, al_s, c_s, a_s, r_s, text, meta_s = parts
            idx = int(idx_s)
            if not 0 <= idx < k:
                raise ValueError(f"arm_index {idx} outside [0, {k})")
            if arm_names.setdefault(idx, arm_id) != arm_id:
                raise ValueError(f"arm_index {idx} maps to both {arm_names[idx]} and {arm_id}")
            align = _parse_real(al_s, "alignment")
            cost = _parse_real(c_s, "cost")
            alpha = _parse_real(a_s, "alpha")
            reward = _parse_real(r_s, "reward")
            if not 0.0 <= alpha <= 1.0:
                raise ValueError("alpha outside [0, 1]")
            if abs(reward - compose_reward(align, cost, alpha)) > REWARD_TOL:
                raise ValueError("reward does not equal alpha*alignment + (1-alpha)*cost")
            meta = json.loads(meta_s)
            if not isinstance(meta, dict):
                raise ValueError("meta must be a JSON object")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        out.append(RewardRecord(qid, text, arm_id, idx, align, cost, alpha, reward, meta))
    return out
