"""Query featurization, the softmax MLP router and its offline REINFORCE training.

The policy is a three-layer tanh MLP producing a distribution over arms.
Training treats every logged ``(query, arm, reward)`` triple as a sample and
minimizes ``-(1/B) * sum_b r_b * log pi(a_b | x_b)`` with AdamW.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import RewardRecord
from .hashing import fnv1a_64

NGRAM_SIZES = (1, 2, 3)


# -- featurizer ------------------------------------------------------------

@lru_cache(maxsize=65536)
def _featurize_cached(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    for n in NGRAM_SIZES:
        for i in range(len(text) - n + 1):
            vec[fnv1a_64(text[i : i + n].encode("utf-8")) % dim] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    vec.flags.writeable = False
    return vec


def featurize(query_text: str, dim: int = 256) -> np.ndarray:
    """Hashed character 1-3 gram term frequencies, L2-normalized.

    Returns the zero vector for an empty string. Indices are FNV-1a 64-bit
    hashes of the UTF-8 n-gram modulo ``dim``, so vectors are identical across
    runs and platforms.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return _featurize_cached(query_text, dim)


Featurizer = Callable[[str, int], np.ndarray]


# -- parameters ------------------------------------------------------------

@dataclass
class PolicyParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        D, H = self.W1.shape
        k = self.W3.shape[1]
        expected = {"W1": (D, H), "b1": (H,), "W2": (H, H), "b2": (H,), "W3": (H, k), "b3": (k,)}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(D, H, k)``."""
        return self.W1.shape[0], self.W1.shape[1], self.W3.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def names(self) -> list[str]:
        return [f.name for f in fields(self)]

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(a.copy() for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(D: int, H: int, k: int, rng) -> PolicyParams:
    """Weights uniform in +-1/sqrt(fan_in), zero biases."""
    def layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return PolicyParams(layer(D, H), np.zeros(H), layer(H, H), np.zeros(H), layer(H, k), np.zeros(k))


def zeros_like(params: PolicyParams) -> PolicyParams:
    return PolicyParams(*(np.zeros_like(a) for a in params.arrays()))


# -- forward / backward ----------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(params: PolicyParams, X: np.ndarray):
    h1 = np.tanh(X @ params.W1 + params.b1)
    h2 = np.tanh(h1 @ params.W2 + params.b2)
    logits = h2 @ params.W3 + params.b3
    return h1, h2, logits


def policy_logits(params: PolicyParams, X: np.ndarray) -> np.ndarray:
    return _forward(params, np.asarray(X, dtype=np.float64))[2]


def policy_forward(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    """Arm distribution for one feature vector ``x`` (or a batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    D = params.W1.shape[0]
    if x.shape[-1] != D or x.ndim not in (1, 2):
        raise ValueError(f"feature shape {x.shape} does not match input dim {D}")
    return _softmax(_forward(params, x)[2])


def _check_batch(params, X, actions, rewards):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    B = X.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    if actions.shape[0] != B or rewards.shape[0] != B:
        raise ValueError("batch arrays disagree in length")
    D, _, k = params.dims
    if X.shape[1] != D:
        raise ValueError(f"feature dim {X.shape[1]} != {D}")
    if np.any(actions < 0) or np.any(actions >= k):
        raise ValueError(f"arm index out of range [0, {k})")
    return X, actions, rewards


def reinforce_loss(params: PolicyParams, X, actions, rewards) -> float:
    X, actions, rewards = _check_batch(params, X, actions, rewards)
    logits = _forward(params, X)[2]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(len(actions)), actions] * rewards))


def reinforce_grad(params: PolicyParams, X, actions, rewards) -> PolicyParams:
    """Exact gradient of :func:`reinforce_loss` by backpropagation.

    Rewards are used as given: no baseline, no normalization.
    """
    X, actions, rewards = _check_batch(params, X, actions, rewards)
    B = X.shape[0]
    h1, h2, logits = _forward(params, X)
    probs = _softmax(logits)
    # d/dlogits of -r log softmax(logits)[a] is r * (probs - onehot(a))
    dlogits = probs
    dlogits[np.arange(B), actions] -= 1.0
    dlogits *= (rewards / B)[:, None]

    dW3 = h2.T @ dlogits
    db3 = dlogits.sum(axis=0)
    dz2 = (dlogits @ params.W3.T) * (1.0 - h2 * h2)
    dW2 = h1.T @ dz2
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.W2.T) * (1.0 - h1 * h1)
    dW1 = X.T @ dz1
    db1 = dz1.sum(axis=0)
    return PolicyParams(dW1, db1, dW2, db2, dW3, db3)


# -- optimizer -------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    seed: int = 0
    optimizer: str = "adamw"
    baseline: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (self.learning_rate > 0 and self.epsilon > 0):
            raise ValueError("learning_rate and epsilon must be positive")
        if self.weight_decay < 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid weight decay or moment coefficients")
        if self.optimizer not in ("adamw", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class AdamW:
    """Adam with decoupled weight decay, matching the usual PyTorch update."""

    def __init__(self, params: PolicyParams, lr, weight_decay, beta1, beta2, eps):
        self.lr, self.wd = lr, weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: PolicyParams, grads: PolicyParams) -> None:
        self.t += 1
        bc1 = 1 - self.beta1 ** self.t
        bc2 = 1 - self.beta2 ** self.t
        decay = 1 - self.lr * self.wd
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            p *= decay
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= (self.lr / bc1) * m / (np.sqrt(v) / np.sqrt(bc2) + self.eps)


class SGD:
    """Plain gradient descent with the same decoupled decay rule."""

    def __init__(self, params: PolicyParams, lr, weight_decay):
        self.lr, self.wd = lr, weight_decay

    def step(self, params: PolicyParams, grads: PolicyParams) -> None:
        decay = 1 - self.lr * self.wd
        for p, g in zip(params.arrays(), grads.arrays()):
            if self.wd:
                p *= decay
            p -= self.lr * g


def make_optimizer(params: PolicyParams, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate, cfg.weight_decay)
    return AdamW(params, cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.epsilon)


# -- training --------------------------------------------------------------

@dataclass
class TrainingSet:
    X: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    k: int
    arm_ids: list[str] = field(default_factory=list)


def build_training_set(
    records: Sequence[RewardRecord], dim: int, featurizer: Featurizer = featurize
) -> TrainingSet:
    """Stack features, actions and rewards, checking the arm layout is uniform."""
    if not records:
        raise ValueError("empty dataset")
    arm_ids: dict[int, str] = {}
    per_query: dict[str, set] = {}
    for r in records:
        if arm_ids.setdefault(r.arm_index, r.arm_id) != r.arm_id:
            raise ValueError(f"arm index {r.arm_index} is both {arm_ids[r.arm_index]} and {r.arm_id}")
        per_query.setdefault(r.query_id, set()).add(r.arm_index)
    k = max(arm_ids) + 1
    if sorted(arm_ids) != list(range(k)):
        raise ValueError(f"arm indices {sorted(arm_ids)} are not 0..{k - 1}")
    for qid, seen in per_query.items():
        if len(seen) != k:
            raise ValueError(f"query {qid} has records for {len(seen)} arms, expected {k}")
    X = np.stack([featurizer(r.query_text, dim) for r in records])
    actions = np.array([r.arm_index for r in records], dtype=np.int64)
    rewards = np.array([r.reward for r in records], dtype=np.float64)
    return TrainingSet(X, actions, rewards, k, [arm_ids[i] for i in range(k)])


def train(
    records: Sequence[RewardRecord],
    cfg: TrainConfig = TrainConfig(),
    D: int = 256,
    H: int = 512,
    featurizer: Featurizer = featurize,
    history: Optional[list] = None,
    init: Optional[PolicyParams] = None,
) -> PolicyParams:
    """Fit the router on logged rewards; deterministic given ``cfg.seed``.

    ``history``, when given, receives the mean minibatch loss of each epoch.
    """
    data = build_training_set(records, D, featurizer)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(D, H, data.k, rng) if init is None else init.copy()
    if params.dims != (D, H, data.k):
        raise ValueError(f"initial params have dims {params.dims}, expected {(D, H, data.k)}")
    opt = make_optimizer(params, cfg)
    n = len(data.actions)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            X, a, r = data.X[idx], data.actions[idx], data.rewards[idx]
            if cfg.baseline:
                r = r - r.mean()
            if history is not None:
                losses.append(reinforce_loss(params, X, a, r))
            opt.step(params, reinforce_grad(params, X, a, r))
        if history is not None:
            history.append(float(np.mean(losses)))
    return params


# -- serialization ---------------------------------------------------------

def save_policy(params: PolicyParams, path, arm_ids: Sequence[str] = ()) -> None:
    D, H, k = params.dims
    lines = [f"policy v1 {D} {H} {k} tanh"]
    if arm_ids:
        if len(arm_ids) != k:
            raise ValueError("arm_ids length does not match the output size")
        lines.append("arms " + " ".join(arm_ids))
    for name, arr in zip(params.names(), params.arrays()):
        flat = arr.reshape(-1)
        lines.append(f"{name} {' '.join(map(str, arr.shape))}")
        # repr of a Python float round-trips exactly
        lines.append(" ".join(map(repr, flat.tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def load_policy(path) -> tuple[PolicyParams, list[str]]:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 6 or head[:2] != ["policy", "v1"] or head[5] != "tanh":
        raise ValueError(f"{path}:1: bad policy header")
    arm_ids: list[str] = []
    i = 1
    if i < len(lines) and lines[i].startswith("arms "):
        arm_ids = lines[i].split()[1:]
        i += 1
    arrays = {}
    while i < len(lines):
        parts = lines[i].split()
        name, shape = parts[0], tuple(int(s) for s in parts[1:])
        if i + 1 >= len(lines):
            raise ValueError(f"{path}:{i + 1}: missing values for {name}")
        vals = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        if vals.size != int(np.prod(shape)):
            raise ValueError(f"{path}:{i + 2}: {name} has {vals.size} values, expected {shape}")
        arrays[name] = vals.reshape(shape)
        i += 2
    try:
        params = PolicyParams(**arrays)
    except TypeError as exc:
        raise ValueError(f"{path}: incomplete policy file ({exc})") from None
    if params.dims != tuple(int(h) for h in head[2:5]):
        raise ValueError(f"{path}: header dims disagree with arrays")
    if not params.all_finite():
        raise ValueError(f"{path}: non-finite weights")
    return params, arm_ids
