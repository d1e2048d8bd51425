"""Experiment configuration, stock recipes and the flat key-value config format.

A config file is a list of ``key = value`` lines; ``#`` starts a comment.
``recipe`` selects a stock starting point and every other key overrides it::

    recipe = two-domain
    seeds = 0,1,2
    gamma = 7
    temperature = 1.0
    alpha = 1.0
    domains = periodic,markov
    target = order=5 param=2.2
    drafter.draft-periodic = order=4 param=0.6 domains=periodic
    drafter.draft-markov = order=2 param=0.6 domains=markov
    autoregressive = no

Drafter lines replace the recipe's drafter list as a whole once any appears.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from .corpus import STOCK_SYMBOLS, DomainSpec, stock_domain
from .policy import TrainConfig
from .specdec import DecodeConfig


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class DrafterDef:
    arm_id: str
    order: int
    param_count: float
    domains: tuple[str, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: str
    domains: tuple[DomainSpec, ...]
    drafters: tuple[DrafterDef, ...]
    target_order: int = 5
    target_param_count: float = 2.2
    autoregressive_arm: bool = False
    alpha: float = 1.0
    decode: DecodeConfig = DecodeConfig(gamma=7, temperature=1.0, max_len=32)
    D: int = 256
    H: int = 512
    train: TrainConfig = TrainConfig()
    n_train_queries: int = 2000
    n_test_queries: int = 500
    n_corpus_sequences: int = 600
    corpus_seq_len: int = 64
    smoothing: float = 0.1
    data_seed: int = 0
    seeds: tuple[int, ...] = (0, 1)
    mode: str = "greedy"
    symbols: str = STOCK_SYMBOLS

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.domains:
            raise ConfigError("at least one domain is required")
        if not self.drafters and not self.autoregressive_arm:
            raise ConfigError("at least one arm is required")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.mode not in ("greedy", "dynamic"):
            raise ConfigError("mode must be greedy or dynamic")
        dom_ids = {d.domain_id for d in self.domains}
        for d in self.drafters:
            missing = set(d.domains) - dom_ids
            if missing:
                raise ConfigError(f"drafter {d.arm_id} trains on unknown domains {sorted(missing)}")
            if d.order < 1 or not d.param_count > 0:
                raise ConfigError(f"drafter {d.arm_id}: order must be >= 1 and param > 0")
        if self.n_train_queries < len(self.domains) or self.n_test_queries < len(self.domains):
            raise ConfigError("need at least one train and test query per domain")

    @property
    def per_domain_train(self) -> int:
        return self.n_train_queries // len(self.domains)

    @property
    def per_domain_test(self) -> int:
        return self.n_test_queries // len(self.domains)


def _two_domain() -> ExperimentConfig:
    return ExperimentConfig(
        recipe="two-domain",
        domains=(stock_domain("periodic"), stock_domain("markov")),
        drafters=(
            DrafterDef("draft-periodic", 4, 0.6, ("periodic",)),
            DrafterDef("draft-markov", 2, 0.6, ("markov",)),
        ),
        alpha=1.0,
    )


def _size_tradeoff() -> ExperimentConfig:
    return ExperimentConfig(
        recipe="size-tradeoff",
        domains=(stock_domain("periodic"),),
        drafters=(
            DrafterDef("draft-small", 1, 0.5, ("periodic",)),
            DrafterDef("draft-medium", 2, 1.0, ("periodic",)),
            DrafterDef("draft-large", 4, 2.0, ("periodic",)),
        ),
        target_param_count=3.0,
        alpha=0.5,
        n_train_queries=1000,
        n_test_queries=500,
    )


def _with_ar_arm() -> ExperimentConfig:
    return ExperimentConfig(
        recipe="with-ar-arm",
        domains=(stock_domain("periodic"), stock_domain("markov"), stock_domain("digits")),
        drafters=(
            DrafterDef("draft-periodic", 4, 0.6, ("periodic",)),
            DrafterDef("draft-markov", 2, 0.6, ("markov",)),
        ),
        target_param_count=0.8,
        autoregressive_arm=True,
        alpha=0.5,
        n_train_queries=3000,
        n_test_queries=600,
    )


RECIPES = {
    "two-domain": _two_domain,
    "size-tradeoff": _size_tradeoff,
    "with-ar-arm": _with_ar_arm,
    # the curve and ablation sweeps run on the two-domain setup
    "curve": lambda: replace(_two_domain(), recipe="curve"),
    "sweeps": lambda: replace(_two_domain(), recipe="sweeps"),
}


def recipe(name: str, **overrides: Any) -> ExperimentConfig:
    try:
        cfg = RECIPES[name]()
    except KeyError:
        raise ConfigError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None
    return replace(cfg, **overrides) if overrides else cfg


# -- flat key-value files ------------------------------------------------------

_TOP_INT = {"target_order", "D", "H", "n_train_queries", "n_test_queries",
            "n_corpus_sequences", "corpus_seq_len", "data_seed"}
_TOP_FLOAT = {"alpha", "smoothing"}
_DECODE_KEYS = {"gamma": int, "temperature": float, "max_len": int}
_TRAIN_KEYS = {"epochs": int, "batch_size": int, "learning_rate": float,
               "weight_decay": float, "beta1": float, "beta2": float,
               "epsilon": float, "train_seed": int, "optimizer": str}
_BOOL = {"yes": True, "true": True, "1": True, "no": False, "false": False, "0": False}


def _kv_list(text: str) -> dict[str, str]:
    out = {}
    for item in text.split():
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    pairs: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((lineno, key, value))

    name = next((v for _, k, v in pairs if k == "recipe"), "two-domain")
    cfg = recipe(name)
    top: dict[str, Any] = {}
    dec: dict[str, Any] = {}
    trn: dict[str, Any] = {}
    drafters: list[DrafterDef] = []
    domain_names = None
    prefix_len = None
    for lineno, key, value in pairs:
        try:
            if key == "recipe":
                continue
            if key in _TOP_INT:
                top[key] = int(value)
            elif key in _TOP_FLOAT:
                top[key] = float(value)
            elif key in _DECODE_KEYS:
                dec[key] = _DECODE_KEYS[key](value)
            elif key in _TRAIN_KEYS:
                trn["seed" if key == "train_seed" else key] = _TRAIN_KEYS[key](value)
            elif key == "seeds":
                top["seeds"] = tuple(int(s) for s in value.split(",") if s.strip())
            elif key == "mode":
                top["mode"] = value
            elif key == "autoregressive":
                top["autoregressive_arm"] = _BOOL[value.lower()]
            elif key == "domains":
                domain_names = [s.strip() for s in value.split(",") if s.strip()]
            elif key == "query_prefix_len":
                prefix_len = int(value)
            elif key == "target":
                kv = _kv_list(value)
                if "order" in kv:
                    top["target_order"] = int(kv["order"])
                if "param" in kv:
                    top["target_param_count"] = float(kv["param"])
            elif key.startswith("drafter."):
                kv = _kv_list(value)
                drafters.append(DrafterDef(
                    key[len("drafter."):], int(kv["order"]), float(kv["param"]),
                    tuple(s for s in kv["domains"].split(",") if s),
                ))
            else:
                raise ConfigError(f"unknown key {key!r}")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise ConfigError(f"{source}:{lineno}: {exc}") from None
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None

    try:
        if domain_names is not None or prefix_len is not None:
            names = domain_names or [d.domain_id for d in cfg.domains]
            plen = prefix_len or cfg.domains[0].query_prefix_len
            top["domains"] = tuple(stock_domain(n, plen) for n in names)
        if drafters:
            top["drafters"] = tuple(drafters)
        if dec:
            top["decode"] = replace(cfg.decode, **dec)
        if trn:
            top["train"] = replace(cfg.train, **trn)
        return replace(cfg, **top)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config_text` for the keys it understands."""
    lines = [f"recipe = {cfg.recipe}",
             f"domains = {','.join(d.domain_id for d in cfg.domains)}",
             f"query_prefix_len = {cfg.domains[0].query_prefix_len}",
             f"target = order={cfg.target_order} param={cfg.target_param_count!r}"]
    for d in cfg.drafters:
        lines.append(f"drafter.{d.arm_id} = order={d.order} param={d.param_count!r} "
                     f"domains={','.join(d.domains)}")
    lines.append(f"autoregressive = {'yes' if cfg.autoregressive_arm else 'no'}")
    for name in sorted(_TOP_INT | _TOP_FLOAT):
        lines.append(f"{name} = {getattr(cfg, name)!r}")
    for name in _DECODE_KEYS:
        lines.append(f"{name} = {getattr(cfg.decode, name)!r}")
    for name in _TRAIN_KEYS:
        attr = "seed" if name == "train_seed" else name
        lines.append(f"{name} = {getattr(cfg.train, attr)}")
    lines.append(f"seeds = {','.join(map(str, cfg.seeds))}")
    lines.append(f"mode = {cfg.mode}")
    return "\n".join(lines) + "\n"
