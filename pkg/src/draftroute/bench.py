"""End-to-end experiment pipeline and benchmark reports.

Stages: synthesize corpora and queries, fit the target and drafters, collect
offline rewards, train the router, then decode every held-out query under
each strategy (target alone, every fixed arm, greedy and dynamic routing) for
every seed. Call counts are exact and seed-reproducible; wall-clock fields are
measured and vary between runs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import LabeledQuery, check_domains, make_corpus, make_query_set
from .dataset import (
    AUTOREGRESSIVE,
    ArmSpec,
    RewardRecord,
    collect,
)
from .experiment import ExperimentConfig
from .hashing import fnv1a_64
from .lm import NGramModel, Vocabulary, fit_ngram, generate
from .policy import PolicyParams, train
from .router import DYNAMIC, GREEDY, decode_with_arm, route_and_decode
from .scoring import compose_reward, rouge_l
from .specdec import DecodeConfig, DecodeStats

REPORT_SCHEMA = "benchreport/v1"
AR_STRATEGY = "autoregressive"
ALL_TASKS = "all"


# -- building blocks -------------------------------------------------------

def make_vocab(cfg: ExperimentConfig) -> Vocabulary:
    return Vocabulary(tuple(cfg.symbols))


def synth_corpora(cfg: ExperimentConfig) -> dict[str, list[str]]:
    check_domains(cfg.domains, cfg.symbols)
    return {
        d.domain_id: make_corpus(d, cfg.n_corpus_sequences, cfg.corpus_seq_len, cfg.data_seed)
        for d in cfg.domains
    }


def synth_queries(cfg: ExperimentConfig) -> tuple[list[LabeledQuery], list[LabeledQuery]]:
    train_q = make_query_set(cfg.domains, cfg.per_domain_train, "train", cfg.data_seed)
    test_q = make_query_set(cfg.domains, cfg.per_domain_test, "test", cfg.data_seed)
    return train_q, test_q


def fit_models(
    cfg: ExperimentConfig, corpora: dict[str, list[str]]
) -> tuple[NGramModel, list[NGramModel]]:
    """Target on the union of all domains, each drafter on its own domains."""
    vocab = make_vocab(cfg)
    enc = {k: [vocab.encode(s) for s in v] for k, v in corpora.items()}
    union = [seq for d in cfg.domains for seq in enc[d.domain_id]]
    target = fit_ngram(union, cfg.target_order, cfg.smoothing, cfg.target_param_count,
                       "target", vocab)
    drafters = []
    for d in cfg.drafters:
        seqs = [seq for dom in d.domains for seq in enc[dom]]
        drafters.append(fit_ngram(seqs, d.order, cfg.smoothing, d.param_count, d.arm_id, vocab))
    return target, drafters


def make_arms(
    cfg: ExperimentConfig, target: NGramModel, drafters: Sequence[NGramModel]
) -> list[ArmSpec]:
    arms = [ArmSpec.drafter(m) for m in drafters]
    if cfg.autoregressive_arm:
        arms.append(ArmSpec.autoregressive(target))
    return arms


def expected_arm(cfg: ExperimentConfig, domain_id: str) -> Optional[str]:
    """The arm a good router should pick for a domain, if the recipe implies one."""
    owners = [d.arm_id for d in cfg.drafters if d.domains == (domain_id,)]
    if len(owners) == 1:
        return owners[0]
    if not owners and cfg.autoregressive_arm and not any(domain_id in d.domains for d in cfg.drafters):
        return AUTOREGRESSIVE
    return None


@dataclass
class Pipeline:
    cfg: ExperimentConfig
    target: NGramModel
    drafters: list[NGramModel]
    arms: list[ArmSpec]
    train_queries: list[LabeledQuery]
    test_queries: list[LabeledQuery]
    records: list[RewardRecord] = field(default_factory=list)
    params: Optional[PolicyParams] = None
    train_history: list[float] = field(default_factory=list)


def build_pipeline(cfg: ExperimentConfig, train_policy: bool = True) -> Pipeline:
    corpora = synth_corpora(cfg)
    target, drafters = fit_models(cfg, corpora)
    arms = make_arms(cfg, target, drafters)
    train_q, test_q = synth_queries(cfg)
    pipe = Pipeline(cfg, target, drafters, arms, train_q, test_q)
    pipe.records = list(collect(train_q, target, arms, cfg.alpha, cfg.decode.max_len, cfg.data_seed))
    if train_policy:
        pipe.params = train(pipe.records, cfg.train, cfg.D, cfg.H, history=pipe.train_history)
    return pipe


def reweight(records: Iterable[RewardRecord], alpha: float) -> list[RewardRecord]:
    """Same rollouts, rewards recomposed for another alignment/cost weight."""
    return [replace(r, alpha=alpha, reward=compose_reward(r.alignment, r.cost, alpha))
            for r in records]


# -- evaluation ------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    task: str
    strategy: str
    seed: int
    query_id: str
    arm_id: str
    stats: DecodeStats
    quality: float
    gamma: int
    temperature: float


def strategies_for(pipe: Pipeline) -> list[str]:
    out = [AR_STRATEGY]
    out += [f"fixed:{a.arm_id}" for a in pipe.arms if a.kind != AUTOREGRESSIVE]
    if pipe.params is not None:
        out += ["greedy-policy", "dynamic-policy"]
    return out


def _decode_rng(seed: int, query_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, fnv1a_64(query_id.encode()) & 0xFFFFFFFF, 11])


def _select_rng(seed: int, query_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, fnv1a_64(query_id.encode()) & 0xFFFFFFFF, 13])


def run_strategies(
    pipe: Pipeline,
    queries: Optional[Sequence[LabeledQuery]] = None,
    strategies: Optional[Sequence[str]] = None,
    decode: Optional[DecodeConfig] = None,
    seeds: Optional[Sequence[int]] = None,
    params: Optional[PolicyParams] = None,
) -> list[RunRecord]:
    """Decode each query under each strategy and seed.

    Every strategy sees the same decode random stream for a given
    ``(seed, query)``, so a router that picks the same arm as a fixed-arm run
    reproduces that run exactly.
    """
    cfg = pipe.cfg
    queries = pipe.test_queries if queries is None else queries
    strategies = strategies_for(pipe) if strategies is None else strategies
    dcfg = cfg.decode if decode is None else decode
    seeds = cfg.seeds if seeds is None else seeds
    params = pipe.params if params is None else params
    target = pipe.target
    vocab = target.vocab
    by_id = {a.arm_id: a for a in pipe.arms}
    refs = {q.text: generate(target, vocab.encode(q.text), dcfg.max_len, 0.0).tokens for q in queries}
    out: list[RunRecord] = []
    for seed in seeds:
        for q in queries:
            prompt = vocab.encode(q.text)
            for strat in strategies:
                rng = _decode_rng(seed, q.query_id)
                if strat == AR_STRATEGY:
                    arm = ArmSpec.autoregressive(target)
                    output, stats = decode_with_arm(arm, target, prompt, dcfg, rng)
                    arm_id = AUTOREGRESSIVE
                elif strat.startswith("fixed:"):
                    arm = by_id[strat[len("fixed:"):]]
                    output, stats = decode_with_arm(arm, target, prompt, dcfg, rng)
                    arm_id = arm.arm_id
                elif strat in ("greedy-policy", "dynamic-policy"):
                    mode = GREEDY if strat == "greedy-policy" else DYNAMIC
                    res = route_and_decode(params, pipe.arms, target, q, dcfg, mode, rng,
                                           select_rng=_select_rng(seed, q.query_id))
                    output, stats, arm_id = res.output, res.stats, res.arm_id
                else:
                    raise ValueError(f"unknown strategy {strat!r}")
                out.append(RunRecord(q.true_domain, strat, seed, q.query_id, arm_id, stats,
                                     rouge_l(output.tokens, refs[q.text]),
                                     dcfg.gamma, dcfg.temperature))
    return out


def accounting_violations(run: RunRecord, max_len: int) -> list[str]:
    """Invariants every decode run must satisfy; returns human-readable failures."""
    s = run.stats
    bad = []
    L = s.tokens_emitted
    if not 1 <= L <= max_len:
        bad.append(f"tokens_emitted={L} outside [1, {max_len}]")
    if s.draft_tokens_accepted > s.draft_tokens_generated:
        bad.append("accepted > generated")
    if s.draft_tokens_generated:
        rate = s.draft_tokens_accepted / s.draft_tokens_generated
        if not 0.0 <= rate <= 1.0:
            bad.append(f"accept rate {rate} outside [0, 1]")
    lo = math.ceil(L / (run.gamma + 1))
    if not lo <= s.target_calls <= L:
        bad.append(f"target_calls={s.target_calls} outside [{lo}, {L}]")
    if s.wall_ns_total != s.wall_ns_decode + s.wall_ns_policy:
        bad.append("wall_ns_total != decode + policy")
    return bad


@dataclass
class BenchRow:
    task: str
    strategy: str
    gamma: int
    temperature: float
    n_runs: int
    tokens: int
    target_calls_per_token: float
    draft_calls_per_token: float
    accept_rate_pct: Optional[float]
    quality_rouge_l: float
    ms_per_token_mean: float
    ms_per_token_std: Optional[float]
    expected_arm: Optional[str]
    expected_arm_share: Optional[float]
    arm_histogram: dict

    TIMING_FIELDS = ("ms_per_token_mean", "ms_per_token_std")

    def as_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            for k in self.TIMING_FIELDS:
                d.pop(k)
        return d


def aggregate(runs: Sequence[RunRecord], cfg: ExperimentConfig) -> list[BenchRow]:
    """One row per (task, strategy, gamma, temperature); ``all`` pools the tasks."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in runs:
        for task in (r.task, ALL_TASKS):
            groups.setdefault((task, r.strategy, r.gamma, r.temperature), []).append(r)
    task_order = {d.domain_id: i for i, d in enumerate(cfg.domains)}
    task_order[ALL_TASKS] = len(task_order)
    strat_order: dict[str, int] = {}
    for r in runs:
        strat_order.setdefault(r.strategy, len(strat_order))

    rows = []
    for key in sorted(groups, key=lambda k: (k[2], k[3], task_order.get(k[0], 99), strat_order[k[1]])):
        task, strat, gamma, temp = key
        rs = groups[key]
        tokens = sum(r.stats.tokens_emitted for r in rs)
        gen = sum(r.stats.draft_tokens_generated for r in rs)
        acc = sum(r.stats.draft_tokens_accepted for r in rs)
        per_seed = {}
        for r in rs:
            ns, tk = per_seed.get(r.seed, (0, 0))
            per_seed[r.seed] = (ns + r.stats.wall_ns_total, tk + r.stats.tokens_emitted)
        ms = [ns / tk / 1e6 for ns, tk in (per_seed[s] for s in sorted(per_seed))]
        hist: dict[str, int] = {}
        for r in rs:
            hist[r.arm_id] = hist.get(r.arm_id, 0) + 1
        exp = expected_arm(cfg, task) if task != ALL_TASKS else None
        rows.append(BenchRow(
            task=task, strategy=strat, gamma=gamma, temperature=temp, n_runs=len(rs),
            tokens=tokens,
            target_calls_per_token=sum(r.stats.target_calls for r in rs) / tokens,
            draft_calls_per_token=sum(r.stats.draft_calls for r in rs) / tokens,
            accept_rate_pct=100.0 * acc / gen if gen else None,
            quality_rouge_l=float(np.mean([r.quality for r in rs])),
            ms_per_token_mean=float(np.mean(ms)),
            ms_per_token_std=float(np.std(ms, ddof=1)) if len(ms) >= 2 else None,
            expected_arm=exp,
            expected_arm_share=hist.get(exp, 0) / len(rs) if exp else None,
            arm_histogram=dict(sorted(hist.items())),
        ))
    return rows


@dataclass
class BenchReport:
    """Per-task rows plus pooled ``all`` rows kept apart in ``pooled``."""

    recipe: str
    rows: list[BenchRow]
    meta: dict = field(default_factory=dict)
    pooled: list[BenchRow] = field(default_factory=list)

    @classmethod
    def from_runs(cls, recipe: str, runs: Sequence[RunRecord], cfg: ExperimentConfig,
                  meta: dict) -> "BenchReport":
        rows = aggregate(runs, cfg)
        return cls(recipe, [r for r in rows if r.task != ALL_TASKS], meta,
                   [r for r in rows if r.task == ALL_TASKS])

    def row(self, task: str, strategy: str) -> BenchRow:
        hits = [r for r in self.rows + self.pooled if r.task == task and r.strategy == strategy]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows for ({task}, {strategy})")
        return hits[0]

    def to_jsonl(self, timing: bool = True) -> str:
        head = {"schema": REPORT_SCHEMA, "recipe": self.recipe, **self.meta}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps(r.as_dict(timing), sort_keys=True) for r in self.rows + self.pooled]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = ["task", "strategy", "gamma", "T", "calls/tok", "accept%", "rougeL",
                  "ms/tok", "expected-arm%"]
        body = []
        for r in self.rows + self.pooled:
            ms = f"{r.ms_per_token_mean:.4f}"
            if r.ms_per_token_std is not None:
                ms += f" +-{r.ms_per_token_std:.4f}"
            body.append([
                r.task, r.strategy, str(r.gamma), f"{r.temperature:g}",
                f"{r.target_calls_per_token:.4f}",
                "-" if r.accept_rate_pct is None else f"{r.accept_rate_pct:.2f}",
                f"{r.quality_rouge_l:.4f}", ms,
                "-" if r.expected_arm_share is None else f"{100 * r.expected_arm_share:.1f}",
            ])
        widths = [max(len(x) for x in col) for col in zip(header, *body)]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
        lines += [fmt.format(*b) for b in body]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.txt").write_text(self.to_table())
        (out / f"{stem}.jsonl").write_text(self.to_jsonl())


# -- experiment commands -----------------------------------------------------

def bench(cfg: ExperimentConfig, pipe: Optional[Pipeline] = None) -> tuple[BenchReport, list[RunRecord]]:
    pipe = build_pipeline(cfg) if pipe is None else pipe
    runs = run_strategies(pipe)
    meta = {"seeds": list(cfg.seeds), "alpha": cfg.alpha,
            "n_train_queries": len(pipe.train_queries), "n_test_queries": len(pipe.test_queries),
            "n_records": len(pipe.records)}
    return BenchReport.from_runs(cfg.recipe, runs, cfg, meta), runs


def alignment_gaps(cfg: ExperimentConfig, records: Sequence[RewardRecord]) -> dict[str, float]:
    """Per domain: mean alignment of its own drafter minus the best other drafter's.

    A sanity precondition for routing experiments; only domains with an
    expected drafter arm are reported.
    """
    out = {}
    for d in cfg.domains:
        own = expected_arm(cfg, d.domain_id)
        if own is None or own == AUTOREGRESSIVE:
            continue
        means: dict[str, list[float]] = {}
        for r in records:
            if r.meta.get("true_domain") == d.domain_id and r.arm_id != AUTOREGRESSIVE:
                means.setdefault(r.arm_id, []).append(r.alignment)
        others = [float(np.mean(v)) for k, v in means.items() if k != own]
        if others:
            out[d.domain_id] = float(np.mean(means[own])) - max(others)
    return out


def selection_shares(params: PolicyParams, arms: Sequence[ArmSpec],
                     queries: Sequence[LabeledQuery]) -> dict[str, float]:
    """Fraction of queries whose greedy (argmax) choice is each arm."""
    from .router import select_arm

    counts = {a.arm_id: 0 for a in arms}
    for q in queries:
        idx, _ = select_arm(params, q.text, GREEDY)
        counts[arms[idx].arm_id] += 1
    return {k: v / len(queries) for k, v in counts.items()}


def sweep_alpha(cfg: ExperimentConfig, alphas: Sequence[float],
                pipe: Optional[Pipeline] = None) -> list[dict]:
    """Retrain per alpha on the same rollouts and report greedy selection shares."""
    if len({round(d.param_count, 12) for d in cfg.drafters}) < 2:
        raise ValueError("alpha sweep needs at least two arms with distinct sizes")
    pipe = build_pipeline(cfg, train_policy=False) if pipe is None else pipe
    mean_align: dict[str, float] = {}
    for a in pipe.arms:
        mean_align[a.arm_id] = float(np.mean([r.alignment for r in pipe.records if r.arm_id == a.arm_id]))
    costs = {r.arm_id: r.cost for r in pipe.records}
    out = []
    for alpha in alphas:
        params = train(reweight(pipe.records, alpha), cfg.train, cfg.D, cfg.H)
        out.append({
            "alpha": float(alpha),
            "selection_share": selection_shares(params, pipe.arms, pipe.test_queries),
            "mean_alignment": mean_align,
            "cost": costs,
        })
    return out


def learning_curve(cfg: ExperimentConfig, sizes: Sequence[int], mode: str = "dynamic",
                   pipe: Optional[Pipeline] = None) -> list[dict]:
    """Train on record-prefixes of increasing size and measure routed decoding.

    Sizes count records and are rounded down to whole queries (``k`` records
    each); a size at or above the dataset length uses every record.
    """
    if list(sizes) != sorted(sizes) or not sizes:
        raise ValueError("sizes must be non-empty and ascending")
    pipe = build_pipeline(cfg, train_policy=False) if pipe is None else pipe
    k = len(pipe.arms)
    strategy = "greedy-policy" if mode == GREEDY else "dynamic-policy"
    out = []
    for size in sizes:
        n = min(max(size // k, 1) * k, len(pipe.records))
        params = train(pipe.records[:n], cfg.train, cfg.D, cfg.H)
        runs = run_strategies(pipe, strategies=[strategy], params=params)
        row = aggregate(runs, cfg)
        overall = next(r for r in row if r.task == ALL_TASKS)
        out.append({
            "size": int(size), "records_used": n,
            "accept_rate_pct": overall.accept_rate_pct,
            "target_calls_per_token": overall.target_calls_per_token,
            "per_task_accept_pct": {r.task: r.accept_rate_pct for r in row if r.task != ALL_TASKS},
        })
    return out


def ablation_sweep(cfg: ExperimentConfig, gammas: Sequence[int], temperatures: Sequence[float],
                   pipe: Optional[Pipeline] = None) -> BenchReport:
    """Bench rows for every (gamma, temperature) pair with one trained router."""
    pipe = build_pipeline(cfg) if pipe is None else pipe
    runs: list[RunRecord] = []
    for g in gammas:
        for t in temperatures:
            runs += run_strategies(pipe, decode=replace(cfg.decode, gamma=int(g), temperature=float(t)))
    meta = {"gammas": list(gammas), "temperatures": list(temperatures), "seeds": list(cfg.seeds)}
    return BenchReport.from_runs(cfg.recipe, runs, cfg, meta)
