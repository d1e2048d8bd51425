"""``draftroute`` command line.

Stage commands share one working directory (``--out``), each reading what the
previous stage wrote::

    synth   -> corpus-<domain>.txt, queries-train.tsv, queries-test.tsv
    fit     -> models/<model_id>.ngram (target plus one file per drafter)
    collect -> rewards.tsv
    train   -> policy.txt
    decode  -> decode.tsv

``bench``, ``sweep-alpha``, ``curve`` and ``sweeps`` run a whole experiment in
memory and write reports. Exit status is 0 on success, 2 for configuration
errors and 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bench as B
from .corpus import (
    load_corpus,
    load_queries,
    save_corpus,
    save_queries,
)
from .dataset import collect, load_records, save_records
from .experiment import ConfigError, ExperimentConfig, format_config, load_config, recipe
from .lm import load_model, save_model
from .policy import load_policy, save_policy, train
from .router import route_and_decode

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _ints(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else recipe(args.recipe or "two-domain")
    if args.recipe and args.config:
        raise ConfigError("give either --config or --recipe, not both")
    try:
        if args.seed is not None:
            cfg = replace(cfg, seeds=tuple(_ints(args.seed)))
        dec = {}
        if args.gamma is not None:
            dec["gamma"] = args.gamma
        if args.temperature is not None:
            dec["temperature"] = args.temperature
        if dec:
            cfg = replace(cfg, decode=replace(cfg.decode, **dec))
        if args.alpha is not None:
            cfg = replace(cfg, alpha=args.alpha)
        if args.mode is not None:
            cfg = replace(cfg, mode=args.mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# -- stage commands ----------------------------------------------------------

def cmd_synth(cfg: ExperimentConfig, out: Path, args) -> None:
    corpora = B.synth_corpora(cfg)
    for dom, seqs in corpora.items():
        save_corpus(seqs, out / f"corpus-{dom}.txt")
    train_q, test_q = B.synth_queries(cfg)
    save_queries(train_q, out / "queries-train.tsv")
    save_queries(test_q, out / "queries-test.tsv")
    (out / "config.txt").write_text(format_config(cfg))
    print(f"wrote {len(corpora)} corpora, {len(train_q)} train / {len(test_q)} test queries")


def cmd_fit(cfg: ExperimentConfig, out: Path, args) -> None:
    corpora = {d.domain_id: load_corpus(out / f"corpus-{d.domain_id}.txt") for d in cfg.domains}
    target, drafters = B.fit_models(cfg, corpora)
    (out / "models").mkdir(exist_ok=True)
    for m in [target, *drafters]:
        save_model(m, out / "models" / f"{m.model_id}.ngram")
    print(f"fitted target and {len(drafters)} drafters")


def _load_arms(cfg: ExperimentConfig, out: Path):
    target = load_model(out / "models" / "target.ngram")
    drafters = [load_model(out / "models" / f"{d.arm_id}.ngram") for d in cfg.drafters]
    return target, B.make_arms(cfg, target, drafters)


def cmd_collect(cfg: ExperimentConfig, out: Path, args) -> None:
    target, arms = _load_arms(cfg, out)
    queries = load_queries(out / "queries-train.tsv")
    records = list(collect(queries, target, arms, cfg.alpha, cfg.decode.max_len, cfg.data_seed))
    save_records(records, out / "rewards.tsv")
    print(f"wrote {len(records)} records ({len(queries)} queries x {len(arms)} arms)")


def cmd_train(cfg: ExperimentConfig, out: Path, args) -> None:
    records = load_records(out / "rewards.tsv")
    history: list[float] = []
    params = train(records, cfg.train, cfg.D, cfg.H, history=history)
    k = params.dims[2]
    arm_ids = [next(r.arm_id for r in records if r.arm_index == i) for i in range(k)]
    save_policy(params, out / "policy.txt", arm_ids)
    print("epoch losses: " + " ".join(f"{x:.6f}" for x in history))


def cmd_decode(cfg: ExperimentConfig, out: Path, args) -> None:
    target, arms = _load_arms(cfg, out)
    params, arm_ids = load_policy(out / "policy.txt")
    if arm_ids and arm_ids != [a.arm_id for a in arms]:
        raise ConfigError(f"policy arms {arm_ids} do not match configured arms")
    if args.query:
        queries = [B.LabeledQuery("cli-0", args.query, "unknown")]
    else:
        queries = load_queries(out / "queries-test.tsv")
        if args.limit:
            queries = queries[: args.limit]
    seed = cfg.seeds[0]
    lines = ["query_id\tarm_id\ttokens\ttarget_calls\tdraft_generated\tdraft_accepted\toutput"]
    for q in queries:
        res = route_and_decode(params, arms, target, q, cfg.decode, cfg.mode,
                               B._decode_rng(seed, q.query_id),
                               select_rng=B._select_rng(seed, q.query_id))
        s = res.stats
        lines.append(f"{q.query_id}\t{res.arm_id}\t{s.tokens_emitted}\t{s.target_calls}\t"
                     f"{s.draft_tokens_generated}\t{s.draft_tokens_accepted}\t{res.output.text}")
    (out / "decode.tsv").write_text("\n".join(lines) + "\n")
    if args.query:
        print(lines[1])
    else:
        print(f"decoded {len(queries)} queries")


# -- experiment commands -----------------------------------------------------

def cmd_bench(cfg: ExperimentConfig, out: Path, args) -> None:
    report, runs = B.bench(cfg)
    bad = [(r, v) for r in runs for v in B.accounting_violations(r, cfg.decode.max_len)]
    if bad:
        raise RuntimeError(f"{len(bad)} accounting violations, first: {bad[0][1]}")
    report.write(out)
    sys.stdout.write(report.to_table())


def cmd_sweep_alpha(cfg: ExperimentConfig, out: Path, args) -> None:
    res = B.sweep_alpha(cfg, _floats(args.alphas))
    (out / "sweep-alpha.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in res))
    arms = list(res[0]["selection_share"])
    print("alpha  " + "  ".join(arms))
    for r in res:
        print(f"{r['alpha']:<5g}  " + "  ".join(f"{r['selection_share'][a]:.3f}".ljust(len(a)) for a in arms))


def cmd_curve(cfg: ExperimentConfig, out: Path, args) -> None:
    res = B.learning_curve(cfg, _ints(args.sizes), mode=cfg.mode)
    (out / "curve.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in res))
    print("records  accept%  calls/tok")
    for r in res:
        print(f"{r['records_used']:<7d}  {r['accept_rate_pct']:7.2f}  {r['target_calls_per_token']:.4f}")


def cmd_sweeps(cfg: ExperimentConfig, out: Path, args) -> None:
    report = B.ablation_sweep(cfg, _ints(args.gammas), _floats(args.temperatures))
    report.write(out, "sweeps")
    sys.stdout.write(report.to_table())


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "collect": cmd_collect,
    "train": cmd_train,
    "decode": cmd_decode,
    "bench": cmd_bench,
    "sweep-alpha": cmd_sweep_alpha,
    "curve": cmd_curve,
    "sweeps": cmd_sweeps,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment file")
    common.add_argument("--recipe", help="stock recipe name (instead of --config)")
    common.add_argument("--seed", help="comma-separated decode seeds")
    common.add_argument("--gamma", type=int)
    common.add_argument("--temperature", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--mode", choices=["greedy", "dynamic"])
    common.add_argument("--out", default=".", help="working/output directory")

    parser = argparse.ArgumentParser(prog="draftroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "decode":
            p.add_argument("--query", help="decode one literal query instead of the test split")
            p.add_argument("--limit", type=int, default=0, help="decode only the first N test queries")
        elif name == "sweep-alpha":
            p.add_argument("--alphas", default="0,0.2,0.4,0.6,0.8,1")
        elif name == "curve":
            p.add_argument("--sizes", default="10,40,100,200,400,1000,4000")
        elif name == "sweeps":
            p.add_argument("--gammas", default="5,7,10")
            p.add_argument("--temperatures", default="0.5,0.9,1")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"draftroute: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"draftroute: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
