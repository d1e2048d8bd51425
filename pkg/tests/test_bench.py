from dataclasses import replace

import numpy as np
import pytest

from draftroute import bench as B
from draftroute.experiment import recipe


def test_report_shape(two_domain_bench):
    report, runs = two_domain_bench
    strategies = {r.strategy for r in report.rows}
    tasks = {r.task for r in report.rows}
    assert tasks == {"periodic", "markov"}
    assert strategies == {"autoregressive", "fixed:draft-periodic", "fixed:draft-markov",
                          "greedy-policy", "dynamic-policy"}
    assert len(report.rows) == len(tasks) * len(strategies)
    assert len(report.pooled) == len(strategies)
    assert len(runs) == 500 * 5 * 2
    lines = report.to_jsonl().splitlines()
    assert '"schema": "benchreport/v1"' in lines[0]
    assert len(lines) == 1 + len(report.rows) + len(report.pooled)


def test_in_domain_drafter_accepts_more(two_domain_bench):
    report, _ = two_domain_bench
    for task, own, other in (("periodic", "draft-periodic", "draft-markov"),
                             ("markov", "draft-markov", "draft-periodic")):
        assert report.row(task, f"fixed:{own}").accept_rate_pct > \
            report.row(task, f"fixed:{other}").accept_rate_pct


def test_autoregressive_row(two_domain_bench):
    report, _ = two_domain_bench
    row = report.row("all", "autoregressive")
    assert row.accept_rate_pct is None
    assert row.target_calls_per_token == 1.0


def test_std_needs_two_seeds(two_domain):
    pipe = two_domain
    qs = pipe.test_queries[:10]
    one = B.aggregate(B.run_strategies(pipe, qs, ["fixed:draft-markov"], seeds=[0]), pipe.cfg)
    two = B.aggregate(B.run_strategies(pipe, qs, ["fixed:draft-markov"], seeds=[0, 1]), pipe.cfg)
    assert all(r.ms_per_token_std is None for r in one)
    assert all(r.ms_per_token_std is not None for r in two)


def test_counts_reproducible(two_domain):
    pipe = two_domain
    qs = pipe.test_queries[:40]

    def report():
        runs = B.run_strategies(pipe, qs)
        return B.BenchReport.from_runs("x", runs, pipe.cfg, {}).to_jsonl(timing=False)

    assert report() == report()


def test_router_reproduces_fixed_arm_runs(two_domain):
    # same decode stream: a routed run that picks arm j equals the fixed-j run
    pipe = two_domain
    runs = B.run_strategies(pipe, pipe.test_queries[:30], seeds=[0])
    fixed = {(r.query_id, r.arm_id): r for r in runs if r.strategy.startswith("fixed:")}
    for r in runs:
        if r.strategy.endswith("-policy"):
            f = fixed[(r.query_id, r.arm_id)]
            assert (r.stats.target_calls, r.stats.draft_tokens_accepted, r.quality) == \
                (f.stats.target_calls, f.stats.draft_tokens_accepted, f.quality)


def test_alignment_gap_precondition(two_domain):
    gaps = B.alignment_gaps(two_domain.cfg, two_domain.records)
    assert set(gaps) == {"periodic", "markov"}
    assert min(gaps.values()) >= 0.2


def test_training_loss_decreases(two_domain):
    hist = two_domain.train_history
    assert len(hist) == 3 and hist[-1] < hist[0]


def test_full_size_curve_matches_bench(two_domain, two_domain_bench):
    report, _ = two_domain_bench
    n = len(two_domain.records)
    (point,) = B.learning_curve(two_domain.cfg, [n], mode="greedy", pipe=two_domain)
    row = report.row("all", "greedy-policy")
    assert point["records_used"] == n
    assert point["accept_rate_pct"] == row.accept_rate_pct
    assert point["target_calls_per_token"] == row.target_calls_per_token


def test_accounting_violations_detects_bad_stats(two_domain_bench):
    _, runs = two_domain_bench
    r = runs[0]
    bad = replace(r, stats=replace(r.stats, target_calls=r.stats.tokens_emitted + 1,
                                   wall_ns_total=r.stats.wall_ns_total + 1))
    msgs = B.accounting_violations(bad, 32)
    assert len(msgs) == 2


def test_expected_arm():
    cfg = recipe("with-ar-arm")
    assert B.expected_arm(cfg, "periodic") == "draft-periodic"
    assert B.expected_arm(cfg, "digits") == "autoregressive"
    assert B.expected_arm(recipe("size-tradeoff"), "periodic") is None


def test_sweep_alpha_needs_distinct_sizes():
    with pytest.raises(ValueError, match="distinct"):
        B.sweep_alpha(recipe("two-domain"), [0.0, 1.0])


def test_curve_sizes_must_ascend(two_domain):
    with pytest.raises(ValueError):
        B.learning_curve(two_domain.cfg, [100, 10], pipe=two_domain)


def test_tiny_training_set_no_better_than_best_fixed(two_domain, two_domain_bench):
    report, _ = two_domain_bench
    (point,) = B.learning_curve(two_domain.cfg, [10], mode="dynamic", pipe=two_domain)
    # per fixed drafter: mean over tasks of its accept rate; take the best drafter
    best = max(
        np.mean([report.row(t, s).accept_rate_pct for t in ("periodic", "markov")])
        for s in ("fixed:draft-periodic", "fixed:draft-markov")
    )
    assert point["accept_rate_pct"] <= best
