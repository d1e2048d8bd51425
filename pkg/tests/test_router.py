import numpy as np
import pytest

from draftroute.corpus import LabeledQuery
from draftroute.dataset import ArmSpec
from draftroute.lm import Vocabulary, fit_ngram
from draftroute.policy import init_params, zeros_like
from draftroute.router import choose, decode_with_arm, route_and_decode, select_arm
from draftroute.specdec import DecodeConfig, accept_rate, speculative_decode


@pytest.fixture(scope="module")
def setup():
    v = Vocabulary(tuple("abcdef"))
    rng = np.random.default_rng(0)
    corpus = [v.encode("".join(rng.choice(list("abc"), 20))) for _ in range(30)]
    target = fit_ngram(corpus, 3, 0.1, 2.0, "target", v)
    d1 = fit_ngram(corpus, 2, 0.1, 0.5, "d1", v)
    d2 = fit_ngram(corpus[:3], 1, 0.1, 0.5, "d2", v)
    return v, target, d1, d2


def test_choose_greedy_tie_break():
    assert choose(np.array([0.5, 0.5]), "greedy") == 0
    assert choose(np.array([0.2, 0.4, 0.4]), "greedy") == 1
    with pytest.raises(ValueError):
        choose(np.array([1.0]), "epsilon")


def test_uniform_policy_greedy_picks_first():
    params = zeros_like(init_params(16, 4, 3, np.random.default_rng(0)))
    idx, probs = select_arm(params, "abc", "greedy")
    assert idx == 0
    np.testing.assert_allclose(probs, 1 / 3)


def test_dynamic_frequency():
    rng = np.random.default_rng(1)
    p = np.array([0.99, 0.01])
    n = 100_000
    hits = sum(choose(p, "dynamic", rng) == 0 for _ in range(n))
    sigma = np.sqrt(0.99 * 0.01 / n)
    assert abs(hits / n - 0.99) <= 3 * sigma


def test_greedy_selection_deterministic():
    params = init_params(32, 8, 3, np.random.default_rng(2))
    assert select_arm(params, "abcabc", "greedy")[0] == select_arm(params, "abcabc", "greedy")[0]


def test_single_arm_matches_direct_decode(setup):
    v, target, d1, _ = setup
    params = init_params(32, 8, 1, np.random.default_rng(0))
    cfg = DecodeConfig(5, 1.0, 24)
    q = LabeledQuery("q1", "abca", "x")
    res = route_and_decode(params, [ArmSpec.drafter(d1)], target, q, cfg, "dynamic",
                           np.random.default_rng(7), select_rng=np.random.default_rng(99))
    out, stats = speculative_decode(target, d1, v.encode("abca"), cfg, np.random.default_rng(7))
    assert res.arm_id == "d1" and res.output == out
    assert (res.stats.target_calls, res.stats.draft_tokens_accepted) == \
        (stats.target_calls, stats.draft_tokens_accepted)
    assert res.policy_probs.tolist() == [1.0]


def test_accounting_identity_and_ar_arm(setup):
    v, target, d1, d2 = setup
    arms = [ArmSpec.drafter(d1), ArmSpec.drafter(d2), ArmSpec.autoregressive(target)]
    params = zeros_like(init_params(32, 8, 3, np.random.default_rng(0)))
    params.b3[2] = 5.0  # always route to the autoregressive arm
    res = route_and_decode(params, arms, target, "abc", DecodeConfig(), "greedy",
                           np.random.default_rng(0))
    s = res.stats
    assert res.arm_id == "autoregressive"
    assert s.draft_tokens_generated == 0
    with pytest.raises(ValueError):
        accept_rate(s)
    assert s.wall_ns_total == s.wall_ns_decode + s.wall_ns_policy
    assert s.wall_ns_policy > 0 and s.wall_ns_featurize >= 0


def test_temperature_zero_uses_greedy_assisted(setup):
    v, target, d1, _ = setup
    from draftroute.lm import generate

    out, _ = decode_with_arm(ArmSpec.drafter(d1), target, [0, 1], DecodeConfig(4, 0.0, 20), None)
    assert out == generate(target, [0, 1], 20, 0.0)


def test_arm_count_mismatch(setup):
    v, target, d1, _ = setup
    params = init_params(32, 8, 2, np.random.default_rng(0))
    with pytest.raises(ValueError, match="outputs"):
        route_and_decode(params, [ArmSpec.drafter(d1)], target, "ab", DecodeConfig(), "greedy",
                         np.random.default_rng(0))
