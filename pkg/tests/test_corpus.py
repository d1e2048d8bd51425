import numpy as np
import pytest

from draftroute.corpus import (
    STOCK_SYMBOLS,
    DomainSpec,
    LabeledQuery,
    alphabet_jaccard,
    check_domains,
    load_corpus,
    load_queries,
    make_corpus,
    make_query_set,
    save_corpus,
    save_queries,
    stock_domain,
)
from oracles import bigram_classifier


def test_periodic_fixed_motif():
    spec = DomainSpec("p", "ab", "periodic-repeat", {"motifs": ["ab"]})
    assert make_corpus(spec, 5, 6, seed=0) == ["ababab"] * 5


def test_corpus_determinism_and_seed_dependence():
    spec = stock_domain("markov")
    assert make_corpus(spec, 20, 30, 4) == make_corpus(spec, 20, 30, 4)
    assert make_corpus(spec, 20, 30, 4) != make_corpus(spec, 20, 30, 5)


def test_corpus_errors():
    with pytest.raises(ValueError):
        make_corpus(DomainSpec("x", "ab", "zigzag"), 3, 5, 0)
    with pytest.raises(ValueError):
        make_corpus(stock_domain("periodic"), 0, 5, 0)
    with pytest.raises(ValueError):
        DomainSpec("x", "", "periodic-repeat")
    with pytest.raises(ValueError):
        LabeledQuery("q", "", "x")


def test_markov_bigram_frequencies_match_table():
    spec = stock_domain("markov")
    P = np.asarray(spec.rule_params["transitions"])
    n = len(spec.alphabet)
    idx = {c: i for i, c in enumerate(spec.alphabet)}
    counts = np.zeros((n, n))
    for s in make_corpus(spec, 10_000, 12, seed=1):
        for a, b in zip(s, s[1:]):
            counts[idx[a], idx[b]] += 1
    rows = counts.sum(axis=1, keepdims=True)
    freq = counts / rows
    sigma = np.sqrt(P * (1 - P) / rows)
    assert np.all(np.abs(freq - P) <= 3 * sigma + 1e-12)


def test_arithmetic_rule():
    spec = DomainSpec("d", "0123456789,", "arithmetic-sequence", {"start": (3, 3), "step": (4, 4)})
    assert make_corpus(spec, 2, 12, 0) == ["3,7,11,15,19"[:12]] * 2


def test_stock_domains_are_disjoint_enough():
    specs = [stock_domain(n) for n in ("periodic", "markov", "digits")]
    check_domains(specs, STOCK_SYMBOLS)
    for a in specs:
        for b in specs:
            if a is not b:
                assert alphabet_jaccard(a, b) <= 0.5


def test_check_domains_rejects_overlap():
    a = DomainSpec("a", "abc", "periodic-repeat")
    b = DomainSpec("b", "abcd", "periodic-repeat")
    with pytest.raises(ValueError, match="overlap"):
        check_domains([a, b])
    with pytest.raises(ValueError, match="vocabulary"):
        check_domains([a], "xyz")


def test_query_set_balanced_and_deterministic():
    specs = [stock_domain("periodic"), stock_domain("markov")]
    qs = make_query_set(specs, 10, "train", seed=0)
    assert len(qs) == 20
    assert sorted(q.true_domain for q in qs).count("periodic") == 10
    assert qs == make_query_set(specs, 10, "train", seed=0)
    assert len({q.query_id for q in qs}) == 20
    # shuffled, not grouped by domain
    assert [q.true_domain for q in qs] != sorted(q.true_domain for q in qs)


def test_train_test_disjoint():
    specs = [stock_domain(n) for n in ("periodic", "markov", "digits")]
    train = make_query_set(specs, 1000, "train", seed=2)
    test = make_query_set(specs, 1000, "test", seed=2)
    assert not {q.text for q in train} & {q.text for q in test}


def test_query_set_errors():
    with pytest.raises(ValueError):
        make_query_set([], 3, "train", 0)
    with pytest.raises(ValueError):
        make_query_set([stock_domain("markov")], 3, "dev", 0)


def test_bigram_classifier_separates_domains():
    specs = [stock_domain(n) for n in ("periodic", "markov", "digits")]
    train = make_query_set(specs, 300, "train", seed=0)
    test = make_query_set(specs, 300, "test", seed=0)
    predict = bigram_classifier([(q.text, q.true_domain) for q in train])
    acc = np.mean([predict(q.text) == q.true_domain for q in test])
    assert acc >= 0.95


def test_file_round_trips(tmp_path):
    seqs = make_corpus(stock_domain("digits"), 5, 20, 0)
    save_corpus(seqs, tmp_path / "c.txt")
    assert load_corpus(tmp_path / "c.txt") == seqs
    qs = make_query_set([stock_domain("periodic")], 4, "test", 0)
    save_queries(qs, tmp_path / "q.tsv")
    assert load_queries(tmp_path / "q.tsv") == qs
    line = (tmp_path / "q.tsv").read_text().splitlines()[0]
    assert line == f"{qs[0].query_id}\tperiodic\t{qs[0].text}"


def test_load_queries_reports_line(tmp_path):
    (tmp_path / "q.tsv").write_text("a\tb\tc\nbroken\n")
    with pytest.raises(ValueError, match=":2:"):
        load_queries(tmp_path / "q.tsv")
