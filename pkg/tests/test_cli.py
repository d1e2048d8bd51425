import json

import pytest

from draftroute.cli import main

SMALL = """\
recipe = two-domain
n_train_queries = 60
n_test_queries = 20
n_corpus_sequences = 100
D = 32
H = 16
seeds = 0
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return str(p)


def run(*args):
    return main([str(a) for a in args])


def stages(cfg, out):
    for cmd in ("synth", "fit", "collect", "train"):
        assert run(cmd, "--config", cfg, "--out", out) == 0


def test_stage_pipeline(cfg, tmp_path, capsys):
    out = tmp_path / "w"
    stages(cfg, out)
    names = {p.name for p in out.iterdir()}
    assert {"corpus-periodic.txt", "corpus-markov.txt", "queries-train.tsv", "queries-test.tsv",
            "models", "rewards.tsv", "policy.txt", "config.txt"} <= names
    assert {p.name for p in (out / "models").iterdir()} == \
        {"target.ngram", "draft-periodic.ngram", "draft-markov.ngram"}
    # 2 arms x 60 queries
    rewards = (out / "rewards.tsv").read_text().splitlines()
    assert rewards[0] == "rewardset v1 k=2" and len(rewards) == 1 + 120
    assert run("decode", "--config", cfg, "--out", out, "--mode", "greedy") == 0
    lines = (out / "decode.tsv").read_text().splitlines()
    assert len(lines) == 1 + 20


def test_stages_byte_reproducible(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        stages(cfg, out)
        assert run("decode", "--config", cfg, "--out", out, "--mode", "greedy") == 0
    for name in ("rewards.tsv", "policy.txt", "decode.tsv", "queries-test.tsv", "models/target.ngram"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_decode_single_query_twice(cfg, tmp_path, capsys):
    out = tmp_path / "w"
    stages(cfg, out)
    capsys.readouterr()
    texts = []
    for _ in range(2):
        assert run("decode", "--config", cfg, "--out", out, "--mode", "greedy", "--query", "abcabcab") == 0
        texts.append(capsys.readouterr().out)
    assert texts[0] == texts[1] and texts[0].startswith("cli-0\t")


def test_bench_writes_reports(cfg, tmp_path, capsys):
    out = tmp_path / "r"
    assert run("bench", "--config", cfg, "--out", out, "--seed", "0,1", "--gamma", "5") == 0
    table = capsys.readouterr().out
    assert "greedy-policy" in table and "calls/tok" in table
    rows = [json.loads(x) for x in (out / "report.jsonl").read_text().splitlines()]
    assert rows[0]["schema"] == "benchreport/v1" and rows[0]["seeds"] == [0, 1]
    assert all(r["gamma"] == 5 for r in rows[1:])


def test_sweeps_and_curve(cfg, tmp_path):
    out = tmp_path / "s"
    assert run("sweeps", "--config", cfg, "--out", out, "--gammas", "3,5", "--temperatures", "0,1") == 0
    rows = [json.loads(x) for x in (out / "sweeps.jsonl").read_text().splitlines()[1:]]
    assert {(r["gamma"], r["temperature"]) for r in rows} == {(3, 0.0), (3, 1.0), (5, 0.0), (5, 1.0)}
    assert run("curve", "--config", cfg, "--out", out, "--sizes", "10,120") == 0
    pts = [json.loads(x) for x in (out / "curve.jsonl").read_text().splitlines()]
    assert [p["records_used"] for p in pts] == [10, 120]


def test_sweep_alpha_cli(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("recipe = size-tradeoff\nn_train_queries = 40\nn_test_queries = 10\nD = 16\nH = 8\n")
    out = tmp_path / "a"
    assert run("sweep-alpha", "--config", cfg, "--out", out, "--alphas", "0,1") == 0
    res = [json.loads(x) for x in (out / "sweep-alpha.jsonl").read_text().splitlines()]
    assert [r["alpha"] for r in res] == [0.0, 1.0]


def test_exit_codes(cfg, tmp_path, capsys):
    assert run("bench", "--config", tmp_path / "missing.cfg", "--out", tmp_path) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("gamma = -3\n")
    assert run("synth", "--config", bad, "--out", tmp_path) == 2
    assert run("synth", "--config", cfg, "--alpha", "2", "--out", tmp_path) == 2
    # fit before synth: corpus files are missing
    assert run("fit", "--config", cfg, "--out", tmp_path / "empty") == 3
    err = capsys.readouterr().err
    assert "config error" in err and "FileNotFoundError" in err
    with pytest.raises(SystemExit) as exc:
        run("decode", "--mode", "sideways")
    assert exc.value.code == 2
