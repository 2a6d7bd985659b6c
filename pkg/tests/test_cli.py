import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from d2qmm.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fixture_dir(tmp_path, runner):
    out = tmp_path / "fx"
    result = runner.invoke(
        main, ["demo-fixture", "--out", str(out), "--docs", "60", "--topics", "12"]
    )
    assert result.exit_code == 0, result.output
    return out


def run_ok(runner, args):
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return result


class TestDemoFixture:
    def test_writes_all_files(self, fixture_dir):
        for name in ("corpus.tsv", "queries.jsonl", "topics.tsv", "qrels.txt"):
            assert (fixture_dir / name).exists()
            assert (fixture_dir / f"{name}.meta.json").exists()

    def test_deterministic_bytes(self, tmp_path, runner):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_ok(runner, ["demo-fixture", "--out", str(out), "--docs", "40", "--topics", "8"])
        for name in ("corpus.tsv", "queries.jsonl", "topics.tsv", "qrels.txt"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestPipelineStages:
    def test_full_chain(self, fixture_dir, runner, tmp_path):
        d = fixture_dir
        run_ok(runner, [
            "score", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--n", "8", "--out", str(d / "scores.jsonl"),
        ])
        run_ok(runner, [
            "filter", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--scores", str(d / "scores.jsonl"), "--p", "0.5", "--n", "8",
            "--out", str(d / "expanded.jsonl"),
        ])
        run_ok(runner, ["index", "--expanded", str(d / "expanded.jsonl"), "--out", str(d / "idx")])
        run_ok(runner, [
            "search", "--index", str(d / "idx"), "--topics", str(d / "topics.tsv"),
            "--k", "100", "--tag", "t", "--out", str(d / "run.txt"),
        ])
        result = run_ok(runner, [
            "evaluate", "--run", str(d / "run.txt"), "--qrels", str(d / "qrels.txt"),
        ])
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert 0.0 <= payload["mean_rr_at_10"] <= 1.0
        assert payload["judged_query_count"] == 12

    def test_filter_validates_exclusive_p_t(self, fixture_dir, runner):
        d = fixture_dir
        run_ok(runner, [
            "score", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--n", "8", "--out", str(d / "scores.jsonl"),
        ])
        result = runner.invoke(main, [
            "filter", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--scores", str(d / "scores.jsonl"), "--p", "0.5", "--t", "1.0",
            "--out", str(d / "x.jsonl"),
        ])
        assert result.exit_code == 1
        record = json.loads(result.output.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"

    def test_missing_file_is_machine_readable_error(self, runner, tmp_path):
        result = runner.invoke(main, [
            "evaluate", "--run", str(tmp_path / "nope.txt"), "--qrels", str(tmp_path / "q.txt"),
        ])
        assert result.exit_code == 2  # click's usage error for missing path

    def test_search_rejects_tokenizer_mismatch(self, fixture_dir, runner):
        d = fixture_dir
        run_ok(runner, ["index", "--corpus", str(d / "corpus.tsv"), "--out", str(d / "idx")])
        result = runner.invoke(main, [
            "search", "--index", str(d / "idx"), "--topics", str(d / "topics.tsv"),
            "--no-stopwords", "--out", str(d / "run.txt"),
        ])
        assert result.exit_code == 1
        record = json.loads(result.output.strip().splitlines()[-1])
        assert "tokenizer mismatch" in record["message"]

    def test_evaluate_refuses_cross_config_compare(self, fixture_dir, runner):
        d = fixture_dir
        run_ok(runner, ["index", "--corpus", str(d / "corpus.tsv"), "--out", str(d / "idx_a")])
        run_ok(runner, [
            "index", "--corpus", str(d / "corpus.tsv"), "--no-stopwords", "--out", str(d / "idx_b"),
        ])
        for idx, run in (("idx_a", "run_a.txt"), ("idx_b", "run_b.txt")):
            run_ok(runner, [
                "search", "--index", str(d / idx), "--topics", str(d / "topics.tsv"),
                "--out", str(d / run),
            ])
        result = runner.invoke(main, [
            "evaluate", "--run", str(d / "run_a.txt"), "--qrels", str(d / "qrels.txt"),
            "--compare", str(d / "run_b.txt"),
        ])
        assert result.exit_code == 1
        assert "different tokenizer" in result.output
        forced = runner.invoke(main, [
            "evaluate", "--run", str(d / "run_a.txt"), "--qrels", str(d / "qrels.txt"),
            "--compare", str(d / "run_b.txt"), "--force",
        ])
        assert forced.exit_code == 0, forced.output

    def test_mock_expand_writes_timings(self, fixture_dir, runner):
        d = fixture_dir
        run_ok(runner, [
            "expand", "--corpus", str(d / "corpus.tsv"), "--mock", "--n", "4",
            "--out", str(d / "gen.jsonl"),
        ])
        timings = json.loads((d / "gen.jsonl.timings.json").read_text())
        assert timings["generation_seconds"] > 0
        assert (d / "gen.jsonl.meta.json").exists()


class TestConfigFile:
    def test_config_file_with_flag_override(self, fixture_dir, runner, tmp_path):
        d = fixture_dir
        cfg = tmp_path / "pipeline.cfg"
        cfg.write_text("n = 4\nk = 7\n")
        run_ok(runner, [
            "score", "--config", str(cfg), "--corpus", str(d / "corpus.tsv"),
            "--queries", str(d / "queries.jsonl"), "--out", str(d / "s4.jsonl"),
        ])
        # n=4 from config: 60 docs * 4 queries
        assert sum(1 for _ in open(d / "s4.jsonl")) == 240
        run_ok(runner, [
            "score", "--config", str(cfg), "--corpus", str(d / "corpus.tsv"),
            "--queries", str(d / "queries.jsonl"), "--n", "8", "--out", str(d / "s8.jsonl"),
        ])
        assert sum(1 for _ in open(d / "s8.jsonl")) == 480  # flag wins

    def test_env_var_default(self, fixture_dir, runner, tmp_path, monkeypatch):
        d = fixture_dir
        cfg = tmp_path / "env.cfg"
        cfg.write_text("n = 2\n")
        monkeypatch.setenv("D2QMM_CONFIG", str(cfg))
        run_ok(runner, [
            "score", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--out", str(d / "s2.jsonl"),
        ])
        assert sum(1 for _ in open(d / "s2.jsonl")) == 120

    def test_meta_carries_config_hash(self, fixture_dir, runner):
        d = fixture_dir
        meta = json.loads((d / "corpus.tsv.meta.json").read_text())
        assert len(meta["config_hash"]) == 16
        assert meta["command"] == "demo-fixture"


class TestIdentityComposition:
    def test_p1_filter_equals_direct_expansion(self, fixture_dir, runner):
        # filter with p=1 then index == independently built full expansion
        d = fixture_dir
        run_ok(runner, [
            "score", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--n", "8", "--out", str(d / "scores.jsonl"),
        ])
        run_ok(runner, [
            "filter", "--corpus", str(d / "corpus.tsv"), "--queries", str(d / "queries.jsonl"),
            "--scores", str(d / "scores.jsonl"), "--p", "1", "--n", "8",
            "--out", str(d / "exp_p1.jsonl"),
        ])
        # independent construction: every stored query is retained
        queries = {
            json.loads(line)["docno"]: json.loads(line)["queries"]
            for line in open(d / "queries.jsonl")
        }
        with open(d / "exp_direct.jsonl", "w") as fh:
            for line in open(d / "corpus.tsv"):
                doc_id, text = line.rstrip("\n").split("\t", 1)
                fh.write(json.dumps(
                    {"docno": doc_id, "text": text, "queries_retained": queries[doc_id][:8]}
                ) + "\n")
        for name in ("exp_p1", "exp_direct"):
            run_ok(runner, ["index", "--expanded", str(d / f"{name}.jsonl"),
                            "--out", str(d / f"idx_{name}")])
            run_ok(runner, [
                "search", "--index", str(d / f"idx_{name}"), "--topics", str(d / "topics.tsv"),
                "--tag", "same", "--out", str(d / f"run_{name}.txt"),
            ])
        assert (d / "run_exp_p1.txt").read_bytes() == (d / "run_exp_direct.txt").read_bytes()
