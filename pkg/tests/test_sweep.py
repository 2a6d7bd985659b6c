import csv
import math
import random

import pytest

from conftest import make_corpus
from d2qmm.analysis import TokenizerConfig
from d2qmm.corpus_io import GeneratedQuerySet, Qrels, ScoredPair
from d2qmm.expansion import FileQueryGenerator
from d2qmm.filtering import CorpusStatistics, ExternalScoreLookup, LexicalScorer
from d2qmm.scoring import Bm25Params
from d2qmm.sweep import (
    BudgetEntry,
    budget_report,
    entries_from_cells,
    run_sweep,
    write_plot_data,
    write_sweep_csv,
)

TOK = TokenizerConfig(remove_stopwords=False, stem=False)
PARAMS = Bm25Params()


def small_world():
    rng = random.Random(21)
    rows, queries, topics, qrels = [], {}, [], Qrels()
    for i in range(25):
        terms = [f"w{i}a", f"w{i}b", "shared"]
        rows.append((f"d{i:02d}", " ".join(terms)))
        queries[f"d{i:02d}"] = GeneratedQuerySet(
            f"d{i:02d}",
            tuple(f"w{i}a w{i}b" if j % 2 == 0 else f"zz{rng.randint(0, 9)} yy{j}" for j in range(4)),
        )
        topics.append((f"q{i:02d}", f"w{i}a shared"))
        qrels.add(f"q{i:02d}", f"d{i:02d}", 1)
    corpus = make_corpus(rows)
    stats = CorpusStatistics.from_corpus(corpus, TOK)
    scorer = LexicalScorer(stats, PARAMS, TOK)
    return corpus, FileQueryGenerator(queries), scorer, topics, qrels


class TestRunSweep:
    def test_grid_shape_and_identities(self):
        corpus, generator, scorer, topics, qrels = small_world()
        cells = run_sweep(
            corpus, generator, scorer, [2, 4], [0.0, 0.5, 1.0], topics, qrels, TOK, PARAMS, k=10
        )
        assert len(cells) == 6
        assert all(c.error is None for c in cells)
        # p=0 column equals the no-expansion baseline for every n
        baseline_runs = [c.run for c in cells if c.p == 0.0]
        assert baseline_runs[0] == baseline_runs[1]
        baseline_tokens = {c.indexed_tokens for c in cells if c.p == 0.0}
        assert len(baseline_tokens) == 1
        # p=1 row equals unfiltered expansion at that n: more tokens at larger n
        unfiltered = {c.n: c.indexed_tokens for c in cells if c.p == 1.0}
        assert unfiltered[2] < unfiltered[4]

    def test_tokens_monotone_in_p(self):
        corpus, generator, scorer, topics, qrels = small_world()
        grid = [round(p * 0.1, 1) for p in range(11)]
        cells = run_sweep(
            corpus, generator, scorer, [4], grid, topics, qrels, TOK, PARAMS, k=10
        )
        tokens = [c.indexed_tokens for c in cells]
        bytes_ = [c.index_bytes for c in cells]
        assert tokens == sorted(tokens)
        assert bytes_ == sorted(bytes_)

    def test_cell_error_isolation(self):
        corpus, generator, _, topics, qrels = small_world()
        missing = ExternalScoreLookup([ScoredPair("d00", 0, 1.0)])  # nearly all pairs absent
        cells = run_sweep(
            corpus, generator, missing, [2], [0.5, 1.0], topics, qrels, TOK, PARAMS, k=10
        )
        failed = [c for c in cells if c.error]
        assert failed and "MissingScoreError" in failed[0].error
        # p=1 needs no scores and must still succeed
        ok = [c for c in cells if c.p == 1.0]
        assert ok[0].error is None


class TestSweepOutputs:
    def test_csv_schema_and_determinism(self, tmp_path):
        corpus, generator, scorer, topics, qrels = small_world()
        cells = run_sweep(
            corpus, generator, scorer, [2], [0.0, 1.0], topics, qrels, TOK, PARAMS, k=10
        )
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_sweep_csv(cells, a)
        write_sweep_csv(cells, b)
        assert a.read_bytes() == b.read_bytes()
        with open(a) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "n", "p", "t", "indexed_tokens", "index_bytes", "rr_at_10", "ndcg_at_10", "mrt_ms"
        ]
        assert rows[1][2] == "inf"  # p=0 sentinel
        assert rows[2][2] == "-inf"
        assert rows[1][7] == ""  # no latency column content unless measured

    def test_plot_data(self, tmp_path):
        corpus, generator, scorer, topics, qrels = small_world()
        cells = run_sweep(
            corpus, generator, scorer, [2], [0.0, 1.0], topics, qrels, TOK, PARAMS, k=10
        )
        out = tmp_path / "plot.tsv"
        write_plot_data(cells, out)
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        tokens, rr, label = lines[0].split("\t")
        assert int(tokens) > 0 and 0.0 <= float(rr) <= 1.0 and label == "n=2,p=0"


def entry(label, n, filt, gen, fil, rr):
    return BudgetEntry(
        label=label, n=n, filter_label=filt, gen_seconds=gen, filter_seconds=fil, rr_at_10=rr
    )


class TestBudgetReport:
    def test_paper_style_pairing(self):
        # hours-scale numbers: filtered 20+15 pairs with the unfiltered total 34
        entries = [
            entry("n=5+f", 5, "f", 20.0, 15.0, 0.273),
            entry("n=11", 11, None, 34.0, 0.0, 0.261),
            entry("n=31", 31, None, 99.0, 0.0, 0.273),
        ]
        report = budget_report(entries)
        row = report.rows[0]
        assert row.matched.label == "n=11"
        assert row.entry.total_seconds == pytest.approx(35.0)
        assert row.delta_rr == pytest.approx(0.273 - 0.261)

    def test_unfiltered_pairs_with_itself(self):
        entries = [entry("n=8", 8, None, 10.0, 0.0, 0.5)]
        report = budget_report(entries)
        assert report.rows[0].matched is report.rows[0].entry
        assert report.rows[0].delta_rr == 0.0

    def test_missing_timing_not_comparable(self):
        entries = [
            entry("nofilt", 4, None, 10.0, 0.0, 0.4),
            entry("broken", 4, "f", None, 5.0, 0.45),
        ]
        report = budget_report(entries)
        assert not report.rows[1].comparable
        assert report.rows[1].matched is None

    def test_matching_is_monotone_in_budget(self):
        pool = [entry(f"u{i}", i, None, float(total), 0.0, 0.3) for i, total in enumerate([10, 20, 40, 80])]
        rng = random.Random(3)
        filtered = [
            entry(f"f{i}", i, "f", t * 0.6, t * 0.4, 0.35)
            for i, t in enumerate(sorted(rng.uniform(5, 100) for _ in range(30)))
        ]
        report = budget_report(pool + filtered)
        matched_totals = [
            row.matched.total_seconds for row in report.rows if row.entry.filter_label
        ]
        assert matched_totals == sorted(matched_totals)

    def test_total_is_gen_plus_filter(self):
        e = entry("x", 4, "f", 12.5, 2.5, None)
        assert e.total_seconds == pytest.approx(15.0)

    def test_entries_from_cells_marks_p1_unfiltered(self):
        corpus, generator, scorer, topics, qrels = small_world()
        cells = run_sweep(
            corpus, generator, scorer, [2], [0.5, 1.0], topics, qrels,
            TOK, PARAMS, k=10, gen_seconds=4.0,
        )
        entries = entries_from_cells(cells)
        by_label = {e.label: e for e in entries}
        assert by_label["n=2,p=1"].unfiltered
        assert not by_label["n=2,p=0.5"].unfiltered
        assert by_label["n=2,p=1"].filter_seconds == 0.0
        assert by_label["n=2,p=0.5"].filter_seconds > 0.0
