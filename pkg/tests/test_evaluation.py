import math
import random

import pytest

from conftest import as_expanded, make_corpus
from d2qmm.analysis import TokenizerConfig
from d2qmm.corpus_io import Qrels
from d2qmm.errors import ConfigError, D2qError
from d2qmm.evaluation import (
    evaluate_run,
    measure_latency,
    ndcg_at_10,
    paired_t_test,
    rr_at_10,
)
from d2qmm.index import build_index
from d2qmm.scoring import Bm25Params


# --- independent oracle implementations (kept deliberately naive) ----------

def oracle_rr(ranked, grades, threshold=1):
    rank = 0
    for doc_id in ranked:
        rank += 1
        if rank > 10:
            break
        if grades.get(doc_id, 0) >= threshold:
            return 1.0 / rank
    return 0.0


def oracle_ndcg(ranked, grades):
    def dcg(gains):
        total = 0.0
        for position, gain in enumerate(gains):
            total += gain / math.log2(position + 2)
        return total

    actual = dcg([grades.get(doc_id, 0) for doc_id in ranked[:10]])
    best_possible = dcg(sorted(grades.values(), reverse=True)[:10])
    if best_possible == 0:
        return 0.0
    return actual / best_possible


def make_qrels(rows):
    qrels = Qrels()
    for query_id, doc_id, grade in rows:
        qrels.add(query_id, doc_id, grade)
    return qrels


class TestRrAt10:
    def test_relevant_at_rank_3(self):
        assert rr_at_10(["a", "b", "rel"], {"rel": 1}) == pytest.approx(1 / 3)

    def test_nothing_relevant_in_top_10(self):
        ranked = [f"d{i}" for i in range(12)] + ["rel"]
        assert rr_at_10(ranked, {"rel": 3}) == 0.0

    def test_first_match_only(self):
        ranked = ["x", "rel1", "y", "z", "rel2"]
        assert rr_at_10(ranked, {"rel1": 1, "rel2": 1}) == pytest.approx(1 / 2)

    def test_threshold_respected(self):
        ranked = ["weak", "strong"]
        grades = {"weak": 1, "strong": 2}
        assert rr_at_10(ranked, grades, rel_threshold=2) == pytest.approx(1 / 2)

    def test_duplicate_ranking_rejected(self):
        with pytest.raises(ConfigError):
            rr_at_10(["a", "a"], {"a": 1})


class TestNdcgAt10:
    def test_already_ideal(self):
        assert ndcg_at_10(["top", "bottom"], {"top": 3, "bottom": 0}) == pytest.approx(1.0)

    def test_single_relevant_at_rank_2(self):
        # grade-1 doc at rank 2 vs ideal rank 1: (1/log2 3)/(1/log2 2)
        expected = (1 / math.log2(3)) / (1 / math.log2(2))
        got = ndcg_at_10(["miss", "rel"], {"rel": 1})
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.6309, abs=1e-4)

    def test_all_grades_zero(self):
        assert ndcg_at_10(["a", "b"], {"a": 0, "b": 0}) == 0.0

    def test_permutation_below_rank_10_irrelevant(self):
        rng = random.Random(3)
        grades = {f"d{i}": rng.randint(0, 3) for i in range(30)}
        ranked = [f"d{i}" for i in range(30)]
        shuffled_tail = ranked[:10] + random.Random(9).sample(ranked[10:], 20)
        assert ndcg_at_10(ranked, grades) == ndcg_at_10(shuffled_tail, grades)
        assert rr_at_10(ranked, grades) == rr_at_10(shuffled_tail, grades)

    def test_bounded(self):
        rng = random.Random(4)
        for _ in range(100):
            grades = {f"d{i}": rng.randint(0, 3) for i in range(15)}
            ranked = rng.sample(list(grades), rng.randint(1, 15))
            value = ndcg_at_10(ranked, grades)
            assert 0.0 <= value <= 1.0


class TestMetricOracle:
    def test_agreement_on_randomized_fixtures(self):
        rng = random.Random(2024)
        for _ in range(100):
            universe = [f"d{i}" for i in range(rng.randint(1, 40))]
            grades = {d: rng.randint(0, 3) for d in rng.sample(universe, rng.randint(1, len(universe)))}
            ranked = rng.sample(universe, rng.randint(1, len(universe)))
            assert rr_at_10(ranked, grades) == pytest.approx(
                oracle_rr(ranked, grades), abs=1e-6
            )
            assert ndcg_at_10(ranked, grades) == pytest.approx(
                oracle_ndcg(ranked, grades), abs=1e-6
            )


class TestEvaluateRun:
    def test_mean_over_queries(self):
        run = {"q1": ["rel", "x"], "q2": ["x", "y"]}
        qrels = make_qrels([("q1", "rel", 1), ("q2", "zzz", 1)])
        report = evaluate_run(run, qrels)
        assert report.mean_rr == pytest.approx(0.5)  # (1 + 0) / 2
        assert report.judged_query_count == 2

    def test_unjudged_queries_excluded_and_counted(self):
        run = {"q1": ["rel"], "q_unjudged": ["rel"]}
        qrels = make_qrels([("q1", "rel", 1)])
        report = evaluate_run(run, qrels)
        assert report.mean_rr == pytest.approx(1.0)
        assert report.unjudged_query_ids == ["q_unjudged"]
        assert report.judged_query_count == 1

    def test_empty_intersection_is_error(self):
        run = {"qX": ["d1"]}
        qrels = make_qrels([("q1", "d1", 1)])
        with pytest.raises(D2qError):
            evaluate_run(run, qrels)

    def test_deterministic(self):
        rng = random.Random(11)
        run = {f"q{i}": rng.sample([f"d{j}" for j in range(20)], 10) for i in range(8)}
        qrels = make_qrels([(f"q{i}", f"d{i}", 1) for i in range(8)])
        a = evaluate_run(run, qrels)
        b = evaluate_run(dict(reversed(list(run.items()))), qrels)
        assert a.per_query_rr == b.per_query_rr
        assert a.mean_ndcg == b.mean_ndcg


class TestMeasureLatency:
    def make_index(self):
        rows = [(f"d{i}", f"alpha beta w{i}") for i in range(30)]
        return build_index(
            as_expanded(make_corpus(rows)),
            TokenizerConfig(remove_stopwords=False),
            Bm25Params(),
        )

    def test_protocol_counts(self):
        index = self.make_index()
        calls = []

        def instrumented(index_, terms, k):
            calls.append(tuple(terms))
            return []

        topics = [("q1", "alpha"), ("q2", "beta")]
        report = measure_latency(
            index, topics, k=5, warmup=1, repetitions=3, search_fn=instrumented
        )
        assert len(calls) == 2 * (1 + 3)
        assert report.query_count == 2
        assert report.repetitions == 3

    def test_mean_is_over_per_topic_means(self):
        index = self.make_index()
        topics = [("q1", "alpha"), ("q2", "beta"), ("q3", "alpha beta")]
        report = measure_latency(index, topics, k=10, warmup=1, repetitions=2)
        assert report.mean_ms == pytest.approx(
            sum(report.per_query_ms.values()) / 3
        )
        assert all(v > 0 for v in report.per_query_ms.values())

    def test_empty_topics_rejected(self):
        with pytest.raises(ConfigError):
            measure_latency(self.make_index(), [], k=10)

    def test_repetitions_validated(self):
        with pytest.raises(ConfigError):
            measure_latency(self.make_index(), [("q", "alpha")], k=10, repetitions=0)


class TestPairedTTest:
    def test_known_symmetric_case(self):
        a = [0.2, 0.4, 0.6, 0.8]
        result = paired_t_test(a, a)
        assert not result.significant

    def test_clearly_different_samples(self):
        rng = random.Random(5)
        a = [0.8 + rng.uniform(-0.05, 0.05) for _ in range(40)]
        b = [0.2 + rng.uniform(-0.05, 0.05) for _ in range(40)]
        result = paired_t_test(a, b)
        assert result.significant
        assert result.p_value < 0.05

    def test_matches_scipy_directly(self):
        from scipy import stats

        rng = random.Random(6)
        a = [rng.random() for _ in range(25)]
        b = [rng.random() for _ in range(25)]
        expected = stats.ttest_rel(a, b)
        result = paired_t_test(a, b)
        assert result.statistic == pytest.approx(float(expected.statistic))
        assert result.p_value == pytest.approx(float(expected.pvalue))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            paired_t_test([1.0], [1.0, 2.0])
