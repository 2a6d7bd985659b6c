"""Effectiveness and efficiency measurement: RR@10, nDCG@10, mean response
time, and a paired t-test over per-query values."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from scipy import stats as scipy_stats

from d2qmm.analysis import tokenize
from d2qmm.corpus_io import Qrels
from d2qmm.errors import ConfigError, D2qError
from d2qmm.index import InvertedIndex
from d2qmm.search import SearchResult, search_bmw

CUTOFF = 10


def _check_dedup(ranked_doc_ids: Sequence[str]) -> None:
    if len(set(ranked_doc_ids)) != len(ranked_doc_ids):
        raise ConfigError("ranking contains duplicate doc_ids")


def rr_at_10(
    ranked_doc_ids: Sequence[str],
    grades: Mapping[str, int],
    rel_threshold: int = 1,
) -> float:
    """1/rank of the first document graded >= rel_threshold within the top
    10, else 0."""
    if rel_threshold < 1:
        raise ConfigError(f"rel_threshold must be >= 1, got {rel_threshold}")
    _check_dedup(ranked_doc_ids)
    for rank, doc_id in enumerate(ranked_doc_ids[:CUTOFF], start=1):
        if grades.get(doc_id, 0) >= rel_threshold:
            return 1.0 / rank
    return 0.0


def ndcg_at_10(ranked_doc_ids: Sequence[str], grades: Mapping[str, int]) -> float:
    """Linear-gain nDCG at cutoff 10: DCG uses grade/log2(rank+1), the
    ideal ordering is the query's judged grades sorted descending, and an
    all-zero ideal yields 0."""
    _check_dedup(ranked_doc_ids)
    dcg = 0.0
    for rank, doc_id in enumerate(ranked_doc_ids[:CUTOFF], start=1):
        grade = grades.get(doc_id, 0)
        if grade:
            dcg += grade / math.log2(rank + 1)
    ideal = sorted(grades.values(), reverse=True)[:CUTOFF]
    idcg = sum(g / math.log2(rank + 1) for rank, g in enumerate(ideal, start=1) if g)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


@dataclass
class EvalReport:
    per_query_rr: dict[str, float]
    per_query_ndcg: dict[str, float]
    mean_rr: float
    mean_ndcg: float
    judged_query_count: int
    unjudged_query_ids: list[str]

    def to_dict(self) -> dict:
        return {
            "mean_rr_at_10": self.mean_rr,
            "mean_ndcg_at_10": self.mean_ndcg,
            "judged_query_count": self.judged_query_count,
            "unjudged_query_ids": self.unjudged_query_ids,
            "per_query_rr_at_10": self.per_query_rr,
            "per_query_ndcg_at_10": self.per_query_ndcg,
        }


def evaluate_run(
    run: Mapping[str, Sequence[str]],
    qrels: Qrels,
    rel_threshold: int = 1,
) -> EvalReport:
    """Per-query and mean RR@10 / nDCG@10 over the judged queries.

    Queries absent from the qrels are excluded from the means and reported
    separately; an empty run/qrels intersection is an error.
    """
    per_rr: dict[str, float] = {}
    per_ndcg: dict[str, float] = {}
    unjudged: list[str] = []
    for query_id in sorted(run):
        if query_id not in qrels:
            unjudged.append(query_id)
            continue
        grades = qrels.for_query(query_id)
        ranked = list(run[query_id])
        per_rr[query_id] = rr_at_10(ranked, grades, rel_threshold)
        per_ndcg[query_id] = ndcg_at_10(ranked, grades)
    if not per_rr:
        raise D2qError("run and qrels share no query ids")
    n = len(per_rr)
    return EvalReport(
        per_query_rr=per_rr,
        per_query_ndcg=per_ndcg,
        mean_rr=sum(per_rr.values()) / n,
        mean_ndcg=sum(per_ndcg.values()) / n,
        judged_query_count=n,
        unjudged_query_ids=unjudged,
    )


@dataclass
class LatencyReport:
    per_query_ms: dict[str, float]
    mean_ms: float
    query_count: int
    warmup: int
    repetitions: int

    def to_dict(self) -> dict:
        return {
            "mean_response_time_ms": round(self.mean_ms, 1),
            "query_count": self.query_count,
            "warmup": self.warmup,
            "repetitions": self.repetitions,
            "per_query_ms": self.per_query_ms,
        }


def measure_latency(
    index: InvertedIndex,
    topics: Sequence[tuple[str, str]],
    k: int,
    warmup: int = 1,
    repetitions: int = 3,
    search_fn: Callable[[InvertedIndex, Sequence[str], int], SearchResult] = search_bmw,
) -> LatencyReport:
    """Mean response time over topics, in milliseconds.

    Queries run serially on the calling thread against the monotonic
    clock; each topic gets `warmup` discarded passes and `repetitions`
    timed passes, and the report averages per-topic means.
    """
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    if not topics:
        raise ConfigError("cannot measure latency over an empty topic set")
    per_query: dict[str, float] = {}
    for query_id, text in topics:
        terms = tokenize(text, index.tokenizer)
        for _ in range(warmup):
            search_fn(index, terms, k)
        elapsed = 0.0
        for _ in range(repetitions):
            start = time.perf_counter()
            search_fn(index, terms, k)
            elapsed += time.perf_counter() - start
        per_query[query_id] = elapsed / repetitions * 1000.0
    mean_ms = sum(per_query.values()) / len(per_query)
    return LatencyReport(
        per_query_ms=per_query,
        mean_ms=mean_ms,
        query_count=len(per_query),
        warmup=warmup,
        repetitions=repetitions,
    )


@dataclass
class TTestResult:
    statistic: float
    p_value: float
    significant: bool
    alpha: float


def paired_t_test(
    a: Sequence[float], b: Sequence[float], alpha: float = 0.05
) -> TTestResult:
    """Two-sided paired t-test over per-query measure values."""
    if len(a) != len(b):
        raise ConfigError("paired t-test requires equal-length samples")
    if len(a) < 2:
        raise ConfigError("paired t-test requires at least two pairs")
    statistic, p_value = scipy_stats.ttest_rel(a, b)
    statistic = float(statistic)
    p_value = float(p_value)
    significant = bool(p_value < alpha) if math.isfinite(p_value) else False
    return TTestResult(statistic, p_value, significant, alpha)
