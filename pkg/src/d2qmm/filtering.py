"""Relevance scoring of (query, document) pairs, corpus-wide quantile
thresholding, and construction of the filtered expanded corpus.

The retention rule is `score >= t`. With proportion p, t is the score at
descending-order position ceil(p*N) over all scored pairs in the corpus,
so ties at the threshold are all retained. p=0 and p=1 map to +inf/-inf
sentinels (retain nothing / everything).
"""

from __future__ import annotations

import heapq
import math
import os
import pickle
import tempfile
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol, Sequence

from d2qmm.analysis import TokenizerConfig, tokenize
from d2qmm.corpus_io import Corpus, Document, ScoredPair
from d2qmm.errors import ConfigError, MissingScoreError
from d2qmm.expansion import QueryGenerator
from d2qmm.scoring import Bm25Params, bm25_term_score

# Chunks of scores above this size spill to sorted temp files during
# threshold selection; the full-scale multiset does not fit in memory.
DEFAULT_CHUNK_SIZE = 4_000_000


class RelevanceScorer(Protocol):
    def score(self, document: Document, query: str, query_index: int) -> float:
        """Finite relevance score; larger means more relevant."""
        ...


@dataclass
class CorpusStatistics:
    """Document statistics of the unexpanded corpus, for the lexical scorer."""

    doc_count: int
    avg_doc_len: float
    doc_lengths: dict[str, int]
    term_counts: dict[str, Counter]
    doc_frequencies: Counter

    @classmethod
    def from_corpus(cls, corpus: Corpus, tokenizer: TokenizerConfig) -> "CorpusStatistics":
        lengths: dict[str, int] = {}
        counts: dict[str, Counter] = {}
        dfs: Counter = Counter()
        total = 0
        for doc in corpus:
            terms = tokenize(doc.text, tokenizer)
            lengths[doc.doc_id] = len(terms)
            total += len(terms)
            tf = Counter(terms)
            counts[doc.doc_id] = tf
            dfs.update(tf.keys())
        n = len(corpus)
        return cls(
            doc_count=n,
            avg_doc_len=total / n if n else 0.0,
            doc_lengths=lengths,
            term_counts=counts,
            doc_frequencies=dfs,
        )


class LexicalScorer:
    """BM25 of the query against the document, over the unexpanded corpus.

    A cheap, deterministic stand-in for neural relevance models so the
    pipeline can run hermetically; externally produced scores plug in via
    ExternalScoreLookup instead.
    """

    def __init__(
        self,
        stats: CorpusStatistics,
        params: Bm25Params | None = None,
        tokenizer: TokenizerConfig | None = None,
    ):
        self.stats = stats
        self.params = params or Bm25Params()
        self.tokenizer = tokenizer or TokenizerConfig()

    def score(self, document: Document, query: str, query_index: int = 0) -> float:
        tf_map = self.stats.term_counts.get(document.doc_id)
        if tf_map is None:
            raise MissingScoreError(f"document {document.doc_id!r} not in corpus statistics")
        dl = self.stats.doc_lengths[document.doc_id]
        total = 0.0
        for term in tokenize(query, self.tokenizer):
            tf = tf_map.get(term)
            if not tf:
                continue
            total += bm25_term_score(
                tf,
                self.stats.doc_frequencies[term],
                dl,
                self.stats.avg_doc_len,
                self.stats.doc_count,
                self.params,
            )
        return total


class ExternalScoreLookup:
    """Scores produced outside the pipeline, keyed by (doc_id, query_index)."""

    def __init__(self, pairs: Iterable[ScoredPair]):
        self._scores: dict[tuple[str, int], float] = {}
        for pair in pairs:
            key = (pair.doc_id, pair.query_index)
            if key in self._scores:
                raise ConfigError(f"duplicate score for pair {key}")
            self._scores[key] = pair.score

    def score(self, document: Document, query: str, query_index: int) -> float:
        try:
            return self._scores[(document.doc_id, query_index)]
        except KeyError:
            raise MissingScoreError(
                f"no score for pair ({document.doc_id!r}, {query_index})"
            ) from None

    def __len__(self) -> int:
        return len(self._scores)


@dataclass(frozen=True)
class FilterConfig:
    """Exactly one of p (retained proportion) or t (explicit threshold)
    drives filtering; n is the per-document query budget."""

    n: int
    p: float | None = None
    t: float | None = None

    def __post_init__(self):
        if self.n < 0:
            raise ConfigError(f"n must be >= 0, got {self.n}")
        if (self.p is None) == (self.t is None):
            raise ConfigError("exactly one of p or t must be set")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must be in [0,1], got {self.p}")


@dataclass(frozen=True)
class ExpandedDocument:
    doc_id: str
    original_text: str
    retained_queries: tuple[str, ...]

    def full_text(self) -> str:
        """Passage followed by each retained query, space-separated, no markers."""
        if not self.retained_queries:
            return self.original_text
        return " ".join((self.original_text, *self.retained_queries))


@dataclass
class ScoreRun:
    pairs: list[ScoredPair]
    elapsed_seconds: float


def score_all(
    corpus: Corpus,
    generator: QueryGenerator,
    scorer: RelevanceScorer,
    n: int,
    threads: int = 1,
) -> ScoreRun:
    """Score every (document, generated query) pair in corpus order.

    Scoring is parallel over documents when threads > 1; the output order
    is corpus order regardless of scheduling. Wall-clock time is recorded
    for the compute-budget report.
    """
    start = time.perf_counter()

    def score_doc(doc: Document) -> list[ScoredPair]:
        return [
            ScoredPair(doc.doc_id, i, scorer.score(doc, query, i))
            for i, query in enumerate(generator.expand(doc, n))
        ]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_doc = list(pool.map(score_doc, corpus))
    else:
        per_doc = [score_doc(doc) for doc in corpus]
    pairs = [pair for chunk in per_doc for pair in chunk]
    return ScoreRun(pairs=pairs, elapsed_seconds=time.perf_counter() - start)


def compute_threshold(
    scores: Iterable[float],
    p: float,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> float:
    """Score at descending-order position ceil(p*N), 1-based, over N scores.

    p=0 returns +inf (retain nothing) and p=1 returns -inf (retain all)
    without consuming the scores. The multiset is never assumed to fit in
    memory: chunks of `chunk_size` are sorted and spilled to temp files,
    then merged.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"p must be in [0,1], got {p}")
    if p == 0.0:
        return math.inf
    if p == 1.0:
        return -math.inf

    spill_paths: list[str] = []
    chunk: list[float] = []
    count = 0
    try:
        for score in scores:
            chunk.append(score)
            count += 1
            if len(chunk) >= chunk_size:
                chunk.sort(reverse=True)
                fd, path = tempfile.mkstemp(prefix="d2qmm-scores-")
                with os.fdopen(fd, "wb") as fh:
                    pickle.dump(chunk, fh, protocol=pickle.HIGHEST_PROTOCOL)
                spill_paths.append(path)
                chunk = []
        if count == 0:
            raise ConfigError("cannot compute a threshold from an empty score multiset")
        chunk.sort(reverse=True)
        position = math.ceil(p * count)  # 1-based rank in descending order
        if not spill_paths:
            return chunk[position - 1]

        def read_spill(path: str) -> Iterator[float]:
            with open(path, "rb") as fh:
                yield from pickle.load(fh)

        streams = [read_spill(path) for path in spill_paths]
        if chunk:
            streams.append(iter(chunk))
        merged = heapq.merge(*streams, reverse=True)
        for rank, score in enumerate(merged, start=1):
            if rank == position:
                return score
        raise AssertionError("merge ended before reaching the threshold position")
    finally:
        for path in spill_paths:
            try:
                os.unlink(path)
            except OSError:
                pass


def resolve_threshold(
    corpus: Corpus,
    generator: QueryGenerator,
    scorer: RelevanceScorer,
    config: FilterConfig,
    threads: int = 1,
) -> tuple[FilterConfig, ScoreRun | None]:
    """Fill in config.t from the corpus-wide score distribution when only p
    is set. Returns the resolved config and the score run (None if t was
    already explicit)."""
    if config.t is not None:
        return config, None
    run = score_all(corpus, generator, scorer, config.n, threads=threads)
    t = compute_threshold((pair.score for pair in run.pairs), config.p)
    return FilterConfig(n=config.n, t=t), run


def filter_expand(
    corpus: Corpus,
    generator: QueryGenerator,
    scorer: RelevanceScorer,
    config: FilterConfig,
    dedup: bool = False,
) -> Iterator[ExpandedDocument]:
    """Yield each document with the generated queries scoring >= t, in
    corpus order with generation order preserved among retained queries.

    Requires a resolved threshold (config.t set). With dedup=True,
    duplicate generated queries are dropped (first occurrence kept) before
    scoring, which changes the term statistics of the expanded corpus.
    """
    if config.t is None:
        raise ConfigError("filter_expand requires a resolved threshold (config.t)")
    t = config.t
    for doc in corpus:
        queries = generator.expand(doc, config.n)
        indexed = list(enumerate(queries))
        if dedup:
            seen: set[str] = set()
            unique = []
            for i, q in indexed:
                if q not in seen:
                    seen.add(q)
                    unique.append((i, q))
            indexed = unique
        # Sentinel thresholds decide without consulting the scorer: scores
        # are finite by invariant, so >= -inf is always true and >= +inf
        # never is.
        if t == -math.inf:
            retained = tuple(q for _, q in indexed)
        elif t == math.inf:
            retained = ()
        else:
            try:
                retained = tuple(q for i, q in indexed if scorer.score(doc, q, i) >= t)
            except MissingScoreError as exc:
                raise MissingScoreError(f"document {doc.doc_id!r}: {exc}") from None
        yield ExpandedDocument(doc.doc_id, doc.text, retained)


def brute_force_retained(
    doc: Document,
    queries: Sequence[str],
    scorer: RelevanceScorer,
    t: float,
) -> list[str]:
    """Direct set construction {q in e(d) : s(q,d) >= t}, kept as the
    reference form of the retention rule."""
    return [q for i, q in enumerate(queries) if scorer.score(doc, q, i) >= t]
