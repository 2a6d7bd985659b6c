"""Loaders and writers for corpora, query sets, score files, topics, qrels
and TREC-format run files.

All loaders are pure functions over files: safe to call concurrently on
distinct paths, and the returned structures are immutable (or treated as
such) so they can be shared across threads. Text I/O is UTF-8; gzipped
inputs are detected transparently via the magic bytes.
"""

from __future__ import annotations

import gzip
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from d2qmm.errors import FormatError

logger = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"


class Diagnostics:
    """Collects structured warning events, away from the data outputs."""

    def __init__(self) -> None:
        self.events: list[dict] = []

    def warn(self, code: str, **fields) -> None:
        event = {"code": code, **fields}
        self.events.append(event)
        logger.warning("%s", json.dumps(event, sort_keys=True))

    @property
    def warning_count(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


class Corpus(Sequence):
    """Ordered collection of documents with unique ids."""

    def __init__(self, documents: Iterable[Document]):
        self._docs = list(documents)
        self._by_id: dict[str, Document] = {}
        for d in self._docs:
            if d.doc_id in self._by_id:
                raise FormatError(f"duplicate doc_id {d.doc_id!r}")
            self._by_id[d.doc_id] = d

    def __len__(self) -> int:
        return len(self._docs)

    def __getitem__(self, i):
        return self._docs[i]

    def __iter__(self):
        return iter(self._docs)

    def get(self, doc_id: str) -> Document | None:
        return self._by_id.get(doc_id)

    def __contains__(self, doc_id) -> bool:
        return doc_id in self._by_id


@dataclass(frozen=True)
class GeneratedQuerySet:
    doc_id: str
    queries: tuple[str, ...]


@dataclass(frozen=True)
class ScoredPair:
    doc_id: str
    query_index: int
    score: float


class Qrels:
    """Relevance grades keyed by (query_id, doc_id)."""

    def __init__(self) -> None:
        self._grades: dict[str, dict[str, int]] = {}

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        per_query = self._grades.setdefault(query_id, {})
        if doc_id in per_query:
            raise FormatError(f"duplicate qrel entry ({query_id}, {doc_id})")
        if grade < 0:
            raise FormatError(f"negative relevance grade for ({query_id}, {doc_id})")
        per_query[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._grades.get(query_id, {}).get(doc_id, 0)

    def for_query(self, query_id: str) -> Mapping[str, int]:
        return self._grades.get(query_id, {})

    @property
    def query_ids(self) -> set[str]:
        return set(self._grades)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._grades

    def __len__(self) -> int:
        return sum(len(v) for v in self._grades.values())


def _open_text(path: str | Path) -> IO[str]:
    path = Path(path)
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == GZIP_MAGIC:
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _validate_doc_id(doc_id: str, path: str, lineno: int) -> None:
    if not doc_id:
        raise FormatError("empty doc_id", path=path, line=lineno)
    if any(ch.isspace() for ch in doc_id):
        raise FormatError(f"doc_id {doc_id!r} contains whitespace", path=path, line=lineno)


def load_corpus(path: str | Path, format: str | None = None) -> Corpus:
    """Load a passage corpus from TSV (`doc_id<TAB>text`) or JSONL
    (`{"docno": ..., "text": ...}`), preserving file order.

    TSV text fields are split on the first TAB only; later TABs are part
    of the text, matching the common passage-collection convention.
    """
    path = Path(path)
    fmt = format or ("jsonl" if path.name.endswith((".jsonl", ".jsonl.gz")) else "tsv")
    if fmt not in ("tsv", "jsonl"):
        raise FormatError(f"unknown corpus format {fmt!r}", path=str(path))
    docs: list[Document] = []
    seen: set[str] = set()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if fmt == "tsv":
                if "\t" not in line:
                    raise FormatError("expected doc_id<TAB>text", path=str(path), line=lineno)
                doc_id, text = line.split("\t", 1)
            else:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"invalid JSON: {exc}", path=str(path), line=lineno)
                if "docno" not in obj or "text" not in obj:
                    raise FormatError("missing 'docno' or 'text' field", path=str(path), line=lineno)
                doc_id, text = str(obj["docno"]), str(obj["text"])
            _validate_doc_id(doc_id, str(path), lineno)
            if doc_id in seen:
                raise FormatError(f"duplicate doc_id {doc_id!r}", path=str(path), line=lineno)
            seen.add(doc_id)
            docs.append(Document(doc_id, text))
    return Corpus(docs)


def load_queries(
    path: str | Path,
    n: int,
    diagnostics: Diagnostics | None = None,
) -> dict[str, GeneratedQuerySet]:
    """Load generated expansion queries, keeping the first `n` per document.

    Accepts JSONL (`{"docno": ..., "queries": [...]}`) or TSV with repeated
    `doc_id<TAB>query` rows. Documents with fewer than `n` stored queries
    keep what is available; a single warning event reports how many were
    short.
    """
    if n < 0:
        raise FormatError(f"query budget n must be >= 0, got {n}")
    path = Path(path)
    fmt = "jsonl" if path.name.endswith((".jsonl", ".jsonl.gz")) else "tsv"
    raw: dict[str, list[str]] = {}
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if fmt == "jsonl":
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"invalid JSON: {exc}", path=str(path), line=lineno)
                if "docno" not in obj or "queries" not in obj:
                    raise FormatError("missing 'docno' or 'queries' field", path=str(path), line=lineno)
                doc_id = str(obj["docno"])
                _validate_doc_id(doc_id, str(path), lineno)
                if doc_id in raw:
                    raise FormatError(f"duplicate docno {doc_id!r}", path=str(path), line=lineno)
                queries = [str(q) for q in obj["queries"]]
                for q in queries:
                    if not q.strip():
                        raise FormatError(f"empty query for doc {doc_id!r}", path=str(path), line=lineno)
                raw[doc_id] = queries
            else:
                if "\t" not in line:
                    raise FormatError("expected doc_id<TAB>query", path=str(path), line=lineno)
                doc_id, query = line.split("\t", 1)
                _validate_doc_id(doc_id, str(path), lineno)
                if not query.strip():
                    raise FormatError(f"empty query for doc {doc_id!r}", path=str(path), line=lineno)
                raw.setdefault(doc_id, []).append(query)
    short = sum(1 for qs in raw.values() if len(qs) < n)
    if short and diagnostics is not None:
        diagnostics.warn("short_query_sets", documents=short, requested_n=n)
    elif short:
        logger.warning(
            "%s", json.dumps({"code": "short_query_sets", "documents": short, "requested_n": n})
        )
    return {
        doc_id: GeneratedQuerySet(doc_id, tuple(qs[:n])) for doc_id, qs in raw.items()
    }


def load_scores(path: str | Path) -> list[ScoredPair]:
    """Load relevance scores as (doc_id, query_index, score) triples.

    Accepts JSONL (`{"docno", "query_index", "score"}`) or TSV triples.
    Non-finite scores, missing fields, and duplicate pairs are load errors.
    """
    path = Path(path)
    fmt = "jsonl" if path.name.endswith((".jsonl", ".jsonl.gz")) else "tsv"
    pairs: list[ScoredPair] = []
    seen: set[tuple[str, int]] = set()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if fmt == "jsonl":
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"invalid JSON: {exc}", path=str(path), line=lineno)
                missing = {"docno", "query_index", "score"} - obj.keys()
                if missing:
                    raise FormatError(
                        f"missing field(s) {sorted(missing)}", path=str(path), line=lineno
                    )
                doc_id = str(obj["docno"])
                query_index = obj["query_index"]
                score = obj["score"]
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise FormatError(
                        "expected doc_id<TAB>query_index<TAB>score", path=str(path), line=lineno
                    )
                doc_id, query_index, score = parts[0], parts[1], parts[2]
            try:
                query_index = int(query_index)
                score = float(score)
            except (TypeError, ValueError):
                raise FormatError("query_index or score not numeric", path=str(path), line=lineno)
            if query_index < 0:
                raise FormatError(f"negative query_index {query_index}", path=str(path), line=lineno)
            if not math.isfinite(score):
                raise FormatError(f"non-finite score {score!r}", path=str(path), line=lineno)
            key = (doc_id, query_index)
            if key in seen:
                raise FormatError(f"duplicate score for pair {key}", path=str(path), line=lineno)
            seen.add(key)
            pairs.append(ScoredPair(doc_id, query_index, score))
    return pairs


def load_topics(path: str | Path) -> list[tuple[str, str]]:
    """Load topics from TSV `query_id<TAB>text`; ids must be unique."""
    path = Path(path)
    topics: list[tuple[str, str]] = []
    seen: set[str] = set()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise FormatError("expected query_id<TAB>text", path=str(path), line=lineno)
            query_id, text = line.split("\t", 1)
            if query_id in seen:
                raise FormatError(f"duplicate query_id {query_id!r}", path=str(path), line=lineno)
            seen.add(query_id)
            topics.append((query_id, text))
    return topics


def load_qrels(path: str | Path) -> Qrels:
    """Load TREC qrels (`query_id 0 doc_id grade`, whitespace-separated).

    Duplicate (query_id, doc_id) entries and negative grades are rejected.
    """
    path = Path(path)
    qrels = Qrels()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError("expected 'query_id 0 doc_id grade'", path=str(path), line=lineno)
            query_id, _, doc_id, grade_str = parts
            try:
                grade = int(grade_str)
            except ValueError:
                raise FormatError(f"grade {grade_str!r} not an integer", path=str(path), line=lineno)
            try:
                qrels.add(query_id, doc_id, grade)
            except FormatError as exc:
                raise FormatError(str(exc), path=str(path), line=lineno)
    return qrels


def write_run(
    results: Mapping[str, Sequence[tuple[str, float]]],
    tag: str,
    path: str | Path,
) -> None:
    """Write a TREC run file: `query_id Q0 doc_id rank score tag`.

    Queries are emitted in ascending query_id order and hits are re-sorted
    by (score desc, doc_id asc) so the byte output is deterministic; scores
    print with six decimal places.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for query_id in sorted(results):
            ranked = sorted(results[query_id], key=lambda hit: (-hit[1], hit[0]))
            for rank, (doc_id, score) in enumerate(ranked, start=1):
                fh.write(f"{query_id} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def load_run(path: str | Path) -> dict[str, list[tuple[str, float]]]:
    """Parse a TREC run file back into per-query ranked lists (rank order)."""
    path = Path(path)
    per_query: dict[str, list[tuple[int, str, float]]] = {}
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError("expected 6 run-file fields", path=str(path), line=lineno)
            query_id, _, doc_id, rank_str, score_str, _ = parts
            try:
                rank = int(rank_str)
                score = float(score_str)
            except ValueError:
                raise FormatError("rank or score not numeric", path=str(path), line=lineno)
            per_query.setdefault(query_id, []).append((rank, doc_id, score))
    out: dict[str, list[tuple[str, float]]] = {}
    for query_id, rows in per_query.items():
        rows.sort(key=lambda r: r[0])
        out[query_id] = [(doc_id, score) for _, doc_id, score in rows]
    return out


def write_queries(sets: Iterable[GeneratedQuerySet], path: str | Path) -> None:
    """Write query sets as JSONL, one `{"docno", "queries"}` object per doc."""
    with open(path, "w", encoding="utf-8") as fh:
        for qs in sets:
            fh.write(json.dumps({"docno": qs.doc_id, "queries": list(qs.queries)}) + "\n")


def write_scores(pairs: Iterable[ScoredPair], path: str | Path) -> None:
    """Write scored pairs as JSONL `{"docno", "query_index", "score"}`."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "docno": pair.doc_id,
                        "query_index": pair.query_index,
                        "score": pair.score,
                    }
                )
                + "\n"
            )
