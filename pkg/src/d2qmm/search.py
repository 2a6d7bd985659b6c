"""Top-k BM25 query evaluation: exhaustive scoring (the correctness
oracle) and Block-Max WAND dynamic pruning (the production path).

Both return identically ranked results: score descending, ties broken by
ascending doc_id. To make the equivalence exact rather than approximate,
both paths sum per-term partial scores in sorted-term order, so equal
documents produce bit-identical floats, and the pruning logic never skips
a candidate whose upper bound merely ties the current k-th best score
(an at-threshold tie can still win on doc_id).
"""

from __future__ import annotations

import heapq
from bisect import bisect_left
from collections import Counter
from typing import Sequence

from d2qmm.errors import ConfigError
from d2qmm.index import InvertedIndex, PostingList

SearchResult = list[tuple[str, float]]


def _ranked(index: InvertedIndex, scored: dict[int, float], k: int) -> SearchResult:
    order = sorted(scored.items(), key=lambda item: (-item[1], index.doc_ids[item[0]]))
    return [(index.doc_ids[ord_], score) for ord_, score in order[:k]]


def search_exhaustive(index: InvertedIndex, query_terms: Sequence[str], k: int) -> SearchResult:
    """Score every document containing at least one query term; top-k."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    weights = Counter(t for t in query_terms if t in index.postings)
    scored: dict[int, float] = {}
    for term in sorted(weights):
        plist = index.postings[term]
        w = weights[term]
        for pos, ord_ in enumerate(plist.doc_ords):
            scored[ord_] = scored.get(ord_, 0.0) + w * index.partial_score(plist, pos)
    return _ranked(index, scored, k)


class _Cursor:
    __slots__ = ("term", "plist", "weight", "pos", "block", "index", "max_weighted")

    def __init__(self, index: InvertedIndex, term: str, plist: PostingList, weight: int):
        self.index = index
        self.term = term
        self.plist = plist
        self.weight = weight
        self.pos = 0
        self.block = 0
        self.max_weighted = weight * plist.max_score

    def exhausted(self) -> bool:
        return self.pos >= self.plist.df

    def docid(self) -> int:
        return self.plist.doc_ords[self.pos]

    def partial(self) -> float:
        return self.weight * self.index.partial_score(self.plist, self.pos)

    def advance(self) -> None:
        self.pos += 1

    def seek(self, target: int) -> None:
        """Move to the first posting with ordinal >= target."""
        self.pos = bisect_left(self.plist.doc_ords, target, lo=self.pos)

    def align_block(self, target: int) -> None:
        """Advance the block pointer until its last ordinal covers target."""
        lasts = self.plist.block_lasts
        while self.block < len(lasts) and lasts[self.block] < target:
            self.block += 1

    def block_last(self) -> int:
        return self.plist.block_lasts[self.block]

    def block_max_weighted(self) -> float:
        return self.weight * self.plist.block_maxes[self.block]


class _HeapEntry:
    """Min-heap ordering puts the *worst* result at the root: lowest score,
    and among equal scores the largest doc_id (the first to be evicted)."""

    __slots__ = ("score", "doc_id")

    def __init__(self, score: float, doc_id: str):
        self.score = score
        self.doc_id = doc_id

    def __lt__(self, other: "_HeapEntry") -> bool:
        if self.score != other.score:
            return self.score < other.score
        return self.doc_id > other.doc_id


def search_bmw(index: InvertedIndex, query_terms: Sequence[str], k: int) -> SearchResult:
    """Document-at-a-time top-k with WAND pivoting and block-max skipping.

    Pivot selection uses term-level upper bounds (prefix sum >= theta);
    candidates then face the tighter per-block bound, and a whole ordinal
    range is skipped when even the block bound falls strictly below theta.
    Output is identical to search_exhaustive under the declared tie rule.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    weights = Counter(t for t in query_terms if t in index.postings)
    cursors = [
        _Cursor(index, term, index.postings[term], weights[term]) for term in sorted(weights)
    ]
    heap: list[_HeapEntry] = []

    while True:
        live = [c for c in cursors if not c.exhausted()]
        if not live:
            break
        live.sort(key=lambda c: c.docid())
        full = len(heap) == k
        theta = heap[0].score if full else None

        if not full:
            pivot = 0
        else:
            pivot = None
            acc = 0.0
            for i, c in enumerate(live):
                acc += c.max_weighted
                if acc >= theta:
                    pivot = i
                    break
            if pivot is None:
                break  # no remaining document can reach the current top-k
        pivot_doc = live[pivot].docid()

        if live[0].docid() != pivot_doc:
            # Cursors before the pivot lag behind; bring them up to it.
            for c in live[:pivot]:
                if c.docid() < pivot_doc:
                    c.seek(pivot_doc)
            continue

        # All cursors at positions <= pivot sit exactly on pivot_doc; pull in
        # any ties just past the pivot so the bound covers every list that
        # could contribute to this document.
        group_end = pivot
        while group_end + 1 < len(live) and live[group_end + 1].docid() == pivot_doc:
            group_end += 1
        group = live[: group_end + 1]

        if full:
            bound = 0.0
            for c in group:
                c.align_block(pivot_doc)
                bound += c.block_max_weighted()
            if bound < theta:
                # Nothing in [pivot_doc, next_boundary) can win; skip it all.
                next_boundary = min(c.block_last() for c in group) + 1
                if group_end + 1 < len(live):
                    next_boundary = min(next_boundary, live[group_end + 1].docid())
                for c in group:
                    c.seek(next_boundary)
                continue

        score = 0.0
        for c in sorted(group, key=lambda c: c.term):
            score += c.partial()
        entry = _HeapEntry(score, index.doc_ids[pivot_doc])
        if len(heap) < k:
            heapq.heappush(heap, entry)
        elif heap[0] < entry:
            heapq.heapreplace(heap, entry)
        for c in group:
            c.advance()

    ordered = sorted(heap, key=lambda e: (-e.score, e.doc_id))
    return [(e.doc_id, e.score) for e in ordered]
