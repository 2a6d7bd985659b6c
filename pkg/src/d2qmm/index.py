"""Inverted index with per-block score upper bounds for BM25 retrieval.

Postings are kept per term as parallel arrays of ascending document
ordinals and term frequencies, partitioned into fixed-size blocks. Each
block stores its last ordinal and the maximum BM25 partial score of its
members, which is what lets the search stage skip whole blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from d2qmm.analysis import TokenizerConfig, tokenize
from d2qmm.errors import ConfigError, IndexIntegrityError
from d2qmm.filtering import ExpandedDocument
from d2qmm.scoring import Bm25Params, bm25_term_score

__all__ = [
    "Bm25Params",
    "bm25_term_score",
    "PostingList",
    "InvertedIndex",
    "build_index",
    "indexed_token_count",
    "audit_block_maxes",
]


@dataclass
class PostingList:
    doc_ords: list[int]
    tfs: list[int]
    block_lasts: list[int] = field(default_factory=list)
    block_maxes: list[float] = field(default_factory=list)
    max_score: float = 0.0

    @property
    def df(self) -> int:
        return len(self.doc_ords)


@dataclass
class InvertedIndex:
    params: Bm25Params
    tokenizer: TokenizerConfig
    block_size: int
    doc_ids: list[str]
    doc_lengths: list[int]
    postings: dict[str, PostingList]
    total_tokens: int

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def avgdl(self) -> float:
        return self.total_tokens / self.doc_count if self.doc_count else 0.0

    def partial_score(self, plist: PostingList, pos: int) -> float:
        ord_ = plist.doc_ords[pos]
        return bm25_term_score(
            plist.tfs[pos],
            plist.df,
            self.doc_lengths[ord_],
            self.avgdl,
            self.doc_count,
            self.params,
        )


def _compute_blocks(index: InvertedIndex) -> None:
    size = index.block_size
    for plist in index.postings.values():
        lasts: list[int] = []
        maxes: list[float] = []
        for start in range(0, plist.df, size):
            end = min(start + size, plist.df)
            lasts.append(plist.doc_ords[end - 1])
            maxes.append(max(index.partial_score(plist, pos) for pos in range(start, end)))
        plist.block_lasts = lasts
        plist.block_maxes = maxes
        plist.max_score = max(maxes)


def build_index(
    expanded: Iterable[ExpandedDocument],
    tokenizer: TokenizerConfig,
    params: Bm25Params,
    block_size: int = 128,
    threads: int = 1,
) -> InvertedIndex:
    """Tokenize expanded documents and build the inverted index.

    Document ordinals follow input order. With threads > 1 only the
    tokenization is parallel; postings are merged in ordinal order, so the
    result is identical at any thread count.
    """
    if block_size < 1:
        raise ConfigError(f"block_size must be >= 1, got {block_size}")
    docs = list(expanded)
    if threads > 1 and docs:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            token_lists = list(pool.map(lambda d: tokenize(d.full_text(), tokenizer), docs))
    else:
        token_lists = [tokenize(d.full_text(), tokenizer) for d in docs]

    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, PostingList] = {}
    total = 0
    for ord_, (doc, terms) in enumerate(zip(docs, token_lists)):
        doc_ids.append(doc.doc_id)
        doc_lengths.append(len(terms))
        total += len(terms)
        counts: dict[str, int] = {}
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
        for term in sorted(counts):
            plist = postings.get(term)
            if plist is None:
                plist = postings[term] = PostingList([], [])
            plist.doc_ords.append(ord_)
            plist.tfs.append(counts[term])

    index = InvertedIndex(
        params=params,
        tokenizer=tokenizer,
        block_size=block_size,
        doc_ids=doc_ids,
        doc_lengths=doc_lengths,
        postings=postings,
        total_tokens=total,
    )
    _compute_blocks(index)
    audit_block_maxes(index)
    return index


def indexed_token_count(index: InvertedIndex) -> int:
    """Total number of indexed tokens (the sum of document lengths)."""
    return index.total_tokens


def audit_block_maxes(index: InvertedIndex) -> int:
    """Verify every stored block bound dominates its members' partial scores.

    Returns the number of blocks checked; raises IndexIntegrityError on any
    violation or malformed posting order.
    """
    checked = 0
    for term, plist in index.postings.items():
        for a, b in zip(plist.doc_ords, plist.doc_ords[1:]):
            if b <= a:
                raise IndexIntegrityError(f"postings for {term!r} not strictly ascending")
        n_blocks = (plist.df + index.block_size - 1) // index.block_size
        if len(plist.block_lasts) != n_blocks or len(plist.block_maxes) != n_blocks:
            raise IndexIntegrityError(f"block metadata shape mismatch for {term!r}")
        for pos in range(plist.df):
            block = pos // index.block_size
            checked += 1
            if plist.doc_ords[pos] > plist.block_lasts[block]:
                raise IndexIntegrityError(f"block last ordinal violated for {term!r}")
            if index.partial_score(plist, pos) > plist.block_maxes[block]:
                raise IndexIntegrityError(f"block max score violated for {term!r}")
    return checked
