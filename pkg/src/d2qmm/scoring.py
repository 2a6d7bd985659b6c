"""BM25 parameters and the term-score definition shared by the index and
the lexical relevance scorer."""

from __future__ import annotations

import math
from dataclasses import dataclass

from d2qmm.errors import ConfigError


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 <= 0:
            raise ConfigError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError(f"b must be in [0,1], got {self.b}")


def bm25_term_score(
    tf: int, df: int, dl: int, avgdl: float, n_docs: int, params: Bm25Params
) -> float:
    """One term's contribution to a document's BM25 score.

    Uses the non-negative idf form ln(1 + (N - df + 0.5)/(df + 0.5)), so the
    score never goes negative even when a term appears in every document.
    """
    idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
    norm = tf + params.k1 * (1.0 - params.b + params.b * (dl / avgdl))
    return idf * tf * (params.k1 + 1.0) / norm
