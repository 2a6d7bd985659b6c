"""Expansion-query providers.

Queries come either from a precomputed file (the production path) or from
a deterministic mock generator used for hermetic testing. Generators are
immutable after construction and safe to call from many threads.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from typing import Mapping, Protocol

from d2qmm.corpus_io import Document, GeneratedQuerySet
from d2qmm.errors import ConfigError

_WORD_RE = re.compile(r"[^\W_]+")


class QueryGenerator(Protocol):
    def expand(self, document: Document, n: int) -> list[str]:
        """Return up to n expansion queries for the document, in generation order."""
        ...


class FileQueryGenerator:
    """Serves the first n stored queries per document; unknown documents
    expand to nothing."""

    def __init__(self, queries: Mapping[str, GeneratedQuerySet]):
        self._queries = dict(queries)

    def expand(self, document: Document, n: int) -> list[str]:
        if n < 0:
            raise ConfigError(f"n must be >= 0, got {n}")
        stored = self._queries.get(document.doc_id)
        if stored is None:
            return []
        return list(stored.queries[:n])


@dataclass(frozen=True)
class MockGeneratorConfig:
    seed: int
    relevant_fraction: float
    noise_vocabulary: tuple[str, ...]

    def __post_init__(self):
        if not 0.0 <= self.relevant_fraction <= 1.0:
            raise ConfigError(f"relevant_fraction must be in [0,1], got {self.relevant_fraction}")
        if self.relevant_fraction < 1.0 and not self.noise_vocabulary:
            raise ConfigError("noise_vocabulary must be non-empty when relevant_fraction < 1")


def _doc_rng(seed: int, doc_id: str) -> random.Random:
    # hashlib, not hash(): per-process salting would break cross-run determinism
    digest = hashlib.sha256(f"{seed}\x1f{doc_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class MockQueryGenerator:
    """Deterministic test generator mixing faithful and hallucinated queries.

    Faithful queries are 3-6 term samples (without replacement) from the
    document's own token set; hallucinated queries draw their terms from a
    noise vocabulary that is absent from the corpus. The two kinds are
    shuffled together, so position within the generation order carries no
    signal.
    """

    def __init__(self, config: MockGeneratorConfig):
        self.config = config

    def expand(self, document: Document, n: int) -> list[str]:
        if n < 0:
            raise ConfigError(f"n must be >= 0, got {n}")
        if n == 0:
            return []
        rng = _doc_rng(self.config.seed, document.doc_id)
        doc_terms = sorted(set(_WORD_RE.findall(document.text.lower())))
        n_faithful = int(self.config.relevant_fraction * n + 0.5)
        if not doc_terms:
            n_faithful = 0
        queries: list[str] = []
        for _ in range(n_faithful):
            k = min(rng.randint(3, 6), len(doc_terms))
            queries.append(" ".join(rng.sample(doc_terms, k)))
        for _ in range(n - n_faithful):
            k = rng.randint(3, 6)
            queries.append(" ".join(rng.choices(self.config.noise_vocabulary, k=k)))
        rng.shuffle(queries)
        return queries
