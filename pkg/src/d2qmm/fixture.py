"""Deterministic synthetic fixture: a corpus whose mock expansion queries
split cleanly into faithful ones (built from each passage's own terms)
and hallucinated ones (built from a noise vocabulary absent from the
corpus but present in user topics).

Topics ask for one target document using two of its content terms plus
noise terms. Against the unexpanded corpus the noise matches nothing; once
hallucinated queries are appended (no filtering), other documents start
matching the topic's noise terms and can displace the target, which is
what makes filtered expansion measurably better on this corpus.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from d2qmm.corpus_io import Corpus, Document, GeneratedQuerySet, write_queries
from d2qmm.expansion import MockGeneratorConfig, MockQueryGenerator

SHARED_TERMS = 150
SHARED_PER_DOC = 5
NOISE_TERMS = 400
TOPIC_NOISE_TERMS = 2


@dataclass
class DemoFixture:
    corpus: Corpus
    queries: dict[str, GeneratedQuerySet]
    topics: list[tuple[str, str]]
    qrels_rows: list[tuple[str, str, int]]
    generator_config: MockGeneratorConfig
    n: int

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.tsv",
            "queries": out / "queries.jsonl",
            "topics": out / "topics.tsv",
            "qrels": out / "qrels.txt",
        }
        with open(paths["corpus"], "w", encoding="utf-8") as fh:
            for doc in self.corpus:
                fh.write(f"{doc.doc_id}\t{doc.text}\n")
        write_queries(
            (self.queries[doc.doc_id] for doc in self.corpus), paths["queries"]
        )
        with open(paths["topics"], "w", encoding="utf-8") as fh:
            for query_id, text in self.topics:
                fh.write(f"{query_id}\t{text}\n")
        with open(paths["qrels"], "w", encoding="utf-8") as fh:
            for query_id, doc_id, grade in self.qrels_rows:
                fh.write(f"{query_id} 0 {doc_id} {grade}\n")
        return paths


def build_demo_fixture(
    num_docs: int = 1000,
    n: int = 8,
    num_topics: int = 200,
    seed: int = 7,
) -> DemoFixture:
    """Build the synthetic corpus, mock queries, topics, and qrels.

    Fully determined by the arguments; byte-identical files across runs.
    """
    rng = random.Random(seed)
    shared = [f"c{i:03d}" for i in range(SHARED_TERMS)]
    noise = tuple(f"z{i:04d}" for i in range(NOISE_TERMS))

    docs: list[Document] = []
    doc_shared: dict[str, list[str]] = {}
    for i in range(num_docs):
        doc_id = f"doc{i:05d}"
        own_shared = rng.sample(shared, SHARED_PER_DOC)
        unique = [f"u{i:05d}{suffix}" for suffix in ("a", "b", "c")]
        tokens: list[str] = []
        for term in own_shared:
            tokens.extend([term] * rng.randint(1, 2))
        tokens.extend(unique)
        rng.shuffle(tokens)
        docs.append(Document(doc_id, " ".join(tokens)))
        doc_shared[doc_id] = own_shared
    corpus = Corpus(docs)

    generator_config = MockGeneratorConfig(
        seed=seed, relevant_fraction=0.5, noise_vocabulary=noise
    )
    generator = MockQueryGenerator(generator_config)
    queries = {
        doc.doc_id: GeneratedQuerySet(doc.doc_id, tuple(generator.expand(doc, n)))
        for doc in corpus
    }

    topics: list[tuple[str, str]] = []
    qrels_rows: list[tuple[str, str, int]] = []
    target_ids = rng.sample(range(num_docs), num_topics)
    for j, target in enumerate(sorted(target_ids)):
        doc_id = f"doc{target:05d}"
        terms = rng.sample(doc_shared[doc_id], 2)
        terms += rng.sample(noise, TOPIC_NOISE_TERMS)
        query_id = f"q{j:04d}"
        topics.append((query_id, " ".join(terms)))
        qrels_rows.append((query_id, doc_id, 1))

    return DemoFixture(
        corpus=corpus,
        queries=queries,
        topics=topics,
        qrels_rows=qrels_rows,
        generator_config=generator_config,
        n=n,
    )
