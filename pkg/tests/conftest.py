import random

import pytest

from d2qmm.analysis import TokenizerConfig
from d2qmm.corpus_io import Corpus, Document
from d2qmm.filtering import ExpandedDocument


@pytest.fixture
def plain_tokenizer():
    return TokenizerConfig(remove_stopwords=False, stem=False)


def make_corpus(rows):
    return Corpus(Document(doc_id, text) for doc_id, text in rows)


def as_expanded(corpus, retained=None):
    retained = retained or {}
    return [
        ExpandedDocument(d.doc_id, d.text, tuple(retained.get(d.doc_id, ())))
        for d in corpus
    ]


def random_corpus(rng: random.Random, max_docs=40, max_len=30, vocab_size=None):
    """Random small corpus whose doc_id strings sort differently from their
    ordinals, which is what stresses the ranking tie rule."""
    vocab_size = vocab_size or rng.randint(3, 15)
    vocab = [f"t{i}" for i in range(vocab_size)]
    docs = []
    for i in range(rng.randint(1, max_docs)):
        text = " ".join(rng.choices(vocab, k=rng.randint(1, max_len)))
        docs.append(ExpandedDocument(f"d{rng.randrange(10**6)}x{i}", text, ()))
    return docs, vocab
