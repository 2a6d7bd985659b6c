"""Filtered document-expansion retrieval pipeline.

Expansion queries are scored against their source passage, a corpus-wide
quantile threshold keeps only the most relevant proportion, and the
surviving queries are appended to the passages before BM25 indexing,
retrieval, and evaluation.
"""

__version__ = "0.1.0"

from d2qmm.errors import D2qError

__all__ = ["D2qError", "__version__"]
