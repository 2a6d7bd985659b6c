"""Neural adapter: batch query generation and relevance scoring.

Produces the query and score JSONL files the retrieval pipeline consumes,
using a hub-hosted (or local) sequence-to-sequence generator and a
cross-encoder or bi-encoder relevance model. Communicates with the
pipeline only through its file formats.
"""

__version__ = "0.1.0"

from d2qmm_adapter.config import AdapterConfig
from d2qmm_adapter.errors import AdapterError

__all__ = ["AdapterConfig", "AdapterError", "__version__"]
