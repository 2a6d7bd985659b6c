"""Relevance scoring of (query, passage) pairs.

Cross-encoders score the pair jointly; the score is the model's relevance
logit (the single regression logit, or the positive-class logit for
two-class heads). Bi-encoders embed query and passage separately with mean
pooling and score by dot product.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from d2qmm_adapter import formats
from d2qmm_adapter.config import AdapterConfig, apply_determinism
from d2qmm_adapter.errors import AdapterError
from d2qmm_adapter.sharding import chunked, run_sharded


@dataclass
class ScoringResult:
    pairs: int
    total_seconds: float
    batch_seconds: list[float] = field(default_factory=list)
    shards_reused: int = 0


def _load_scorer(config: AdapterConfig):
    import torch
    from transformers import AutoModel, AutoModelForSequenceClassification, AutoTokenizer

    if not config.scorer_model:
        raise AdapterError("config.scorer_model is required for scoring")
    try:
        tokenizer = AutoTokenizer.from_pretrained(config.scorer_model)
        if config.scorer_kind == "cross-encoder":
            model = AutoModelForSequenceClassification.from_pretrained(config.scorer_model)
        else:
            model = AutoModel.from_pretrained(config.scorer_model)
    except Exception as exc:
        raise AdapterError(f"cannot load scorer {config.scorer_model!r}: {exc}")
    model.to(torch.device(config.device))
    model.eval()
    return tokenizer, model


def _mean_pool(hidden, attention_mask):
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)


def score_pairs(
    corpus_path: str | Path,
    queries_path: str | Path,
    out_path: str | Path,
    config: AdapterConfig,
) -> ScoringResult:
    """Write one finite score per (passage, query) pair as score JSONL,
    shard-checkpointed for resume; wall time recorded per batch."""
    import torch

    rows = formats.read_corpus(corpus_path)
    window = formats.parse_slice(config.corpus_slice, len(rows))
    rows = [rows[i] for i in window]
    queries = formats.read_queries(queries_path, config.n)
    tokenizer, model = _load_scorer(config)

    work: list[tuple[str, str, int, str]] = []  # doc_id, text, query_index, query
    for doc_id, text in rows:
        for query_index, query in enumerate(queries.get(doc_id, [])):
            work.append((doc_id, text, query_index, query))

    batch_seconds: list[float] = []
    start = time.perf_counter()
    pair_budget = config.checkpoint_every * config.n

    def produce(shard_index: int, shard: Sequence[tuple[str, str, int, str]]) -> list[str]:
        apply_determinism(config, shard_index)
        lines: list[str] = []
        for batch_index, batch in enumerate(chunked(shard, config.batch_size)):
            batch_start = time.perf_counter()
            try:
                scores = _score_batch(tokenizer, model, batch, config)
            except Exception as exc:
                raise AdapterError(
                    f"scoring failed in shard {shard_index}, batch {batch_index} "
                    f"(completed shards are kept for resume): {exc}"
                )
            batch_seconds.append(time.perf_counter() - batch_start)
            for (doc_id, _, query_index, _), score in zip(batch, scores):
                if not math.isfinite(score):
                    raise AdapterError(
                        f"non-finite score for ({doc_id!r}, {query_index})"
                    )
                lines.append(formats.score_line(doc_id, query_index, score))
        return lines

    def _score_batch(tokenizer, model, batch, config) -> list[float]:
        queries_text = [q for _, _, _, q in batch]
        passages = [t for _, t, _, _ in batch]
        if config.scorer_kind == "cross-encoder":
            encoded = tokenizer(
                queries_text,
                passages,
                return_tensors="pt",
                padding=True,
                truncation=True,
                max_length=config.max_input_tokens,
            ).to(model.device)
            with torch.no_grad():
                logits = model(**encoded).logits
            column = 0 if logits.shape[-1] == 1 else 1
            return [float(v) for v in logits[:, column]]
        query_emb = _embed(tokenizer, model, queries_text, config)
        passage_emb = _embed(tokenizer, model, passages, config)
        return [float(v) for v in (query_emb * passage_emb).sum(dim=-1)]

    def _embed(tokenizer, model, texts, config):
        encoded = tokenizer(
            texts,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=config.max_input_tokens,
        ).to(model.device)
        with torch.no_grad():
            hidden = model(**encoded).last_hidden_state
        return _mean_pool(hidden, encoded.attention_mask)

    shard_paths, reused = run_sharded(
        work,
        out_path,
        pair_budget,
        produce,
    )
    formats.merge_shards(shard_paths, out_path)
    total = time.perf_counter() - start
    formats.write_timings(
        out_path,
        {
            "scoring_seconds": total,
            "batch_seconds": batch_seconds,
            "pairs": len(work),
            "shards_reused": reused,
        },
    )
    return ScoringResult(
        pairs=len(work),
        total_seconds=total,
        batch_seconds=batch_seconds,
        shards_reused=reused,
    )
