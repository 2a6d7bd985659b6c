"""Batch query generation with a sequence-to-sequence model."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from d2qmm_adapter import formats
from d2qmm_adapter.config import AdapterConfig, apply_determinism
from d2qmm_adapter.errors import AdapterError
from d2qmm_adapter.sharding import chunked, run_sharded


@dataclass
class GenerationResult:
    passages: int
    queries_per_passage: int
    total_seconds: float
    batch_seconds: list[float] = field(default_factory=list)
    shards_reused: int = 0


def _load_generator(config: AdapterConfig):
    import torch
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    if not config.generator_model:
        raise AdapterError("config.generator_model is required for generation")
    try:
        tokenizer = AutoTokenizer.from_pretrained(config.generator_model)
        model = AutoModelForSeq2SeqLM.from_pretrained(config.generator_model)
    except Exception as exc:
        raise AdapterError(f"cannot load generator {config.generator_model!r}: {exc}")
    model.to(torch.device(config.device))
    model.eval()
    return tokenizer, model


def generate_queries(
    corpus_path: str | Path,
    out_path: str | Path,
    config: AdapterConfig,
) -> GenerationResult:
    """Write n sampled queries per passage as query JSONL, in generation
    order, shard-checkpointed for resume. Batch wall times are recorded for
    the compute-budget accounting."""
    import torch

    rows = formats.read_corpus(corpus_path)
    window = formats.parse_slice(config.corpus_slice, len(rows))
    rows = [rows[i] for i in window]
    tokenizer, model = _load_generator(config)

    batch_seconds: list[float] = []
    start = time.perf_counter()

    def produce(shard_index: int, shard_rows: Sequence[tuple[str, str]]) -> list[str]:
        apply_determinism(config, shard_index)
        lines: list[str] = []
        for batch_index, batch in enumerate(chunked(shard_rows, config.batch_size)):
            texts = [text for _, text in batch]
            batch_start = time.perf_counter()
            try:
                encoded = tokenizer(
                    texts,
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                    max_length=config.max_input_tokens,
                ).to(model.device)
                with torch.no_grad():
                    output = model.generate(
                        **encoded,
                        do_sample=True,
                        top_k=config.top_k,
                        max_new_tokens=config.max_new_tokens,
                        min_new_tokens=config.min_new_tokens,
                        num_return_sequences=config.n,
                        pad_token_id=tokenizer.pad_token_id,
                    )
                decoded = tokenizer.batch_decode(output, skip_special_tokens=True)
            except Exception as exc:
                raise AdapterError(
                    f"generation failed in shard {shard_index}, batch {batch_index} "
                    f"(completed shards are kept for resume): {exc}"
                )
            batch_seconds.append(time.perf_counter() - batch_start)
            for i, (doc_id, _) in enumerate(batch):
                queries = decoded[i * config.n : (i + 1) * config.n]
                # a randomly initialized or badly prompted model can emit
                # blank text; the query-file contract forbids empty queries
                queries = [q.strip() if q.strip() else "unk" for q in queries]
                lines.append(formats.query_line(doc_id, queries))
        return lines

    shard_paths, reused = run_sharded(rows, out_path, config.checkpoint_every, produce)
    formats.merge_shards(shard_paths, out_path)
    total = time.perf_counter() - start
    formats.write_timings(
        out_path,
        {
            "generation_seconds": total,
            "batch_seconds": batch_seconds,
            "passages": len(rows),
            "shards_reused": reused,
        },
    )
    return GenerationResult(
        passages=len(rows),
        queries_per_passage=config.n,
        total_seconds=total,
        batch_seconds=batch_seconds,
        shards_reused=reused,
    )
