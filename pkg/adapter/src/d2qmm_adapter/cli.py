"""Adapter CLI: `generate` emits query JSONL, `score` emits score JSONL.

Both read the same corpus TSV/JSONL the pipeline uses and write files it
loads directly, so the adapter plugs in ahead of the `filter` stage with
no transformation step.
"""

from __future__ import annotations

import json
import sys

import click

from d2qmm_adapter.config import AdapterConfig
from d2qmm_adapter.errors import AdapterError
from d2qmm_adapter.generate import generate_queries
from d2qmm_adapter.score import score_pairs


def _fail(exc: Exception) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Neural query generation and relevance scoring."""


@main.command("generate")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--model", required=True, help="Hub id or local path of a seq2seq model.")
@click.option("--n", type=int, default=8)
@click.option("--batch-size", type=int, default=8)
@click.option("--device", default="cpu")
@click.option("--top-k", type=int, default=10)
@click.option("--max-new-tokens", type=int, default=16)
@click.option("--seed", type=int, default=0)
@click.option("--deterministic/--no-deterministic", default=True)
@click.option("--slice", "corpus_slice", default=None, help="start:end over corpus order.")
@click.option("--checkpoint-every", type=int, default=64)
@click.option("--out", required=True, type=click.Path())
def generate_cmd(corpus_path, model, n, batch_size, device, top_k, max_new_tokens,
                 seed, deterministic, corpus_slice, checkpoint_every, out):
    """Generate n queries per passage (query JSONL)."""
    try:
        config = AdapterConfig(
            generator_model=model, n=n, batch_size=batch_size, device=device,
            top_k=top_k, max_new_tokens=max_new_tokens, seed=seed,
            deterministic=deterministic, corpus_slice=corpus_slice,
            checkpoint_every=checkpoint_every,
        )
        result = generate_queries(corpus_path, out, config)
        click.echo(json.dumps({
            "passages": result.passages,
            "n": result.queries_per_passage,
            "seconds": round(result.total_seconds, 3),
            "shards_reused": result.shards_reused,
            "out": str(out),
        }))
    except AdapterError as exc:
        _fail(exc)


@main.command("score")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--model", required=True, help="Hub id or local path of the relevance model.")
@click.option("--kind", type=click.Choice(["cross-encoder", "bi-encoder"]),
              default="cross-encoder")
@click.option("--n", type=int, default=8)
@click.option("--batch-size", type=int, default=8)
@click.option("--device", default="cpu")
@click.option("--seed", type=int, default=0)
@click.option("--deterministic/--no-deterministic", default=True)
@click.option("--slice", "corpus_slice", default=None)
@click.option("--checkpoint-every", type=int, default=64)
@click.option("--out", required=True, type=click.Path())
def score_cmd(corpus_path, queries_path, model, kind, n, batch_size, device, seed,
              deterministic, corpus_slice, checkpoint_every, out):
    """Score every (passage, query) pair (score JSONL)."""
    try:
        config = AdapterConfig(
            scorer_model=model, scorer_kind=kind, n=n, batch_size=batch_size,
            device=device, seed=seed, deterministic=deterministic,
            corpus_slice=corpus_slice, checkpoint_every=checkpoint_every,
        )
        result = score_pairs(corpus_path, queries_path, out, config)
        click.echo(json.dumps({
            "pairs": result.pairs,
            "seconds": round(result.total_seconds, 3),
            "shards_reused": result.shards_reused,
            "out": str(out),
        }))
    except AdapterError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
