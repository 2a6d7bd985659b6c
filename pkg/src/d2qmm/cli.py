"""Command-line pipeline: expand | score | filter | index | search |
evaluate | sweep | budget | demo-fixture.

Stages communicate only via files, so externally produced query/score
files plug in at any point. Every data output gets a deterministic
`.meta.json` provenance sidecar carrying the config hash; re-running a
command with identical config and inputs reproduces data outputs byte for
byte (timing sidecars and logs may differ).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from d2qmm import corpus_io
from d2qmm.analysis import DEFAULT_STOPWORDS, TokenizerConfig, tokenize
from d2qmm.errors import ConfigError, D2qError
from d2qmm.evaluation import evaluate_run, measure_latency, paired_t_test
from d2qmm.expansion import FileQueryGenerator, MockGeneratorConfig, MockQueryGenerator
from d2qmm.filtering import (
    CorpusStatistics,
    ExpandedDocument,
    ExternalScoreLookup,
    FilterConfig,
    LexicalScorer,
    compute_threshold,
    filter_expand,
    score_all,
)
from d2qmm.fixture import build_demo_fixture
from d2qmm.index import build_index, indexed_token_count
from d2qmm.pipeline_config import (
    Settings,
    load_default_config,
    read_meta,
    write_meta,
    write_timings,
)
from d2qmm.scoring import Bm25Params
from d2qmm.search import search_bmw, search_exhaustive
from d2qmm.storage import index_size_bytes, load_index, save_index
from d2qmm.sweep import (
    BudgetEntry,
    budget_report,
    entries_from_cells,
    run_sweep,
    write_plot_data,
    write_sweep_csv,
)


def _fail(exc: Exception) -> None:
    record = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(record), err=True)
    sys.exit(1)


def _settings(config: str | None) -> Settings:
    if config:
        from d2qmm.pipeline_config import parse_config_file

        return Settings(parse_config_file(config))
    return Settings(load_default_config())


def _tokenizer(settings: Settings, stopwords, stem) -> TokenizerConfig:
    return TokenizerConfig(
        remove_stopwords=settings.get_bool("stopwords", stopwords, True),
        stem=settings.get_bool("stem", stem, False),
        stopword_list=DEFAULT_STOPWORDS,
    )


def _bm25(settings: Settings, k1, b) -> Bm25Params:
    return Bm25Params(
        k1=settings.get("k1", k1, 0.9, float),
        b=settings.get("b", b, 0.4, float),
    )


config_option = click.option(
    "--config", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Flat key=value config file (flags win). Defaults to $D2QMM_CONFIG.",
)


@click.group()
def main() -> None:
    """Filtered document-expansion retrieval pipeline."""


@main.command("demo-fixture")
@config_option
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--docs", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--topics", type=int, default=None)
@click.option("--seed", type=int, default=None)
def demo_fixture_cmd(config, out, docs, n, topics, seed):
    """Generate the deterministic synthetic corpus, queries, topics, qrels."""
    try:
        settings = _settings(config)
        docs = settings.get("docs", docs, 1000, int)
        n = settings.get("n", n, 8, int)
        topics = settings.get("topics", topics, 200, int)
        seed = settings.get("seed", seed, 7, int)
        fixture = build_demo_fixture(num_docs=docs, n=n, num_topics=topics, seed=seed)
        paths = fixture.write(out)
        for name, path in paths.items():
            write_meta(path, "demo-fixture", settings.effective)
        click.echo(json.dumps({name: str(p) for name, p in paths.items()}, sort_keys=True))
    except D2qError as exc:
        _fail(exc)


@main.command("expand")
@config_option
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", type=click.Path(exists=True), default=None,
              help="Existing query file to truncate to n (the file route).")
@click.option("--mock", is_flag=True, help="Use the deterministic mock generator.")
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--relevant-fraction", type=float, default=None)
@click.option("--noise-terms", type=int, default=None,
              help="Size of the synthetic noise vocabulary for --mock.")
@click.option("--out", required=True, type=click.Path())
def expand_cmd(config, corpus_path, queries_path, mock, n, seed, relevant_fraction,
               noise_terms, out):
    """Produce the per-document expansion-query file (JSONL)."""
    try:
        settings = _settings(config)
        n = settings.get("n", n, 8, int)
        corpus = corpus_io.load_corpus(corpus_path)
        import time as _time

        start = _time.perf_counter()
        if mock:
            seed = settings.get("seed", seed, 7, int)
            fraction = settings.get("relevant_fraction", relevant_fraction, 0.5, float)
            noise_terms = settings.get("noise_terms", noise_terms, 400, int)
            noise = tuple(f"z{i:04d}" for i in range(noise_terms))
            generator = MockQueryGenerator(
                MockGeneratorConfig(seed=seed, relevant_fraction=fraction, noise_vocabulary=noise)
            )
        elif queries_path:
            diag = corpus_io.Diagnostics()
            generator = FileQueryGenerator(corpus_io.load_queries(queries_path, n, diag))
        else:
            raise ConfigError("expand needs either --queries or --mock")
        sets = [
            corpus_io.GeneratedQuerySet(doc.doc_id, tuple(generator.expand(doc, n)))
            for doc in corpus
        ]
        corpus_io.write_queries(sets, out)
        elapsed = _time.perf_counter() - start
        write_meta(out, "expand", settings.effective)
        write_timings(out, {"generation_seconds": elapsed})
        click.echo(json.dumps({"documents": len(sets), "n": n, "out": str(out)}))
    except D2qError as exc:
        _fail(exc)


@main.command("score")
@config_option
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--n", type=int, default=None)
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--stopwords/--no-stopwords", default=None)
@click.option("--stem/--no-stem", default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def score_cmd(config, corpus_path, queries_path, n, k1, b, stopwords, stem, threads, out):
    """Score every (document, query) pair with the lexical relevance scorer."""
    try:
        settings = _settings(config)
        n = settings.get("n", n, 8, int)
        threads = settings.get("threads", threads, 1, int)
        tokenizer = _tokenizer(settings, stopwords, stem)
        params = _bm25(settings, k1, b)
        corpus = corpus_io.load_corpus(corpus_path)
        diag = corpus_io.Diagnostics()
        generator = FileQueryGenerator(corpus_io.load_queries(queries_path, n, diag))
        stats = CorpusStatistics.from_corpus(corpus, tokenizer)
        scorer = LexicalScorer(stats, params, tokenizer)
        run = score_all(corpus, generator, scorer, n, threads=threads)
        corpus_io.write_scores(run.pairs, out)
        write_meta(out, "score", settings.effective)
        write_timings(out, {"scoring_seconds": run.elapsed_seconds})
        click.echo(json.dumps({"pairs": len(run.pairs), "out": str(out)}))
    except D2qError as exc:
        _fail(exc)


@main.command("filter")
@config_option
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--n", type=int, default=None)
@click.option("--p", type=float, default=None)
@click.option("--t", type=float, default=None)
@click.option("--dedup", is_flag=True, default=False,
              help="Drop duplicate generated queries per document before scoring.")
@click.option("--out", required=True, type=click.Path())
def filter_cmd(config, corpus_path, queries_path, scores_path, n, p, t, dedup, out):
    """Apply the threshold and emit the expanded corpus (JSONL)."""
    try:
        settings = _settings(config)
        n = settings.get("n", n, 8, int)
        p = settings.get("p", p, None, float)
        t = settings.get("t", t, None, float)
        settings.effective["dedup"] = dedup
        corpus = corpus_io.load_corpus(corpus_path)
        diag = corpus_io.Diagnostics()
        generator = FileQueryGenerator(corpus_io.load_queries(queries_path, n, diag))
        scorer = ExternalScoreLookup(corpus_io.load_scores(scores_path))
        import time as _time

        start = _time.perf_counter()
        if t is None:
            if p is None:
                raise ConfigError("filter needs --p or --t")
            pairs = corpus_io.load_scores(scores_path)
            threshold = compute_threshold((pair.score for pair in pairs), p)
        else:
            if p is not None:
                raise ConfigError("exactly one of --p / --t may be given")
            threshold = t
        config_obj = FilterConfig(n=n, t=threshold)
        with open(out, "w", encoding="utf-8") as fh:
            count = 0
            for doc in filter_expand(corpus, generator, scorer, config_obj, dedup=dedup):
                fh.write(
                    json.dumps(
                        {
                            "docno": doc.doc_id,
                            "text": doc.original_text,
                            "queries_retained": list(doc.retained_queries),
                        }
                    )
                    + "\n"
                )
                count += 1
        elapsed = _time.perf_counter() - start
        write_meta(out, "filter", settings.effective, extra={"threshold": threshold})
        write_timings(out, {"filtering_seconds": elapsed})
        click.echo(json.dumps({"documents": count, "threshold": str(threshold), "out": str(out)}))
    except D2qError as exc:
        _fail(exc)


def _load_expanded(path: str | Path) -> list[ExpandedDocument]:
    docs: list[ExpandedDocument] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            docs.append(
                ExpandedDocument(
                    str(obj["docno"]),
                    str(obj["text"]),
                    tuple(str(q) for q in obj.get("queries_retained", [])),
                )
            )
    return docs


@main.command("index")
@config_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None,
              help="Raw corpus (no expansion).")
@click.option("--expanded", "expanded_path", type=click.Path(exists=True), default=None,
              help="Expanded corpus JSONL from the filter stage.")
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--stopwords/--no-stopwords", default=None)
@click.option("--stem/--no-stem", default=None)
@click.option("--block-size", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def index_cmd(config, corpus_path, expanded_path, k1, b, stopwords, stem, block_size,
              threads, out):
    """Build and serialize the inverted index."""
    try:
        settings = _settings(config)
        tokenizer = _tokenizer(settings, stopwords, stem)
        params = _bm25(settings, k1, b)
        block = settings.get("block_size", block_size, 128, int)
        threads = settings.get("threads", threads, 1, int)
        if (corpus_path is None) == (expanded_path is None):
            raise ConfigError("index needs exactly one of --corpus / --expanded")
        if expanded_path:
            docs = _load_expanded(expanded_path)
        else:
            docs = [
                ExpandedDocument(d.doc_id, d.text, ())
                for d in corpus_io.load_corpus(corpus_path)
            ]
        index = build_index(docs, tokenizer, params, block_size=block, threads=threads)
        save_index(index, out)
        write_meta(Path(out) / "index", "index", settings.effective)
        click.echo(
            json.dumps(
                {
                    "documents": index.doc_count,
                    "indexed_tokens": indexed_token_count(index),
                    "index_bytes": index_size_bytes(index),
                    "out": str(out),
                }
            )
        )
    except D2qError as exc:
        _fail(exc)


@main.command("search")
@config_option
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--topics", "topics_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=None)
@click.option("--tag", type=str, default=None)
@click.option("--algo", type=click.Choice(["bmw", "exhaustive"]), default="bmw")
@click.option("--stopwords/--no-stopwords", default=None,
              help="Must match the index if given; query analysis always uses the index config.")
@click.option("--stem/--no-stem", default=None)
@click.option("--out", required=True, type=click.Path())
def search_cmd(config, index_dir, topics_path, k, tag, algo, stopwords, stem, out):
    """Run topics against an index and write a TREC run file."""
    try:
        settings = _settings(config)
        k = settings.get("k", k, 1000, int)
        tag = settings.get("tag", tag, "d2qmm", str)
        index = load_index(index_dir)
        if stopwords is not None and stopwords != index.tokenizer.remove_stopwords:
            raise ConfigError("tokenizer mismatch: --stopwords conflicts with the index config")
        if stem is not None and stem != index.tokenizer.stem:
            raise ConfigError("tokenizer mismatch: --stem conflicts with the index config")
        topics = corpus_io.load_topics(topics_path)
        search_fn = search_bmw if algo == "bmw" else search_exhaustive
        results = {}
        for query_id, text in topics:
            results[query_id] = search_fn(index, tokenize(text, index.tokenizer), k)
        corpus_io.write_run(results, tag, out)
        index_meta = read_meta(Path(index_dir) / "index")
        write_meta(
            out,
            "search",
            settings.effective,
            extra={"index_config_hash": index_meta["config_hash"] if index_meta else None,
                   "tokenizer": {"remove_stopwords": index.tokenizer.remove_stopwords,
                                 "stem": index.tokenizer.stem}},
        )
        click.echo(json.dumps({"topics": len(topics), "k": k, "out": str(out)}))
    except D2qError as exc:
        _fail(exc)


@main.command("evaluate")
@config_option
@click.option("--run", "run_path", required=True, type=click.Path(exists=True))
@click.option("--qrels", "qrels_path", required=True, type=click.Path(exists=True))
@click.option("--rel-threshold", type=int, default=None)
@click.option("--compare", "compare_path", type=click.Path(exists=True), default=None,
              help="Second run for a paired t-test over per-query RR@10.")
@click.option("--force", is_flag=True, default=False,
              help="Compare runs even if their tokenizer configs differ.")
@click.option("--out", type=click.Path(), default=None)
def evaluate_cmd(config, run_path, qrels_path, rel_threshold, compare_path, force, out):
    """Compute RR@10 and nDCG@10 (optionally a paired t-test vs another run)."""
    try:
        settings = _settings(config)
        rel_threshold = settings.get("rel_threshold", rel_threshold, 1, int)
        run = corpus_io.load_run(run_path)
        qrels = corpus_io.load_qrels(qrels_path)
        ranked = {qid: [doc_id for doc_id, _ in hits] for qid, hits in run.items()}
        report = evaluate_run(ranked, qrels, rel_threshold)
        payload = report.to_dict()
        if compare_path:
            meta_a = read_meta(run_path)
            meta_b = read_meta(compare_path)
            if meta_a and meta_b and not force:
                tok_a = meta_a.get("tokenizer")
                tok_b = meta_b.get("tokenizer")
                if tok_a != tok_b:
                    raise ConfigError(
                        "runs were built under different tokenizer configs; pass --force to compare"
                    )
            other = corpus_io.load_run(compare_path)
            other_ranked = {qid: [d for d, _ in hits] for qid, hits in other.items()}
            other_report = evaluate_run(other_ranked, qrels, rel_threshold)
            shared = sorted(set(report.per_query_rr) & set(other_report.per_query_rr))
            ttest = paired_t_test(
                [report.per_query_rr[q] for q in shared],
                [other_report.per_query_rr[q] for q in shared],
            )
            payload["compare"] = {
                "run": str(compare_path),
                "mean_rr_at_10": other_report.mean_rr,
                "t_statistic": ttest.statistic,
                "p_value": ttest.p_value,
                "significant": ttest.significant,
                "alpha": ttest.alpha,
                "queries": len(shared),
            }
        if out:
            Path(out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
            write_meta(out, "evaluate", settings.effective)
        summary = {
            "mean_rr_at_10": round(report.mean_rr, 6),
            "mean_ndcg_at_10": round(report.mean_ndcg, 6),
            "judged_query_count": report.judged_query_count,
        }
        if compare_path:
            summary["compare_p_value"] = payload["compare"]["p_value"]
        click.echo(json.dumps(summary, sort_keys=True))
    except D2qError as exc:
        _fail(exc)


@main.command("sweep")
@config_option
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--scores", "scores_path", type=click.Path(exists=True), default=None,
              help="External score file; defaults to the lexical scorer.")
@click.option("--topics", "topics_path", required=True, type=click.Path(exists=True))
@click.option("--qrels", "qrels_path", required=True, type=click.Path(exists=True))
@click.option("--n-values", type=str, default=None, help="Comma-separated, e.g. 4,8.")
@click.option("--p-values", type=str, default=None, help="Comma-separated, e.g. 0,0.3,0.5,1.")
@click.option("--k", type=int, default=None)
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--stopwords/--no-stopwords", default=None)
@click.option("--stem/--no-stem", default=None)
@click.option("--block-size", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--rel-threshold", type=int, default=None)
@click.option("--measure-latency", is_flag=True, default=False,
              help="Fill mrt_ms (makes the CSV nondeterministic).")
@click.option("--warmup", type=int, default=None)
@click.option("--repetitions", type=int, default=None)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def sweep_cmd(config, corpus_path, queries_path, scores_path, topics_path, qrels_path,
              n_values, p_values, k, k1, b, stopwords, stem, block_size, threads,
              rel_threshold, measure_latency, warmup, repetitions, out_dir):
    """Run the pipeline across an (n, p) grid; emit CSV, plot data, budget entries."""
    try:
        settings = _settings(config)
        n_values = settings.get("n_values", n_values, "8", str)
        p_values = settings.get("p_values", p_values, "0,0.3,0.5,1", str)
        k = settings.get("k", k, 1000, int)
        threads = settings.get("threads", threads, 1, int)
        rel_threshold = settings.get("rel_threshold", rel_threshold, 1, int)
        warmup = settings.get("warmup", warmup, 1, int)
        repetitions = settings.get("repetitions", repetitions, 3, int)
        block = settings.get("block_size", block_size, 128, int)
        settings.effective["measure_latency"] = measure_latency
        tokenizer = _tokenizer(settings, stopwords, stem)
        params = _bm25(settings, k1, b)
        try:
            n_list = [int(x) for x in n_values.split(",") if x.strip()]
            p_list = [float(x) for x in p_values.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad n/p grid: {n_values!r} / {p_values!r}")
        if not n_list or not p_list:
            raise ConfigError("empty sweep grid")

        corpus = corpus_io.load_corpus(corpus_path)
        diag = corpus_io.Diagnostics()
        generator = FileQueryGenerator(
            corpus_io.load_queries(queries_path, max(n_list), diag)
        )
        if scores_path:
            scorer = ExternalScoreLookup(corpus_io.load_scores(scores_path))
        else:
            stats = CorpusStatistics.from_corpus(corpus, tokenizer)
            scorer = LexicalScorer(stats, params, tokenizer)
        topics = corpus_io.load_topics(topics_path)
        qrels = corpus_io.load_qrels(qrels_path)

        timings_path = Path(str(queries_path) + ".timings.json")
        gen_seconds = None
        if timings_path.exists():
            gen_seconds = json.loads(timings_path.read_text("utf-8")).get("generation_seconds")

        cells = run_sweep(
            corpus, generator, scorer, n_list, p_list, topics, qrels,
            tokenizer, params, k=k, block_size=block, threads=threads,
            rel_threshold=rel_threshold, measure_mrt=measure_latency,
            warmup=warmup, repetitions=repetitions, gen_seconds=gen_seconds,
        )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        plot_path = out / "plot_data.tsv"
        write_sweep_csv(cells, csv_path)
        write_plot_data(cells, plot_path)
        entries = entries_from_cells(cells)
        entries_path = out / "budget_entries.json"
        entries_path.write_text(
            json.dumps(
                [
                    {
                        "label": e.label, "n": e.n, "filter": e.filter_label,
                        "gen_seconds": e.gen_seconds, "filter_seconds": e.filter_seconds,
                        "rr_at_10": e.rr_at_10,
                    }
                    for e in entries
                ],
                indent=2,
            )
            + "\n"
        )
        for path in (csv_path, plot_path):
            write_meta(path, "sweep", settings.effective)
        errors = [f"n={c.n},p={c.p}: {c.error}" for c in cells if c.error]
        click.echo(
            json.dumps(
                {"cells": len(cells), "errors": errors, "csv": str(csv_path)}, sort_keys=True
            )
        )
    except D2qError as exc:
        _fail(exc)


@main.command("budget")
@config_option
@click.option("--entries", "entries_path", required=True, type=click.Path(exists=True),
              help="JSON list of {label, n, filter, gen_seconds, filter_seconds, rr_at_10}.")
@click.option("--out", type=click.Path(), default=None)
def budget_cmd(config, entries_path, out):
    """Pair filtered configurations with unfiltered ones of similar total cost."""
    try:
        settings = _settings(config)
        raw = json.loads(Path(entries_path).read_text("utf-8"))
        entries = [
            BudgetEntry(
                label=str(item["label"]),
                n=int(item["n"]),
                filter_label=item.get("filter"),
                gen_seconds=item.get("gen_seconds"),
                filter_seconds=item.get("filter_seconds"),
                rr_at_10=item.get("rr_at_10"),
            )
            for item in raw
        ]
        report = budget_report(entries)
        payload = report.to_dict()
        if out:
            Path(out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
            write_meta(out, "budget", settings.effective)
        click.echo(json.dumps(payload, sort_keys=True))
    except D2qError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
