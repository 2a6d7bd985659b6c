"""Grid sweeps over (n, p) and the compute-budget comparison report.

Each sweep cell runs the full pipeline once: score, threshold, filter,
index, retrieve, evaluate. The CSV schema is
`n,p,t,indexed_tokens,index_bytes,rr_at_10,ndcg_at_10,mrt_ms`; the plot
data file pairs total indexed tokens with RR@10 per cell. Latency
measurement is optional because timings are inherently nondeterministic;
with it disabled the emitted files are byte-deterministic.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from d2qmm.analysis import TokenizerConfig, tokenize
from d2qmm.corpus_io import Corpus, Qrels
from d2qmm.errors import ConfigError
from d2qmm.evaluation import evaluate_run, measure_latency
from d2qmm.expansion import QueryGenerator
from d2qmm.filtering import (
    FilterConfig,
    RelevanceScorer,
    compute_threshold,
    filter_expand,
    score_all,
)
from d2qmm.index import build_index, indexed_token_count
from d2qmm.scoring import Bm25Params
from d2qmm.search import search_bmw
from d2qmm.storage import index_size_bytes

logger = logging.getLogger(__name__)


@dataclass
class SweepCell:
    n: int
    p: float
    t: float | None = None
    indexed_tokens: int | None = None
    index_bytes: int | None = None
    rr_at_10: float | None = None
    ndcg_at_10: float | None = None
    mrt_ms: float | None = None
    gen_seconds: float | None = None
    filter_seconds: float | None = None
    run: dict[str, list[str]] = field(default_factory=dict)
    error: str | None = None


def run_sweep(
    corpus: Corpus,
    generator: QueryGenerator,
    scorer: RelevanceScorer,
    n_values: Sequence[int],
    p_values: Sequence[float],
    topics: Sequence[tuple[str, str]],
    qrels: Qrels | None,
    tokenizer: TokenizerConfig,
    params: Bm25Params,
    k: int = 1000,
    block_size: int = 128,
    threads: int = 1,
    rel_threshold: int = 1,
    measure_mrt: bool = False,
    warmup: int = 1,
    repetitions: int = 3,
    gen_seconds: float | None = None,
) -> list[SweepCell]:
    """One pipeline execution per (n, p) grid cell.

    A failing cell records its error and the sweep continues. `gen_seconds`
    is the externally measured generation time (per n it is prorated by
    n / max(n_values)) so the budget report can pair configurations.
    """
    cells: list[SweepCell] = []
    max_n = max(n_values) if n_values else 0
    for n in n_values:
        # p in {0, 1} resolves to a sentinel threshold without scores, so a
        # scoring failure only poisons the cells that actually need scores.
        score_run = None
        score_error: str | None = None
        if any(0.0 < p < 1.0 for p in p_values):
            try:
                score_run = score_all(corpus, generator, scorer, n, threads=threads)
            except Exception as exc:
                score_error = f"{type(exc).__name__}: {exc}"
                logger.error("sweep scoring for n=%s failed: %s", n, score_error)
        scores = [pair.score for pair in score_run.pairs] if score_run else []
        cell_gen_seconds = None
        if gen_seconds is not None and max_n:
            cell_gen_seconds = gen_seconds * n / max_n
        for p in p_values:
            cell = SweepCell(n=n, p=p, gen_seconds=cell_gen_seconds)
            cells.append(cell)
            if 0.0 < p < 1.0 and score_error is not None:
                cell.error = score_error
                continue
            try:
                cell.t = compute_threshold(iter(scores), p)
                cell.filter_seconds = (
                    score_run.elapsed_seconds if 0.0 < p < 1.0 else 0.0
                )
                config = FilterConfig(n=n, t=cell.t)
                expanded = filter_expand(corpus, generator, scorer, config)
                index = build_index(
                    expanded, tokenizer, params, block_size=block_size, threads=threads
                )
                cell.indexed_tokens = indexed_token_count(index)
                cell.index_bytes = index_size_bytes(index)
                run: dict[str, list[str]] = {}
                run_scored: dict[str, list[tuple[str, float]]] = {}
                for query_id, text in topics:
                    hits = search_bmw(index, tokenize(text, tokenizer), k)
                    run[query_id] = [doc_id for doc_id, _ in hits]
                    run_scored[query_id] = hits
                cell.run = run
                if qrels is not None:
                    report = evaluate_run(run, qrels, rel_threshold)
                    cell.rr_at_10 = report.mean_rr
                    cell.ndcg_at_10 = report.mean_ndcg
                if measure_mrt:
                    latency = measure_latency(
                        index, list(topics), k, warmup=warmup, repetitions=repetitions
                    )
                    cell.mrt_ms = latency.mean_ms
            except Exception as exc:  # cell isolation: others continue
                cell.error = f"{type(exc).__name__}: {exc}"
                logger.error("sweep cell (n=%s, p=%s) failed: %s", n, p, cell.error)
    return cells


def _fmt_float(value: float | None, spec: str) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, spec)


def write_sweep_csv(cells: Sequence[SweepCell], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n", "p", "t", "indexed_tokens", "index_bytes", "rr_at_10", "ndcg_at_10", "mrt_ms"]
        )
        for cell in cells:
            writer.writerow(
                [
                    cell.n,
                    _fmt_float(cell.p, "g"),
                    _fmt_float(cell.t, ".6g"),
                    "" if cell.indexed_tokens is None else cell.indexed_tokens,
                    "" if cell.index_bytes is None else cell.index_bytes,
                    _fmt_float(cell.rr_at_10, ".6f"),
                    _fmt_float(cell.ndcg_at_10, ".6f"),
                    _fmt_float(cell.mrt_ms, ".1f"),
                ]
            )


def write_plot_data(cells: Sequence[SweepCell], path: str | Path) -> None:
    """TSV of `tokens<TAB>rr_at_10<TAB>label` (the trade-off curve axes)."""
    with open(path, "w", encoding="utf-8") as fh:
        for cell in cells:
            if cell.indexed_tokens is None or cell.rr_at_10 is None:
                continue
            label = f"n={cell.n},p={_fmt_float(cell.p, 'g')}"
            fh.write(f"{cell.indexed_tokens}\t{cell.rr_at_10:.6f}\t{label}\n")


# ---------------------------------------------------------------------------
# Compute-budget comparison: pair each filtered configuration with the
# unfiltered configuration whose total time comes closest, then report the
# effectiveness delta bought by spending the filtering time on generation
# instead.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetEntry:
    label: str
    n: int
    filter_label: str | None  # None marks an unfiltered configuration
    gen_seconds: float | None
    filter_seconds: float | None
    rr_at_10: float | None = None

    @property
    def unfiltered(self) -> bool:
        return self.filter_label is None

    @property
    def total_seconds(self) -> float | None:
        if self.gen_seconds is None:
            return None
        if self.unfiltered:
            return self.gen_seconds + (self.filter_seconds or 0.0)
        if self.filter_seconds is None:
            return None
        return self.gen_seconds + self.filter_seconds


@dataclass
class BudgetRow:
    entry: BudgetEntry
    matched: BudgetEntry | None
    comparable: bool
    delta_rr: float | None

    def to_dict(self) -> dict:
        return {
            "label": self.entry.label,
            "n": self.entry.n,
            "filter": self.entry.filter_label,
            "gen_seconds": self.entry.gen_seconds,
            "filter_seconds": self.entry.filter_seconds,
            "total_seconds": self.entry.total_seconds,
            "rr_at_10": self.entry.rr_at_10,
            "matched_label": self.matched.label if self.matched else None,
            "matched_total_seconds": self.matched.total_seconds if self.matched else None,
            "matched_rr_at_10": self.matched.rr_at_10 if self.matched else None,
            "comparable": self.comparable,
            "delta_rr_at_10": self.delta_rr,
        }


@dataclass
class BudgetReport:
    rows: list[BudgetRow]

    def to_dict(self) -> dict:
        return {"rows": [row.to_dict() for row in self.rows]}


def budget_report(entries: Sequence[BudgetEntry]) -> BudgetReport:
    """Pair configurations by closest total compute time.

    Filtered entries match against the unfiltered pool (ties resolved
    toward the larger total, which keeps the matching monotone in budget);
    unfiltered entries pair with themselves at delta 0. Entries without
    timings are marked not comparable.
    """
    pool = [e for e in entries if e.unfiltered and e.total_seconds is not None]
    rows: list[BudgetRow] = []
    for entry in entries:
        if entry.unfiltered:
            comparable = entry.total_seconds is not None
            delta = 0.0 if comparable and entry.rr_at_10 is not None else None
            rows.append(BudgetRow(entry, entry if comparable else None, comparable, delta))
            continue
        total = entry.total_seconds
        if total is None or not pool:
            rows.append(BudgetRow(entry, None, False, None))
            continue
        matched = min(pool, key=lambda e: (abs(e.total_seconds - total), -e.total_seconds))
        delta = None
        if entry.rr_at_10 is not None and matched.rr_at_10 is not None:
            delta = entry.rr_at_10 - matched.rr_at_10
        rows.append(BudgetRow(entry, matched, True, delta))
    return BudgetReport(rows)


def entries_from_cells(cells: Sequence[SweepCell]) -> list[BudgetEntry]:
    """Build budget entries from sweep cells; p=1 cells form the unfiltered pool."""
    entries = []
    for cell in cells:
        if cell.error is not None:
            continue
        unfiltered = cell.p == 1.0
        entries.append(
            BudgetEntry(
                label=f"n={cell.n},p={_fmt_float(cell.p, 'g')}",
                n=cell.n,
                filter_label=None if unfiltered else f"p={_fmt_float(cell.p, 'g')}",
                gen_seconds=cell.gen_seconds,
                filter_seconds=cell.filter_seconds,
                rr_at_10=cell.rr_at_10,
            )
        )
    return entries


def sweep_identity_check(cells: Sequence[SweepCell]) -> None:
    """Sanity: p=0 rows must all equal the no-expansion baseline shape."""
    baselines = {}
    for cell in cells:
        if cell.p == 0.0 and cell.error is None:
            baselines.setdefault(cell.indexed_tokens, []).append(cell.n)
    if len(baselines) > 1:
        raise ConfigError(f"p=0 cells disagree on indexed tokens: {baselines}")
