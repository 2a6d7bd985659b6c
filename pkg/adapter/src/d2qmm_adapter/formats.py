"""The pipeline's external file formats, reimplemented here so the adapter
stays decoupled from the pipeline package: corpus TSV/JSONL in, query and
score JSONL out."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from d2qmm_adapter.errors import AdapterError


def read_corpus(path: str | Path) -> list[tuple[str, str]]:
    """(doc_id, text) rows in file order; TSV splits on the first TAB only."""
    path = Path(path)
    jsonl = path.name.endswith((".jsonl", ".jsonl.gz"))
    rows: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if jsonl:
                obj = json.loads(line)
                rows.append((str(obj["docno"]), str(obj["text"])))
            else:
                if "\t" not in line:
                    raise AdapterError(f"{path}:{lineno}: expected doc_id<TAB>text")
                doc_id, text = line.split("\t", 1)
                rows.append((doc_id, text))
    return rows


def parse_slice(spec: str | None, total: int) -> range:
    """Corpus slice 'start:end' over file order; None means everything."""
    if spec is None:
        return range(total)
    try:
        start_str, end_str = spec.split(":", 1)
        start = int(start_str) if start_str else 0
        end = int(end_str) if end_str else total
    except ValueError:
        raise AdapterError(f"bad corpus slice {spec!r}, expected start:end")
    if not 0 <= start <= end <= total:
        raise AdapterError(f"slice {spec!r} out of range for {total} passages")
    return range(start, end)


def read_queries(path: str | Path, n: int) -> dict[str, list[str]]:
    queries: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            queries[str(obj["docno"])] = [str(q) for q in obj["queries"]][:n]
    return queries


def query_line(doc_id: str, queries: list[str]) -> str:
    return json.dumps({"docno": doc_id, "queries": queries})


def score_line(doc_id: str, query_index: int, score: float) -> str:
    return json.dumps({"docno": doc_id, "query_index": query_index, "score": score})


def write_timings(out_path: str | Path, fields: dict) -> None:
    Path(str(out_path) + ".timings.json").write_text(
        json.dumps(fields, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def merge_shards(shard_paths: Iterable[Path], out_path: str | Path) -> None:
    """Deterministic concatenation in shard order."""
    with open(out_path, "w", encoding="utf-8") as out:
        for shard in shard_paths:
            out.write(shard.read_text("utf-8"))
