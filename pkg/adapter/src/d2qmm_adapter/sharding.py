"""Resume-by-shard checkpointing.

Work is split into fixed-size shards of passages; each finished shard is
written atomically to a sidecar directory. A rerun skips complete shards,
so a crash mid-run (model failure, OOM) loses at most one shard of work.
Because shards are seeded independently, the resumed output is identical
to an uninterrupted run.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

_SHARD_TEMPLATE = "shard-{:05d}.jsonl"


def shard_dir_for(out_path: str | Path) -> Path:
    return Path(str(out_path) + ".shards")


def chunked(items: Sequence[T], size: int) -> list[Sequence[T]]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def run_sharded(
    items: Sequence[T],
    out_path: str | Path,
    checkpoint_every: int,
    produce: Callable[[int, Sequence[T]], list[str]],
    expected_lines: Callable[[Sequence[T]], int] = len,
) -> tuple[list[Path], int]:
    """Run `produce(shard_index, shard_items) -> lines` per shard, skipping
    shards already on disk with the expected line count. Returns the shard
    paths in order and how many were reused."""
    shards = chunked(items, checkpoint_every)
    shard_dir = shard_dir_for(out_path)
    shard_dir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    reused = 0
    for index, shard_items in enumerate(shards):
        path = shard_dir / _SHARD_TEMPLATE.format(index)
        paths.append(path)
        if path.exists():
            lines = path.read_text("utf-8").splitlines()
            if len(lines) == expected_lines(shard_items):
                reused += 1
                continue
        lines = produce(index, shard_items)
        tmp = path.with_suffix(".tmp")
        tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        os.replace(tmp, path)
    return paths, reused
