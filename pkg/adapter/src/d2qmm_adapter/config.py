from __future__ import annotations

from dataclasses import dataclass

from d2qmm_adapter.errors import AdapterError

SCORER_KINDS = ("cross-encoder", "bi-encoder")


@dataclass(frozen=True)
class AdapterConfig:
    """Model roles, batching, sampling, and determinism settings.

    Model ids are hub names or local paths (both load the same way). In
    deterministic mode every shard is seeded independently so a resumed run
    regenerates identical output, and nondeterministic kernels are disabled
    where the runtime permits it.
    """

    generator_model: str | None = None
    scorer_model: str | None = None
    scorer_kind: str = "cross-encoder"
    n: int = 8
    batch_size: int = 8
    device: str = "cpu"
    # top-k sampling, the setting family used for released expansion queries
    top_k: int = 10
    max_new_tokens: int = 16
    min_new_tokens: int = 2
    max_input_tokens: int = 256
    deterministic: bool = True
    seed: int = 0
    corpus_slice: str | None = None
    checkpoint_every: int = 64

    def __post_init__(self):
        if self.n < 1:
            raise AdapterError(f"n must be >= 1, got {self.n}")
        if self.batch_size < 1:
            raise AdapterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 1:
            raise AdapterError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.scorer_kind not in SCORER_KINDS:
            raise AdapterError(f"scorer_kind must be one of {SCORER_KINDS}")


def apply_determinism(config: AdapterConfig, shard_index: int) -> None:
    """Seed torch per shard; a resumed run reproduces each shard exactly."""
    import torch

    if not config.deterministic:
        return
    torch.manual_seed(config.seed * 100_003 + shard_index)
    try:
        torch.use_deterministic_algorithms(True, warn_only=True)
    except TypeError:  # older torch without warn_only
        pass
