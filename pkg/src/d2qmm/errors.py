"""Exception hierarchy shared across the pipeline stages."""


class D2qError(Exception):
    """Base class for all pipeline errors."""


class FormatError(D2qError):
    """Malformed input file (carries file path and line number when known)."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingScoreError(D2qError):
    """A (doc_id, query_index) pair required for filtering has no score."""


class ConfigError(D2qError):
    """Invalid or inconsistent configuration."""


class IndexIntegrityError(D2qError):
    """Serialized index failed validation (checksum, version, or invariant)."""
