"""Pipeline configuration: a flat key-value config file, flag overrides
(flags win), a deterministic serialization with content hash, and the
provenance sidecars written next to every data output.

Data outputs themselves never carry provenance (their byte formats are
fixed); each output `X` gets a deterministic `X.meta.json` sidecar with
the config hash, and commands that record wall-clock time write a separate
`X.timings.json`, which is a log artifact and exempt from byte determinism.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Mapping

from d2qmm.errors import ConfigError

CONFIG_ENV_VAR = "D2QMM_CONFIG"


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


def load_default_config() -> dict[str, str]:
    path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    if not Path(path).exists():
        raise ConfigError(f"{CONFIG_ENV_VAR} names a missing file: {path}")
    return parse_config_file(path)


class Settings:
    """Effective option values: explicit flag > config file > default."""

    def __init__(self, file_values: Mapping[str, str]):
        self._file = dict(file_values)
        self.effective: dict[str, Any] = {}

    def get(self, key: str, flag_value, default=None, cast=None):
        if flag_value is not None:
            value = flag_value
        elif key in self._file:
            value = self._file[key]
            if cast is not None:
                try:
                    value = cast(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"config key {key!r} has invalid value {value!r}")
        else:
            value = default
        self.effective[key] = value
        return value

    def get_bool(self, key: str, flag_value, default=False) -> bool:
        def cast(raw: str) -> bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)

        return self.get(key, flag_value, default, cast)


def canonical_config(effective: Mapping[str, Any]) -> str:
    return json.dumps(effective, sort_keys=True, default=str)


def config_hash(effective: Mapping[str, Any]) -> str:
    return hashlib.sha256(canonical_config(effective).encode("utf-8")).hexdigest()[:16]


def write_meta(output_path: str | Path, command: str, effective: Mapping[str, Any],
               extra: Mapping[str, Any] | None = None) -> Path:
    """Write the deterministic provenance sidecar for a data output."""
    meta = {
        "command": command,
        "config": dict(sorted(effective.items(), key=lambda kv: kv[0])),
        "config_hash": config_hash(effective),
    }
    if extra:
        meta.update(extra)
    meta_path = Path(str(output_path) + ".meta.json")
    meta_path.write_text(
        json.dumps(meta, sort_keys=True, indent=2, default=str) + "\n", encoding="utf-8"
    )
    return meta_path


def write_timings(output_path: str | Path, timings: Mapping[str, float]) -> Path:
    timings_path = Path(str(output_path) + ".timings.json")
    timings_path.write_text(
        json.dumps(dict(timings), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return timings_path


def read_meta(output_path: str | Path) -> dict | None:
    meta_path = Path(str(output_path) + ".meta.json")
    if not meta_path.exists():
        return None
    return json.loads(meta_path.read_text("utf-8"))
