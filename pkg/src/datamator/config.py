"""Service/engine configuration: TOML file plus environment overrides.

Environment variables use the ``DATAMATOR_`` prefix and override file
values (e.g. ``DATAMATOR_THETA=0.6``, ``DATAMATOR_REMOTE_ENDPOINT=...``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ENV_PREFIX = "DATAMATOR_"


@dataclass(frozen=True)
class RemoteModelConfig:
    endpoint: str
    api_key_env: str = "DATAMATOR_API_KEY"
    timeout_ms: int = 10_000
    beam_size: int = 5
    retry_budget: int = 1


@dataclass(frozen=True)
class Config:
    canvas_width: int = 640
    canvas_height: int = 480
    theta: float = 0.5
    rules_first: bool = True
    tie_policy: str = "keep_all"
    persist_dir: Optional[str] = None
    remote: Optional[RemoteModelConfig] = None


def _env(name: str) -> Optional[str]:
    return os.environ.get(ENV_PREFIX + name)


def load_config(path: Optional[str | Path] = None) -> Config:
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)

    def pick(key: str, cast, default):
        env = _env(key.upper())
        if env is not None:
            return cast(env)
        if key in data:
            return cast(data[key])
        return default

    remote = None
    remote_data = dict(data.get("remote", {}))
    endpoint = _env("REMOTE_ENDPOINT") or remote_data.get("endpoint")
    if endpoint:
        remote = RemoteModelConfig(
            endpoint=endpoint,
            api_key_env=_env("REMOTE_API_KEY_ENV")
            or remote_data.get("api_key_env", "DATAMATOR_API_KEY"),
            timeout_ms=int(_env("REMOTE_TIMEOUT_MS") or remote_data.get("timeout_ms", 10_000)),
            beam_size=int(_env("REMOTE_BEAM_SIZE") or remote_data.get("beam_size", 5)),
            retry_budget=int(
                _env("REMOTE_RETRY_BUDGET") or remote_data.get("retry_budget", 1)
            ),
        )

    return Config(
        canvas_width=pick("canvas_width", int, 640),
        canvas_height=pick("canvas_height", int, 480),
        theta=pick("theta", float, 0.5),
        rules_first=pick("rules_first", lambda v: str(v).lower() not in ("0", "false"), True),
        tie_policy=pick("tie_policy", str, "keep_all"),
        persist_dir=pick("persist_dir", str, None),
        remote=remote,
    )
