"""Bridge configuration: checkpoint, serving and training settings."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

ENV_PREFIX = "MVABSA_BRIDGE_"


@dataclass(frozen=True)
class BridgeConfig:
    checkpoint: str
    device: str = "cpu"
    max_length: int = 512
    port: int = 8191
    host: str = "127.0.0.1"
    # training defaults for full-data runs
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-4

    def __post_init__(self) -> None:
        if not self.checkpoint:
            raise ValueError("checkpoint is required")
        if not 0 < self.port < 65536:
            raise ValueError(f"invalid port {self.port}")
        if self.max_length < 8:
            raise ValueError("max_length too small to hold marker sequences")


_FIELD_TYPES = {
    "checkpoint": str,
    "device": str,
    "max_length": int,
    "port": int,
    "host": str,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
}


def read_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def bridge_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    **overrides,
) -> BridgeConfig:
    """File values, overridden by MVABSA_BRIDGE_* variables, then kwargs."""
    env = os.environ if env is None else env
    values: dict = dict(read_config_file(path)) if path else {}
    for field, caster in _FIELD_TYPES.items():
        env_key = ENV_PREFIX + field.upper()
        if env_key in env:
            values[field] = env[env_key]
        if field in overrides and overrides[field] is not None:
            values[field] = overrides[field]
    kwargs = {}
    for field, caster in _FIELD_TYPES.items():
        if field in values:
            kwargs[field] = caster(values[field])
    return BridgeConfig(**kwargs)
