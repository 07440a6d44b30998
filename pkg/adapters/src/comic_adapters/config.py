"""Adapter-local configuration: which channels serve which model artifacts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CONFIG_SCHEMA = "adapter_config_v1"


class AdapterConfigError(Exception):
    """Raised when an adapter cannot be configured as asked."""


@dataclass
class AdapterConfig:
    name: str = "models"
    image_root: Path | None = None  # base for relative page-image paths in requests
    artifacts: dict[str, Path] = field(default_factory=dict)  # channel -> artifact
    concurrency: int = 1


def load_adapter_config(path: str | Path) -> AdapterConfig:
    """Read a config file; relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise AdapterConfigError(f"adapter config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise AdapterConfigError(f"adapter config {path} is not valid JSON: {exc}") from None
    if not isinstance(rec, dict) or rec.get("schema") != CONFIG_SCHEMA:
        raise AdapterConfigError(
            f"adapter config {path} has schema {rec.get('schema') if isinstance(rec, dict) else rec!r},"
            f" expected {CONFIG_SCHEMA!r}"
        )

    base = path.parent

    def resolve(p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    models = rec.get("models", {})
    if not isinstance(models, dict):
        raise AdapterConfigError(f"adapter config {path}: models must map channel to settings")
    artifacts: dict[str, Path] = {}
    for channel, sub in models.items():
        if not isinstance(sub, dict) or "artifact" not in sub:
            raise AdapterConfigError(
                f"adapter config {path}: channel {channel!r} needs an artifact path"
            )
        artifacts[channel] = resolve(sub["artifact"])

    try:
        concurrency = int(rec.get("concurrency", 1))
    except (TypeError, ValueError):
        raise AdapterConfigError(f"adapter config {path}: concurrency must be an integer") from None
    if concurrency < 1:
        raise AdapterConfigError(f"adapter config {path}: concurrency must be >= 1")

    image_root = rec.get("image_root")
    return AdapterConfig(
        name=str(rec.get("name", "models")),
        image_root=resolve(image_root) if image_root else None,
        artifacts=artifacts,
        concurrency=concurrency,
    )
