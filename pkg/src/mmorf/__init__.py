"""Multi-agent, multi-objective retrosynthesis planning over a token chemistry world."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a bundled fixture (worlds, manifests, scenarios)."""
    return Path(str(resources.files("mmorf") / "data" / name))
