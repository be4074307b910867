"""Shipped example configurations (JSON)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

NAMES = ("default", "generative", "burst")


def config_path(name: str) -> Path:
    """Path of a shipped config: ``default`` (classifier), ``generative`` or ``burst``."""
    if name not in NAMES:
        raise KeyError(f"no shipped config {name!r}; choose from {NAMES}")
    return Path(str(resources.files(__package__) / f"{name}.json"))
