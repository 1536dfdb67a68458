"""Access to the bundled example networks, traces and scenario configs."""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled data file (e.g. ``sixbus.net``)."""
    p = Path(str(files("gridvolt").joinpath("data", name)))
    if not p.exists():
        available = ", ".join(sorted(q.name for q in p.parent.iterdir()))
        raise FileNotFoundError(f"no bundled file {name!r}; have: {available}")
    return p


def bundled_networks() -> list[str]:
    base = Path(str(files("gridvolt").joinpath("data")))
    return sorted(p.name for p in base.glob("*.net"))
