"""Bundled example data: the Valencia day-tour task, its ontology repository,
knowledge edges, object facts, and a two-event scenario."""

from importlib import resources
from pathlib import Path


def fixture_path(*parts: str) -> Path:
    """Absolute path of a bundled fixture file or directory."""
    root = resources.files(__name__)
    target = root.joinpath("/".join(parts))
    return Path(str(target))
