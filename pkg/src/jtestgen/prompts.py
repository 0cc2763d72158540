"""Prompt templates: plain text files with ``{{name}}`` placeholders."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")
TEMPLATE_NAMES = ("seed", "seed_repair", "branch_intentions", "function_intention", "steer", "test_repair")


def load_template(name: str, directory: Path | None = None) -> str:
    if directory is not None:
        path = Path(directory) / f"{name}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
    return resources.files("jtestgen").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER.findall(template))


def render(template: str, **values: str) -> str:
    """Substitute every placeholder; unknown or missing names are errors."""
    missing = placeholders(template) - values.keys()
    if missing:
        raise KeyError(f"template placeholders without values: {sorted(missing)}")
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


class Templates:
    """Template lookup with an optional override directory."""

    def __init__(self, directory: Path | None = None):
        self.directory = directory
        self._cache: dict[str, str] = {}

    def __getitem__(self, name: str) -> str:
        if name not in self._cache:
            self._cache[name] = load_template(name, self.directory)
        return self._cache[name]
