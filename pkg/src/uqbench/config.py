"""Key-value override files: one ``section.key = value`` per line.

Values are parsed as Python literals (numbers, lists, strings); anything
that fails to parse is kept as a raw string.  ``#`` starts a comment.
Sections are free-form: ``train.lr`` tunes hyperparameters, and a
corruption kind as section overrides its severity table, e.g.
``gaussian_noise.sigma = [0.05, 0.1, 0.15, 0.2, 0.3]``.
"""

from __future__ import annotations

import ast

from .corruptions import DEFAULT_TABLES

__all__ = ["parse_config", "severity_tables_from_config"]


def parse_config(path) -> dict[str, object]:
    overrides: dict[str, object] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'section.key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if "." not in key:
                raise ValueError(f"{path}:{lineno}: key {key!r} is missing a section")
            value = value.strip()
            try:
                overrides[key] = ast.literal_eval(value)
            except (ValueError, SyntaxError):
                overrides[key] = value
    return overrides


def severity_tables_from_config(overrides: dict[str, object]) -> dict[str, dict[str, tuple]]:
    """Merge ``kind.param = [5 values]`` overrides into the default tables."""
    tables = {kind: dict(params) for kind, params in DEFAULT_TABLES.items()}
    for key, value in overrides.items():
        section, _, param = key.partition(".")
        if section not in tables:
            continue
        if param not in tables[section]:
            raise ValueError(f"unknown severity parameter {key!r}")
        if not isinstance(value, (list, tuple)) or len(value) != 5:
            raise ValueError(f"{key!r} must be a list of 5 severity values")
        tables[section][param] = tuple(value)
    return tables
