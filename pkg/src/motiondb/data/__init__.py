"""Bundled sample table, schema and default configuration."""

from importlib import resources
from pathlib import Path


def path(name: str) -> Path:
    return Path(str(resources.files(__name__).joinpath(name)))


def sample_table():
    from ..crypto import read_table
    return read_table(path("sample.csv"), path("sample.schema.json"))
