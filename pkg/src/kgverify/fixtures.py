"""Bundled offline fixtures: a small Wikidata-style graph, text corpora, memory and model scripts."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from kgverify.config import RunConfig, load_config
from kgverify.graph import Triple

ELON_CEO_TESLA = Triple("Q317521", "P169", "Q478214")
KEMP_PARENT_GLIRICIDIA = Triple("Q1761125", "P171", "Q12549487")


def fixture_dir() -> Path:
    return Path(str(resources.files("kgverify").joinpath("data", "fixtures")))


def fixture_path(name: str) -> Path:
    p = fixture_dir() / name
    if not p.exists():
        raise FileNotFoundError(p)
    return p


def fixture_config(**overrides) -> RunConfig:
    """The shipped offline configuration, optionally overridden."""
    cfg = load_config(fixture_path("config.yaml"))
    return cfg.with_overrides(overrides) if overrides else cfg
