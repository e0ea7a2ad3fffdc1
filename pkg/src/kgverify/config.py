"""Run configuration: one declarative file, flag overrides, and a stable checksum.

Relative paths in a config file resolve against the file's directory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

ENCODERS = ("hashing", "precomputed", "remote", "sbert")
WIKI_BACKINGS = ("none", "offline", "live")
WEB_BACKINGS = ("none", "offline", "live")
LLM_BACKENDS = ("scripted", "remote")
CLI_MODES = {"agent": "agent", "rag": "rag-baseline", "zeroshot": "zero-shot"}
ABLATIONS = ("memory", "planning", "kg", "external")

_PATH_FIELDS = (
    "triples", "entities", "relations", "test_positives", "cache", "memory",
    "wiki_path", "web_path", "script", "encoder_path", "out_dir",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every knob of a run. Defaults reproduce the reference settings."""

    # dataset
    dataset: str = "dataset"
    triples: str = ""
    entities: str | None = None
    relations: str | None = None
    typing_relations: list[str] = field(default_factory=lambda: ["P31"])
    test_positives: str | None = None
    cache: str | None = None
    memory: str | None = None
    # encoder and providers
    encoder: str = "hashing"
    encoder_dimension: int = 256
    encoder_path: str | None = None
    encoder_url: str | None = None
    encoder_model: str = "sentence-transformers/all-MiniLM-L6-v2"
    wiki: str = "none"
    wiki_path: str | None = None
    wiki_url: str = "https://en.wikipedia.org/w/api.php"
    web: str = "none"
    web_path: str | None = None
    web_url: str | None = None
    web_api_key_env: str = "KGVERIFY_SEARCH_KEY"
    # retrieval and tools
    alpha: float = 0.5
    k1: float = 1.2
    b: float = 0.75
    tau: int = 50
    neighbor_limit: int = 20
    max_paths: int = 20
    degree_cap: int | None = 1000
    min_similarity: float = 0.35
    # agent
    k_memory: int = 3
    t_max: int = 10
    mode: str = "agent"
    ablate: list[str] = field(default_factory=list)
    impression_preask: bool = False
    # model gateway
    llm: str = "scripted"
    script: str | None = None
    llm_base_url: str = "https://api.openai.com/v1"
    llm_model: str = "gpt-4o"
    llm_api_key_env: str = "KGVERIFY_API_KEY"
    llm_retries: int = 3
    temperature: float = 0.0
    max_output_tokens: int = 1024
    price_input_per_million: float = 0.0
    price_output_per_million: float = 0.0
    currency: str = "USD"
    # run
    concurrency: int = 50
    seed: int = 0
    n: int = 1000
    exclude_known_facts: bool = True
    out_dir: str = "runs"

    def validate(self) -> RunConfig:
        checks = [
            (self.encoder in ENCODERS, f"encoder must be one of {ENCODERS}"),
            (self.wiki in WIKI_BACKINGS, f"wiki must be one of {WIKI_BACKINGS}"),
            (self.web in WEB_BACKINGS, f"web must be one of {WEB_BACKINGS}"),
            (self.llm in LLM_BACKENDS, f"llm must be one of {LLM_BACKENDS}"),
            (self.mode in CLI_MODES, f"mode must be one of {tuple(CLI_MODES)}"),
            (all(a in ABLATIONS for a in self.ablate), f"ablate entries must be among {ABLATIONS}"),
            (0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (self.t_max >= 1 and self.k_memory >= 1, "t_max and k_memory must be >= 1"),
            (self.concurrency >= 1, "concurrency must be >= 1"),
            (self.n >= 1, "n must be >= 1"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.wiki != "offline" or bool(self.wiki_path), "offline wiki needs wiki_path"),
            (self.web != "offline" or bool(self.web_path), "offline web needs web_path"),
            (self.web != "live" or bool(self.web_url), "live web needs web_url"),
            (self.encoder != "precomputed" or bool(self.encoder_path), "precomputed encoder needs encoder_path"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def checksum(self) -> str:
        """SHA-256 over the canonical JSON form (first 16 hex digits)."""
        blob = json.dumps(self.as_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Apply non-None overrides (e.g. command-line flags)."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **changes).validate()


def _resolve_paths(d: dict[str, Any], base: Path) -> dict[str, Any]:
    out = dict(d)
    for key in _PATH_FIELDS:
        v = out.get(key)
        if isinstance(v, str) and v and not os.path.isabs(v):
            out[key] = str((base / v).resolve())
    return out


def config_from_mapping(d: Mapping[str, Any], base: str | os.PathLike | None = None) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values = _resolve_paths(dict(d), Path(base)) if base is not None else dict(d)
    try:
        return RunConfig(**values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read YAML or JSON (JSON is valid YAML); ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data, Path(path).resolve().parent)
