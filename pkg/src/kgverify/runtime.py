"""Turn a :class:`RunConfig` into live objects: graph, encoder, providers, memory, backends."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from kgverify.agent import Ablations, AgentEnv, SessionConfig
from kgverify.config import CLI_MODES, ConfigError, RunConfig
from kgverify.encoders import (
    Encoder,
    HashingEncoder,
    PrecomputedEncoder,
    RemoteEncoder,
    SentenceTransformerEncoder,
)
from kgverify.graph import KnowledgeGraph, Triple, load_graph
from kgverify.llm import Backend, Pricing, RemoteBackend, ScriptLibrary
from kgverify.memory import MemoryBank, load_memory
from kgverify.providers import (
    LiveWebProvider,
    LiveWikiProvider,
    OfflineWebProvider,
    OfflineWikiProvider,
    WebProvider,
    WikiProvider,
)
from kgverify.retrieval import HybridConfig
from kgverify.tools import ToolEnv, ToolLimits


def build_graph(cfg: RunConfig) -> KnowledgeGraph:
    return load_graph(cfg.triples, cfg.entities, cfg.relations, cfg.typing_relations, cfg.cache)


def build_encoder(cfg: RunConfig) -> Encoder:
    if cfg.encoder == "hashing":
        return HashingEncoder(cfg.encoder_dimension)
    if cfg.encoder == "precomputed":
        return PrecomputedEncoder.from_tsv(cfg.encoder_path)
    if cfg.encoder == "remote":
        if not cfg.encoder_url:
            raise ValueError("remote encoder needs encoder_url")
        return RemoteEncoder(cfg.encoder_url, cfg.encoder_dimension, cfg.encoder_model)
    return SentenceTransformerEncoder(cfg.encoder_model)


def build_wiki(cfg: RunConfig) -> WikiProvider | None:
    if cfg.wiki == "offline":
        return OfflineWikiProvider.from_tsv(cfg.wiki_path)
    if cfg.wiki == "live":
        return LiveWikiProvider(cfg.wiki_url)
    return None


def build_web(cfg: RunConfig) -> WebProvider | None:
    if cfg.web == "offline":
        return OfflineWebProvider.from_tsv(cfg.web_path)
    if cfg.web == "live":
        return LiveWebProvider(cfg.web_url, cfg.web_api_key_env)
    return None


def session_config(cfg: RunConfig) -> SessionConfig:
    return SessionConfig(
        t_max=cfg.t_max,
        k_memory=cfg.k_memory,
        ablations=Ablations.without(cfg.ablate),
        mode=CLI_MODES[cfg.mode],
        impression_preask=cfg.impression_preask,
        temperature=cfg.temperature,
        max_output_tokens=cfg.max_output_tokens,
        config_checksum=cfg.checksum(),
    )


def pricing(cfg: RunConfig) -> Pricing:
    return Pricing.per_million(cfg.price_input_per_million, cfg.price_output_per_million, cfg.currency)


def target_key(t: Triple) -> str:
    return f"{t.head}|{t.relation}|{t.tail}"


def backend_factory(cfg: RunConfig) -> Callable[[Triple], Backend]:
    """One backend per session: a scripted playback keyed by target, or a shared remote client."""
    if cfg.llm == "scripted":
        if not cfg.script:
            raise ConfigError("scripted llm needs a script file")
        library = ScriptLibrary.from_jsonl(cfg.script)
        return lambda t: library.backend(target_key(t))
    remote = RemoteBackend(cfg.llm_base_url, cfg.llm_model, cfg.llm_api_key_env, retries=cfg.llm_retries)
    return lambda t: remote


@dataclass
class Runtime:
    config: RunConfig
    graph: KnowledgeGraph
    env: AgentEnv
    session: SessionConfig
    backends: Callable[[Triple], Backend]


def build_runtime(cfg: RunConfig, graph: KnowledgeGraph | None = None) -> Runtime:
    g = graph if graph is not None else build_graph(cfg)
    enc = build_encoder(cfg)
    limits = ToolLimits(
        neighbor_limit=cfg.neighbor_limit, max_paths=cfg.max_paths, degree_cap=cfg.degree_cap,
        tau_words=cfg.tau, min_similarity=cfg.min_similarity,
    )
    tools = ToolEnv(g, enc, build_wiki(cfg), build_web(cfg), limits=limits,
                    hybrid=HybridConfig(cfg.alpha, cfg.k1, cfg.b))
    memory: MemoryBank | None = load_memory(cfg.memory, enc) if cfg.memory else None
    return Runtime(cfg, g, AgentEnv(tools, memory), session_config(cfg), backend_factory(cfg))
