"""Agentic verification of knowledge-graph triples.

An LLM-driven agent plans, calls a hybrid toolset over the graph and external
text, and returns a verdict with an evidence chain. The package also ships the
benchmark harness: type-constrained negative sampling, metrics, threshold search
and tool/cost statistics.
"""

from kgverify.graph import (
    EntityRecord,
    KnowledgeGraph,
    RelationRecord,
    Triple,
    contains,
    load_graph,
    neighbors,
    resolve,
)

__version__ = "0.1.0"

__all__ = [
    "EntityRecord",
    "KnowledgeGraph",
    "RelationRecord",
    "Triple",
    "contains",
    "load_graph",
    "neighbors",
    "resolve",
    "__version__",
]
