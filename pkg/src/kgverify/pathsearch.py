"""Bounded bidirectional path search between two entities.

The enumeration kernel is compiled (``kgverify._pathcore``) when the extension
was built and pure Python otherwise; set ``KGVERIFY_PURE_PYTHON=1`` to force
the fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from kgverify import _pathcore_py
from kgverify.graph import NO_EXCLUSION, KnowledgeGraph, Triple

if os.environ.get("KGVERIFY_PURE_PYTHON") == "1":
    _kernel = _pathcore_py.enumerate_paths
    KERNEL = "python"
else:
    try:
        from kgverify._pathcore import enumerate_paths as _kernel

        KERNEL = "compiled"
    except ImportError:
        _kernel = _pathcore_py.enumerate_paths
        KERNEL = "python"

Direction = Literal["forward", "backward"]


@dataclass(frozen=True, order=True)
class Hop:
    source: str
    relation: str
    direction: Direction
    target: str

    def triple(self) -> Triple:
        if self.direction == "forward":
            return Triple(self.source, self.relation, self.target)
        return Triple(self.target, self.relation, self.source)


@dataclass(frozen=True, order=True)
class Path:
    hops: tuple[Hop, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.hops) <= 3:
            raise ValueError("paths have 1 to 3 hops")
        for prev, nxt in zip(self.hops, self.hops[1:]):
            if prev.target != nxt.source:
                raise ValueError("hops do not chain")

    @property
    def length(self) -> int:
        return len(self.hops)

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.hops[0].source, *(h.target for h in self.hops))

    def triples(self) -> list[Triple]:
        return [h.triple() for h in self.hops]

    def render(self, label) -> str:
        """Arrow rendering; ``label`` maps identifiers to display names."""
        if len(self.hops) == 1:
            h = self.hops[0]
            arrow = f"--> [{label(h.relation)}] -->" if h.direction == "forward" else f"<-- [{label(h.relation)}] <--"
            return f"({label(h.source)}) {arrow} ({label(h.target)})"
        parts = [f"({label(self.hops[0].source)})"]
        for h in self.hops:
            rel = label(h.relation)
            parts.append(f"--[{rel}]-->" if h.direction == "forward" else f"<--[{rel}]--")
            parts.append(f"({label(h.target)})")
        return " ".join(parts)


_DIRS: dict[int, Direction] = {1: "forward", 0: "backward"}


def _cap_value(degree_cap: float | int | None) -> int:
    if degree_cap is None or (isinstance(degree_cap, float) and math.isinf(degree_cap)):
        return -1
    return int(degree_cap)


def find_paths(
    g: KnowledgeGraph,
    a: str,
    b: str,
    exclude: frozenset[Triple] = NO_EXCLUSION,
    max_hops: int = 3,
    max_paths: int | None = 20,
    degree_cap: float | int | None = None,
    kernel=None,
) -> list[Path]:
    """Simple paths of at most ``max_hops`` hops between ``a`` and ``b``.

    Shortest first; within a length, lexicographic on hop identifiers. Nodes of
    degree above ``degree_cap`` may be endpoints but never interior nodes.
    Excluded triples never appear as hops.
    """
    if max_hops not in (1, 2, 3):
        raise ValueError("max_hops must be 1, 2 or 3")
    if a == b or a not in g.entities or b not in g.entities:
        return []
    adj = g.adjacency
    ex_rows = [
        (adj.entity_index[t.head], adj.relation_index[t.relation], adj.entity_index[t.tail])
        for t in exclude
        if t.head in adj.entity_index and t.tail in adj.entity_index and t.relation in adj.relation_index
    ]
    fn = kernel or _kernel
    if fn is _pathcore_py.enumerate_paths:
        arrays = adj.python_lists()
    else:
        arrays = (adj.indptr, adj.other, adj.rel, adj.forward, adj.degree)
    raw = fn(
        *arrays,
        adj.entity_index[a], adj.entity_index[b], max_hops, _cap_value(degree_cap),
        np.asarray(ex_rows, dtype=np.int64).reshape(-1, 3), max_paths or 0,
    )
    if max_paths:
        raw = raw[:max_paths]
    ents, rels = adj.entity_ids, adj.relation_ids
    return [
        Path(tuple(Hop(ents[u], rels[r], _DIRS[f], ents[v]) for u, r, f, v in hops))
        for hops in raw
    ]
