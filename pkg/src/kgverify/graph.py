"""Knowledge graph storage: loading, indexing, membership, neighbours and name resolution."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import pickle
import threading
import weakref
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Literal, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from kgverify.retrieval import Encoder

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"KGVCACHE"
CACHE_VERSION = 1

Kind = Literal["entity", "relation"]


class GraphLoadError(ValueError):
    """Raised for malformed graph or metadata files."""


class ResolutionError(LookupError):
    """Raised when a surface name cannot be mapped to an identifier."""


@dataclass(frozen=True, slots=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        if not (self.head and self.relation and self.tail):
            raise ValueError(f"triple identifiers must be non-empty: {self!r}")

    def as_dict(self) -> dict[str, str]:
        return {"head": self.head, "relation": self.relation, "tail": self.tail}


ExclusionSet = frozenset
"""Triples suppressed from every query result (anti-leakage). Plain ``frozenset[Triple]``."""

NO_EXCLUSION: frozenset[Triple] = frozenset()


@dataclass(frozen=True)
class EntityRecord:
    id: str
    label: str
    description: str = ""
    aliases: tuple[str, ...] = ()
    type_signature: tuple[str, ...] = ()


@dataclass(frozen=True)
class RelationRecord:
    id: str
    label: str
    description: str = ""
    aliases: tuple[str, ...] = ()
    domain_types: frozenset[str] = frozenset()
    range_types: frozenset[str] = frozenset()


class Edge(NamedTuple):
    direction: Literal["out", "in"]
    relation: str
    other: str

    def triple(self, anchor: str) -> Triple:
        if self.direction == "out":
            return Triple(anchor, self.relation, self.other)
        return Triple(self.other, self.relation, anchor)


def normalize_name(text: str) -> str:
    """Case-fold and collapse internal whitespace."""
    return " ".join(text.casefold().split())


@dataclass
class _Adjacency:
    """Integer CSR view of the undirected incidence structure, used by the path kernel.

    Entity and relation indices follow the sorted order of their identifiers, so
    integer comparison agrees with identifier comparison.
    """

    entity_ids: list[str]
    entity_index: dict[str, int]
    relation_ids: list[str]
    relation_index: dict[str, int]
    indptr: np.ndarray
    other: np.ndarray
    rel: np.ndarray
    forward: np.ndarray
    degree: np.ndarray
    _lists: tuple | None = field(default=None, repr=False)

    def python_lists(self) -> tuple[list, list, list, list, list]:
        """Plain-list copies for the pure-Python kernel (numpy scalar access is slow)."""
        if self._lists is None:
            self._lists = (
                self.indptr.tolist(), self.other.tolist(), self.rel.tolist(),
                self.forward.tolist(), self.degree.tolist(),
            )
        return self._lists


@dataclass(eq=False)
class KnowledgeGraph:
    """Immutable (after construction) directed multigraph with metadata catalogs."""

    triples: frozenset[Triple]
    out_index: dict[str, list[tuple[str, str]]]
    in_index: dict[str, list[tuple[str, str]]]
    entities: dict[str, EntityRecord]
    relations: dict[str, RelationRecord]
    degree: dict[str, int]
    typing_relations: frozenset[str] = frozenset()
    _adjacency: _Adjacency | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _exact: dict[Kind, tuple[dict[str, list[str]], dict[str, list[str]]]] = field(default_factory=dict, repr=False)
    _label_vectors: weakref.WeakKeyDictionary = field(default_factory=weakref.WeakKeyDictionary, repr=False)

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[Triple],
        entities: Iterable[EntityRecord] = (),
        relations: Iterable[RelationRecord] = (),
        typing_relations: Iterable[str] = (),
    ) -> KnowledgeGraph:
        """Build all indices from a triple set and (possibly partial) metadata."""
        fact_set = frozenset(triples)
        typing = frozenset(typing_relations)
        out_index: dict[str, list[tuple[str, str]]] = defaultdict(list)
        in_index: dict[str, list[tuple[str, str]]] = defaultdict(list)
        for t in sorted(fact_set):
            out_index[t.head].append((t.relation, t.tail))
            in_index[t.tail].append((t.relation, t.head))
        out_index = dict(out_index)
        in_index = dict(in_index)

        ent_catalog = {e.id: e for e in entities}
        rel_catalog = {r.id: r for r in relations}
        for t in fact_set:
            for eid in (t.head, t.tail):
                if eid not in ent_catalog:
                    ent_catalog[eid] = EntityRecord(id=eid, label=eid)
            if t.relation not in rel_catalog:
                rel_catalog[t.relation] = RelationRecord(id=t.relation, label=t.relation)

        if typing:
            for eid, rec in list(ent_catalog.items()):
                sig = tuple(sorted({tail for rel, tail in out_index.get(eid, ()) if rel in typing}))
                if sig != rec.type_signature:
                    ent_catalog[eid] = EntityRecord(rec.id, rec.label, rec.description, rec.aliases, sig)

        degree = {
            eid: len(out_index.get(eid, ())) + len(in_index.get(eid, ()))
            for eid in ent_catalog
        }
        g = cls(
            triples=fact_set,
            out_index=out_index,
            in_index=in_index,
            entities=dict(sorted(ent_catalog.items())),
            relations=dict(sorted(rel_catalog.items())),
            degree=degree,
            typing_relations=typing,
        )
        g._adjacency = _build_adjacency(g)
        return g

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def adjacency(self) -> _Adjacency:
        if self._adjacency is None:
            self._adjacency = _build_adjacency(self)
        return self._adjacency

    def label(self, identifier: str) -> str:
        """Label of an entity or relation, or the raw identifier when unknown."""
        rec = self.entities.get(identifier) or self.relations.get(identifier)
        return rec.label if rec is not None else identifier

    def summary(self) -> dict[str, int]:
        return {"entities": len(self.entities), "relations": len(self.relations), "triples": len(self.triples)}


def _build_adjacency(g: KnowledgeGraph) -> _Adjacency:
    entity_ids = list(g.entities)
    entity_index = {e: i for i, e in enumerate(entity_ids)}
    relation_ids = list(g.relations)
    relation_index = {r: i for i, r in enumerate(relation_ids)}
    n = len(entity_ids)
    deg = np.zeros(n, dtype=np.int64)
    for eid, d in g.degree.items():
        deg[entity_index[eid]] = d
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    m = int(indptr[-1])
    other = [0] * m
    rel = [0] * m
    forward = [0] * m
    cursor = indptr[:-1].tolist()
    for t in g.triples:
        h, r, tl = entity_index[t.head], relation_index[t.relation], entity_index[t.tail]
        k = cursor[h]
        other[k], rel[k], forward[k] = tl, r, 1
        cursor[h] = k + 1
        k = cursor[tl]
        other[k], rel[k], forward[k] = h, r, 0
        cursor[tl] = k + 1
    return _Adjacency(
        entity_ids, entity_index, relation_ids, relation_index, indptr,
        np.asarray(other, dtype=np.int64), np.asarray(rel, dtype=np.int64),
        np.asarray(forward, dtype=np.int8), deg,
    )


# --------------------------------------------------------------------------- loading


def _read_lines(path: str | os.PathLike) -> Iterable[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def read_triples(path: str | os.PathLike) -> list[Triple]:
    """Parse a ``head<TAB>relation<TAB>tail`` file."""
    out = []
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphLoadError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            out.append(Triple(*(p.strip() for p in parts)))
        except ValueError as exc:
            raise GraphLoadError(f"{path}:{lineno}: {exc}") from None
    return out


def _split_aliases(field_text: str) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for a in field_text.split("|"):
        a = a.strip()
        if a:
            seen.setdefault(a, None)
    return tuple(seen)


def read_entity_meta(path: str | os.PathLike) -> list[EntityRecord]:
    """Parse ``id<TAB>label<TAB>description<TAB>alias1|alias2``."""
    records: dict[str, EntityRecord] = {}
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) < 2 or len(parts) > 4:
            raise GraphLoadError(f"{path}:{lineno}: expected 2-4 tab-separated fields, got {len(parts)}")
        parts += [""] * (4 - len(parts))
        eid, label, desc, aliases = (p.strip() for p in parts)
        if not eid or not label:
            raise GraphLoadError(f"{path}:{lineno}: id and label must be non-empty")
        if eid in records:
            raise GraphLoadError(f"{path}:{lineno}: duplicate metadata id {eid!r}")
        records[eid] = EntityRecord(eid, label, desc, _split_aliases(aliases))
    return list(records.values())


def read_relation_meta(path: str | os.PathLike) -> list[RelationRecord]:
    """Parse relation metadata.

    Same four leading columns as entity metadata, plus two optional columns
    holding ``|``-separated domain and range type identifiers.
    """
    records: dict[str, RelationRecord] = {}
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) < 2 or len(parts) > 6:
            raise GraphLoadError(f"{path}:{lineno}: expected 2-6 tab-separated fields, got {len(parts)}")
        parts += [""] * (6 - len(parts))
        rid, label, desc, aliases, dom, rng = (p.strip() for p in parts)
        if not rid or not label:
            raise GraphLoadError(f"{path}:{lineno}: id and label must be non-empty")
        if rid in records:
            raise GraphLoadError(f"{path}:{lineno}: duplicate metadata id {rid!r}")
        records[rid] = RelationRecord(
            rid, label, desc, _split_aliases(aliases),
            frozenset(_split_aliases(dom)), frozenset(_split_aliases(rng)),
        )
    return list(records.values())


def _fingerprint(paths: Iterable[str | os.PathLike | None]) -> list[dict]:
    out = []
    for p in paths:
        if p is None:
            out.append(None)
            continue
        digest = hashlib.sha256()
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
        out.append({"path": str(Path(p).resolve()), "size": os.path.getsize(p), "sha256": digest.hexdigest()})
    return out


def load_graph(
    triples_path: str | os.PathLike,
    entity_meta_path: str | os.PathLike | None = None,
    relation_meta_path: str | os.PathLike | None = None,
    typing_relations: Iterable[str] = (),
    cache_path: str | os.PathLike | None = None,
) -> KnowledgeGraph:
    """Load a graph from TSV files, optionally through a binary index cache.

    The cache header records the source fingerprints (size and SHA-256) and the
    typing relations; any change forces a rebuild.
    """
    typing = sorted(set(typing_relations))
    sources = [triples_path, entity_meta_path, relation_meta_path]
    for p in sources:
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(p)
    header = None
    if cache_path is not None:
        header = {"version": CACHE_VERSION, "sources": _fingerprint(sources), "typing": typing}
        cached = _read_cache(cache_path, header)
        if cached is not None:
            logger.info("index cache hit: %s", cache_path)
            return cached

    triples = read_triples(triples_path)
    entities = read_entity_meta(entity_meta_path) if entity_meta_path else []
    relations = read_relation_meta(relation_meta_path) if relation_meta_path else []
    g = KnowledgeGraph.from_triples(triples, entities, relations, typing)
    if cache_path is not None:
        write_cache(g, cache_path, header)
    return g


def write_cache(g: KnowledgeGraph, cache_path: str | os.PathLike, header: dict) -> None:
    payload = {
        "triples": sorted(g.triples),
        "entities": list(g.entities.values()),
        "relations": list(g.relations.values()),
        "typing": sorted(g.typing_relations),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{cache_path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(len(head).to_bytes(4, "little"))
        fh.write(head)
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, cache_path)


def read_cache_header(cache_path: str | os.PathLike) -> dict | None:
    try:
        with open(cache_path, "rb") as fh:
            if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
                return None
            n = int.from_bytes(fh.read(4), "little")
            return json.loads(fh.read(n).decode("utf-8"))
    except (OSError, ValueError):
        return None


def _read_cache(cache_path: str | os.PathLike, header: dict) -> KnowledgeGraph | None:
    if read_cache_header(cache_path) != header:
        return None
    with open(cache_path, "rb") as fh:
        fh.read(len(CACHE_MAGIC))
        n = int.from_bytes(fh.read(4), "little")
        fh.read(n)
        payload = pickle.load(fh)
    g = KnowledgeGraph.from_triples(payload["triples"], payload["entities"], payload["relations"], payload["typing"])
    return g


# --------------------------------------------------------------------------- queries


def contains(g: KnowledgeGraph, t: Triple) -> bool:
    """Ground-truth membership; never filtered by an exclusion set."""
    return t in g.triples


def neighbors(
    g: KnowledgeGraph, entity: str, exclude: frozenset[Triple] = NO_EXCLUSION
) -> tuple[list[Edge], bool]:
    """All 1-hop edges of ``entity`` in both directions, minus excluded triples.

    Returns ``(edges, found)``; ``found`` is False for entities absent from the catalog.
    Edges are ordered by relation id, then other-entity id, out before in.
    """
    if entity not in g.entities:
        return [], False
    edges = [Edge("out", r, t) for r, t in g.out_index.get(entity, ())]
    edges += [Edge("in", r, h) for r, h in g.in_index.get(entity, ())]
    if exclude:
        edges = [e for e in edges if e.triple(entity) not in exclude]
    edges.sort(key=lambda e: (e.relation, e.other, e.direction != "out"))
    return edges, True


def _exact_tables(g: KnowledgeGraph, kind: Kind) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    tables = g._exact.get(kind)
    if tables is None:
        catalog = g.entities if kind == "entity" else g.relations
        by_label: dict[str, list[str]] = defaultdict(list)
        by_alias: dict[str, list[str]] = defaultdict(list)
        for rid, rec in catalog.items():
            by_label[normalize_name(rec.label)].append(rid)
            for a in rec.aliases:
                by_alias[normalize_name(a)].append(rid)
        tables = (dict(by_label), dict(by_alias))
        g._exact[kind] = tables
    return tables


def _label_matrix(g: KnowledgeGraph, kind: Kind, encoder: Encoder) -> tuple[list[str], np.ndarray, np.ndarray]:
    with g._lock:
        per_encoder = g._label_vectors.setdefault(encoder, {})
        cached = per_encoder.get(kind)
        if cached is None:
            catalog = g.entities if kind == "entity" else g.relations
            ids = list(catalog)
            mat = encoder.encode([catalog[i].label for i in ids]) if ids else np.zeros((0, encoder.dimension))
            norms = np.linalg.norm(mat, axis=1)
            cached = (ids, mat, norms)
            per_encoder[kind] = cached
    return cached


def resolve_exact(g: KnowledgeGraph, name: str, kind: Kind) -> str | None:
    """Stage-one lookup: identifier, then normalized label, then normalized alias."""
    catalog = g.entities if kind == "entity" else g.relations
    stripped = name.strip()
    if stripped in catalog:
        return stripped
    key = normalize_name(name)
    by_label, by_alias = _exact_tables(g, kind)
    for table in (by_label, by_alias):
        hits = table.get(key)
        if hits:
            return min(hits)
    return None


def resolve(
    g: KnowledgeGraph,
    name: str,
    kind: Kind,
    encoder: Encoder,
    min_similarity: float | None = None,
) -> str:
    """Map a surface name to an entity or relation identifier.

    Exact (normalized) match on identifiers, labels and aliases first; otherwise the
    label with maximum encoder cosine wins, ties going to the smallest identifier.
    ``min_similarity`` rejects weak semantic matches.
    """
    if not name or not name.strip():
        raise ResolutionError("empty name")
    catalog = g.entities if kind == "entity" else g.relations
    if not catalog:
        raise ResolutionError(f"empty {kind} catalog")
    hit = resolve_exact(g, name, kind)
    if hit is not None:
        return hit

    ids, mat, norms = _label_matrix(g, kind, encoder)
    q = encoder.encode([name])[0]
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        raise ResolutionError(f"no {kind} matches {name!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (mat @ q) / (norms * qn)
    sims = np.where(norms > 0, sims, -np.inf)
    best = int(np.argmax(sims))
    score = float(sims[best])
    if not np.isfinite(score) or (min_similarity is not None and score < min_similarity):
        raise ResolutionError(f"no {kind} matches {name!r}")
    return ids[best]

