"""Live Wikidata adapter issuing fixed query templates (search and entity fetch).

It fetches metadata and item-valued claims and can assemble a local
:class:`KnowledgeGraph` around a set of seed entities, so the same tools run
against live data. It shares the provider rate limiter.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Literal

import httpx

from kgverify.graph import EntityRecord, KnowledgeGraph, RelationRecord, Triple
from kgverify.providers import LIVE_REQUEST_LIMIT, ProviderError

WIKIDATA_API = "https://www.wikidata.org/w/api.php"
MAX_IDS_PER_REQUEST = 50


@dataclass(frozen=True)
class SearchHit:
    id: str
    label: str
    description: str = ""


@dataclass(frozen=True)
class WikidataEntity:
    id: str
    label: str
    description: str
    aliases: tuple[str, ...]
    claims: tuple[tuple[str, str], ...]
    """Item-valued statements as (property id, target id)."""

    def triples(self) -> list[Triple]:
        return [Triple(self.id, p, o) for p, o in self.claims]


class WikidataClient:
    def __init__(
        self,
        endpoint: str = WIKIDATA_API,
        language: str = "en",
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.language = language
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._cache: dict[str, WikidataEntity] = {}
        self._lock = threading.Lock()

    def _get(self, params: dict[str, str]) -> dict:
        with LIVE_REQUEST_LIMIT:
            try:
                resp = self._client.get(self.endpoint, params={**params, "format": "json"})
                resp.raise_for_status()
                data = resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                raise ProviderError(f"wikidata request failed: {exc}") from exc
        if "error" in data:
            raise ProviderError(f"wikidata error: {data['error'].get('info', data['error'])}")
        return data

    def search(self, name: str, kind: Literal["item", "property"] = "item", limit: int = 5) -> list[SearchHit]:
        """Candidate identifiers for a surface name, in endpoint rank order."""
        data = self._get({
            "action": "wbsearchentities", "search": name, "language": self.language,
            "type": kind, "limit": str(limit),
        })
        return [SearchHit(h["id"], h.get("label", h["id"]), h.get("description", "")) for h in data.get("search", [])]

    def entities(self, ids: Iterable[str]) -> dict[str, WikidataEntity]:
        wanted = list(dict.fromkeys(ids))
        with self._lock:
            missing = [i for i in wanted if i not in self._cache]
        for start in range(0, len(missing), MAX_IDS_PER_REQUEST):
            chunk = missing[start:start + MAX_IDS_PER_REQUEST]
            data = self._get({
                "action": "wbgetentities", "ids": "|".join(chunk), "languages": self.language,
                "props": "labels|descriptions|aliases|claims",
            })
            parsed = {eid: self._parse(eid, body) for eid, body in data.get("entities", {}).items() if "missing" not in body}
            with self._lock:
                self._cache.update(parsed)
        with self._lock:
            return {i: self._cache[i] for i in wanted if i in self._cache}

    def _parse(self, eid: str, body: dict) -> WikidataEntity:
        lang = self.language
        label = body.get("labels", {}).get(lang, {}).get("value", eid)
        desc = body.get("descriptions", {}).get(lang, {}).get("value", "")
        aliases = tuple(a["value"] for a in body.get("aliases", {}).get(lang, []))
        claims = []
        for prop, statements in sorted(body.get("claims", {}).items()):
            for st in statements:
                value = st.get("mainsnak", {}).get("datavalue", {}).get("value")
                if isinstance(value, dict) and value.get("id"):
                    claims.append((prop, value["id"]))
        return WikidataEntity(eid, label, desc, aliases, tuple(claims))

    def subgraph(self, seeds: Iterable[str], hops: int = 1, typing_relations: Iterable[str] = ("P31",)) -> KnowledgeGraph:
        """Graph of item claims reachable from ``seeds`` within ``hops`` outgoing steps."""
        frontier = list(dict.fromkeys(seeds))
        seen: dict[str, WikidataEntity] = {}
        for _ in range(hops + 1):
            fetched = self.entities(i for i in frontier if i not in seen)
            seen.update(fetched)
            frontier = [o for e in fetched.values() for _, o in e.claims if o not in seen]
            if not frontier:
                break
        triples = [t for e in seen.values() for t in e.triples() if t.tail in seen]
        props = sorted({t.relation for t in triples})
        prop_meta = self.entities(props) if props else {}
        ents = [EntityRecord(e.id, e.label, e.description, e.aliases) for e in seen.values()]
        rels = [RelationRecord(p.id, p.label, p.description, p.aliases) for p in prop_meta.values()]
        return KnowledgeGraph.from_triples(triples, ents, rels, typing_relations)
