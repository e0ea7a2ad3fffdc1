"""External text evidence: a Wikipedia-like corpus and a web search backend.

Each kind has an offline backing read from a fixture file (fully deterministic)
and a live backing that talks HTTP through ``httpx``. Live backings share one
process-wide limiter on in-flight requests.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import Protocol

import httpx

from kgverify.graph import normalize_name

LIVE_REQUEST_LIMIT = threading.BoundedSemaphore(8)


class ProviderError(RuntimeError):
    """Transport or protocol failure in a live provider."""


@dataclass(frozen=True)
class WikiArticle:
    title: str
    text: str

    @property
    def paragraphs(self) -> list[str]:
        return [p.strip() for p in self.text.split("\n") if p.strip()]

    @property
    def infobox(self) -> list[tuple[str, str]]:
        """``key = value`` fields of an ``Infobox:`` paragraph, when the corpus has one."""
        for p in self.paragraphs:
            if p.startswith("Infobox:"):
                fields = []
                for item in p[len("Infobox:"):].split(";"):
                    key, sep, value = item.partition("=")
                    if sep and key.strip() and value.strip():
                        fields.append((key.strip(), value.strip()))
                return fields
        return []

    @property
    def body(self) -> list[str]:
        return [p for p in self.paragraphs if not p.startswith("Infobox:")]


@dataclass(frozen=True)
class WebSnippet:
    text: str
    source: str = "unknown"


class WikiProvider(Protocol):
    kind: str

    def article(self, title: str) -> WikiArticle | None: ...

    def articles(self) -> list[WikiArticle]: ...


class WebProvider(Protocol):
    kind: str

    def search(self, question: str, k: int) -> list[WebSnippet]: ...


def _unescape(field: str) -> str:
    return field.replace("\\n", "\n").replace("\\t", "\t")


class OfflineWikiProvider:
    """Corpus file with one ``title<TAB>full-text`` record per line.

    ``\\n`` inside the text separates paragraphs.
    """

    kind = "wiki-corpus"

    def __init__(self, articles: list[WikiArticle]) -> None:
        self._articles = list(articles)
        self._by_title: dict[str, WikiArticle] = {}
        for art in self._articles:
            self._by_title.setdefault(normalize_name(art.title), art)

    @classmethod
    def from_tsv(cls, path: str | os.PathLike) -> OfflineWikiProvider:
        arts = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                title, sep, text = line.partition("\t")
                if not sep or not title.strip():
                    raise ValueError(f"{path}:{lineno}: expected title<TAB>text")
                arts.append(WikiArticle(title.strip(), _unescape(text)))
        return cls(arts)

    def article(self, title: str) -> WikiArticle | None:
        return self._by_title.get(normalize_name(title))

    def articles(self) -> list[WikiArticle]:
        return list(self._articles)


def _split_snippet(raw: str) -> WebSnippet:
    text = raw.strip()
    marker = " (Source: "
    if text.endswith(")") and marker in text:
        body, _, src = text.rpartition(marker)
        return WebSnippet(body.strip().strip('"'), src[:-1].strip() or "unknown")
    return WebSnippet(text.strip('"'))


class OfflineWebProvider:
    """Canned results: ``normalized-question<TAB>snippet1 ||| snippet2 ...``.

    A snippet may end in ``(Source: X)`` to carry its source tag.
    """

    kind = "web-search"

    def __init__(self, table: dict[str, list[WebSnippet]]) -> None:
        self._table = {normalize_name(q): list(v) for q, v in table.items()}

    @classmethod
    def from_tsv(cls, path: str | os.PathLike) -> OfflineWebProvider:
        table: dict[str, list[WebSnippet]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                q, sep, rest = line.partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected question<TAB>snippets")
                table[q] = [_split_snippet(s) for s in rest.split("|||") if s.strip()]
        return cls(table)

    def search(self, question: str, k: int) -> list[WebSnippet]:
        return self._table.get(normalize_name(question), [])[: max(k, 0)]


class LiveWikiProvider:
    """MediaWiki ``action=query`` plain-text extracts."""

    kind = "wiki-corpus"

    def __init__(
        self,
        endpoint: str = "https://en.wikipedia.org/w/api.php",
        timeout: float = 20.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport, headers={"User-Agent": "kgverify/0.1"})
        self._cache: dict[str, WikiArticle | None] = {}
        self._lock = threading.Lock()

    def article(self, title: str) -> WikiArticle | None:
        key = normalize_name(title)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        params = {
            "action": "query", "prop": "extracts", "explaintext": 1, "redirects": 1,
            "format": "json", "titles": title,
        }
        try:
            with LIVE_REQUEST_LIMIT:
                resp = self._client.get(self.endpoint, params=params)
            resp.raise_for_status()
            pages = resp.json().get("query", {}).get("pages", {})
        except (httpx.HTTPError, ValueError) as exc:
            raise ProviderError(f"wiki request failed: {exc}") from exc
        art = None
        for page in pages.values():
            if "missing" not in page and page.get("extract"):
                art = WikiArticle(page.get("title", title), page["extract"])
                break
        with self._lock:
            self._cache[key] = art
        return art

    def articles(self) -> list[WikiArticle]:
        """Live corpora are not enumerable; only articles fetched so far are visible."""
        with self._lock:
            return [a for a in self._cache.values() if a is not None]


class LiveWebProvider:
    """Search endpoint returning ``{"items": [{"snippet", "displayLink"|"source"}]}``.

    The API key is read from ``api_key_env`` at call time and sent as ``key``.
    """

    kind = "web-search"

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "KGVERIFY_SEARCH_KEY",
        extra_params: dict[str, str] | None = None,
        timeout: float = 20.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.extra_params = dict(extra_params or {})
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def search(self, question: str, k: int) -> list[WebSnippet]:
        params = {"q": question, "num": k, **self.extra_params}
        key = os.environ.get(self.api_key_env)
        if key:
            params["key"] = key
        try:
            with LIVE_REQUEST_LIMIT:
                resp = self._client.get(self.endpoint, params=params)
            resp.raise_for_status()
            items = resp.json().get("items") or []
        except (httpx.HTTPError, ValueError) as exc:
            raise ProviderError(f"search request failed: {exc}") from exc
        out = []
        for item in items[:k]:
            text = (item.get("snippet") or "").strip()
            if text:
                out.append(WebSnippet(text, item.get("displayLink") or item.get("source") or "unknown"))
        return out
