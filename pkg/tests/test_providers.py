from __future__ import annotations

import httpx
import pytest

from kgverify.fixtures import fixture_path
from kgverify.graph import Triple
from kgverify.providers import (
    LiveWebProvider,
    LiveWikiProvider,
    OfflineWebProvider,
    OfflineWikiProvider,
    ProviderError,
    WebSnippet,
    WikiArticle,
)
from kgverify.wikidata import WikidataClient


class TestOffline:
    def test_wiki_fixture(self):
        wiki = OfflineWikiProvider.from_tsv(fixture_path("wiki.tsv"))
        art = wiki.article("  tesla,   INC. ")
        assert art is not None and art.title == "Tesla, Inc."
        assert ("headquarters", "Austin, Texas") in art.infobox
        assert all(not p.startswith("Infobox:") for p in art.body)
        assert wiki.article("Atlantis") is None

    def test_web_fixture(self):
        web = OfflineWebProvider.from_tsv(fixture_path("web.tsv"))
        hits = web.search("Is Elon Musk the CEO of Tesla?", 5)
        assert hits[0] == WebSnippet("...Tesla CEO Elon Musk Gets a Long Do-Not-Tweet List From the SEC...", "Barron's")
        assert len(web.search("is elon musk the ceo of tesla?", 1)) == 1
        assert web.search("unknown", 5) == []

    def test_malformed_files(self, tmp_path):
        p = tmp_path / "w.tsv"
        p.write_text("no tab here\n")
        with pytest.raises(ValueError, match=":1:"):
            OfflineWikiProvider.from_tsv(p)
        with pytest.raises(ValueError, match=":1:"):
            OfflineWebProvider.from_tsv(p)

    def test_article_without_infobox(self):
        art = WikiArticle("t", "One.\n\nTwo.")
        assert art.paragraphs == ["One.", "Two."] and art.infobox == []


class TestLiveWiki:
    def test_extract_and_cache(self):
        calls = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(dict(request.url.params))
            return httpx.Response(200, json={"query": {"pages": {"1": {"title": "Paris", "extract": "Paris is a city."}}}})

        wiki = LiveWikiProvider("http://wiki.test/api", transport=httpx.MockTransport(handler))
        assert wiki.article("paris").text == "Paris is a city."
        assert wiki.article("PARIS").title == "Paris"
        assert len(calls) == 1 and calls[0]["titles"] == "paris"
        assert [a.title for a in wiki.articles()] == ["Paris"]

    def test_missing_and_errors(self):
        wiki = LiveWikiProvider("http://wiki.test/api", transport=httpx.MockTransport(
            lambda r: httpx.Response(200, json={"query": {"pages": {"-1": {"missing": ""}}}})))
        assert wiki.article("Nowhere") is None
        wiki = LiveWikiProvider("http://wiki.test/api", transport=httpx.MockTransport(lambda r: httpx.Response(500)))
        with pytest.raises(ProviderError):
            wiki.article("x")


class TestLiveWeb:
    def test_items(self, monkeypatch):
        seen = {}

        def handler(request):
            seen.update(request.url.params)
            return httpx.Response(200, json={"items": [
                {"snippet": "A", "displayLink": "a.com"}, {"snippet": " ", "source": "b"}, {"snippet": "C"}]})

        monkeypatch.setenv("SEARCH_KEY_T", "k")
        web = LiveWebProvider("http://search.test", "SEARCH_KEY_T", {"cx": "1"}, transport=httpx.MockTransport(handler))
        assert web.search("q", 5) == [WebSnippet("A", "a.com"), WebSnippet("C", "unknown")]
        assert seen == {"q": "q", "num": "5", "cx": "1", "key": "k"}

    def test_error(self):
        web = LiveWebProvider("http://search.test", transport=httpx.MockTransport(lambda r: httpx.Response(403)))
        with pytest.raises(ProviderError):
            web.search("q", 3)


def _entity(eid, label, claims=()):
    return {
        "labels": {"en": {"value": label}},
        "descriptions": {"en": {"value": f"about {label}"}},
        "aliases": {"en": [{"value": label.upper()}]},
        "claims": {p: [{"mainsnak": {"datavalue": {"value": {"id": o}}}}] for p, o in claims},
    }


WIKIDATA = {
    "Q1": _entity("Q1", "Alpha", [("P2", "Q2"), ("P31", "Q9")]),
    "Q2": _entity("Q2", "Beta", [("P3", "Q3")]),
    "Q3": _entity("Q3", "Gamma"),
    "Q9": _entity("Q9", "class"),
    "P2": _entity("P2", "links to"),
    "P3": _entity("P3", "next"),
    "P31": _entity("P31", "instance of"),
}


class TestWikidata:
    def client(self, log=None):
        def handler(request: httpx.Request) -> httpx.Response:
            params = dict(request.url.params)
            if log is not None:
                log.append(params)
            if params["action"] == "wbsearchentities":
                return httpx.Response(200, json={"search": [{"id": "Q1", "label": "Alpha"}, {"id": "Q7"}]})
            ids = params["ids"].split("|")
            return httpx.Response(200, json={"entities": {i: WIKIDATA.get(i, {"missing": ""}) for i in ids}})

        return WikidataClient("http://wd.test/api", transport=httpx.MockTransport(handler))

    def test_search(self):
        hits = self.client().search("alpha")
        assert [(h.id, h.label) for h in hits] == [("Q1", "Alpha"), ("Q7", "Q7")]

    def test_entities_cached(self):
        log = []
        c = self.client(log)
        ents = c.entities(["Q1", "Q404"])
        assert list(ents) == ["Q1"]
        assert ents["Q1"].claims == (("P2", "Q2"), ("P31", "Q9"))
        assert ents["Q1"].aliases == ("ALPHA",)
        c.entities(["Q1"])
        assert len(log) == 1

    def test_subgraph(self):
        g = self.client().subgraph(["Q1"], hops=1)
        assert Triple("Q1", "P2", "Q2") in g.triples
        assert Triple("Q2", "P3", "Q3") not in g.triples
        assert g.label("P2") == "links to" and g.label("Q1") == "Alpha"
        g2 = self.client().subgraph(["Q1"], hops=2)
        assert Triple("Q2", "P3", "Q3") in g2.triples

    def test_api_error(self):
        c = WikidataClient("http://wd.test/api", transport=httpx.MockTransport(
            lambda r: httpx.Response(200, json={"error": {"info": "bad ids"}})))
        with pytest.raises(ProviderError, match="bad ids"):
            c.entities(["Q1"])
