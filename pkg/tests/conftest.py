from __future__ import annotations

import random

import pytest

from kgverify.encoders import HashingEncoder
from kgverify.fixtures import fixture_config
from kgverify.graph import EntityRecord, KnowledgeGraph, RelationRecord, Triple
from kgverify.runtime import build_runtime


@pytest.fixture(scope="session")
def runtime():
    return build_runtime(fixture_config())


@pytest.fixture(scope="session")
def encoder():
    return HashingEncoder(256)


def random_graph(seed: int, n_nodes: int = 40, n_edges: int = 100, n_relations: int = 5) -> KnowledgeGraph:
    rng = random.Random(seed)
    triples = {
        Triple(f"e{rng.randrange(n_nodes)}", f"r{rng.randrange(n_relations)}", f"e{rng.randrange(n_nodes)}")
        for _ in range(n_edges)
    }
    return KnowledgeGraph.from_triples(triples)


@pytest.fixture
def toy_graph() -> KnowledgeGraph:
    """Five typed entities plus classes; P31 is the typing relation."""
    triples = [
        Triple("paris", "P31", "city"), Triple("paris", "P31", "capital"),
        Triple("berlin", "P31", "city"), Triple("berlin", "P31", "capital"),
        Triple("lyon", "P31", "city"),
        Triple("bonn", "P31", "city"),
        Triple("ada", "P31", "human"),
        Triple("ada", "P19", "paris"),
        Triple("paris", "P17", "france"),
        Triple("berlin", "P17", "germany"),
    ]
    ents = [
        EntityRecord("paris", "Paris", "capital of France", ("City of Light",)),
        EntityRecord("berlin", "Berlin", "capital of Germany"),
        EntityRecord("lyon", "Lyon", "city in France"),
        EntityRecord("bonn", "Bonn", "city in Germany"),
        EntityRecord("ada", "Ada Lovelace", "mathematician", ("Augusta Ada King",)),
        EntityRecord("france", "France", "country"),
        EntityRecord("germany", "Germany", "country"),
        EntityRecord("city", "city", "large settlement"),
        EntityRecord("capital", "capital city", "seat of government"),
        EntityRecord("human", "human", "person"),
    ]
    rels = [
        RelationRecord("P31", "instance of", "class membership", ("is a",)),
        RelationRecord("P19", "place of birth", "where the subject was born", ("born in", "birthplace"),
                       frozenset({"human"}), frozenset({"city"})),
        RelationRecord("P17", "country", "sovereign state of the item", ()),
    ]
    return KnowledgeGraph.from_triples(triples, ents, rels, ["P31"])


_ACCEPTANCE: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        doc = getattr(report, "criterion", None) or report.nodeid.rsplit("::", 1)[-1]
        _ACCEPTANCE.append(("PASS" if report.passed else "FAIL", doc))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    doc = (item.function.__doc__ or "").strip().splitlines()
    if doc:
        report.criterion = doc[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {doc}")
