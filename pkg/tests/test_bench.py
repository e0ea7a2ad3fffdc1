from __future__ import annotations

import math
import random
from collections import Counter
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgverify.bench import (
    SHARED_TYPE_FALLBACK,
    InsufficientPositives,
    LabeledTriple,
    build_testset,
    build_type_index,
    candidate_thresholds,
    compute_metrics,
    corrupt,
    aggregate_stats,
    metrics_from_confusion,
    read_testset,
    sample_negatives,
    threshold_search,
    write_testset,
)
from kgverify.graph import KnowledgeGraph, Triple
from kgverify.llm import Pricing

from tests.oracles import exhaustive_threshold, metrics_formulas

CHI2_DF2_999 = 13.816


class TestTypeIndex:
    def test_hand_partition(self, toy_graph):
        idx = build_type_index(toy_graph)
        assert idx.pools == {
            ("capital", "city"): ["berlin", "paris"],
            ("city",): ["bonn", "lyon"],
            ("human",): ["ada"],
            (): ["capital", "city", "france", "germany", "human"],
        }
        assert idx.pool_of("paris") == ["berlin", "paris"]
        assert idx.by_type["city"] == ["berlin", "bonn", "lyon", "paris"]

    def test_no_typing_relations(self, toy_graph):
        idx = build_type_index(toy_graph, [])
        assert list(idx.pools) == [()]


class TestCorrupt:
    def test_tail_corruption_respects_signature(self, toy_graph):
        idx = build_type_index(toy_graph)
        p = Triple("ada", "P19", "paris")
        seen = set()
        for seed in range(50):
            neg = corrupt(p, toy_graph, idx, random.Random(seed))
            if neg is None:
                continue
            seen.add(neg.triple)
            assert not neg.label and neg.source == p
            assert neg.triple not in toy_graph.triples
        assert Triple("ada", "P19", "berlin") in seen

    def test_shared_type_fallback(self, toy_graph):
        idx = build_type_index(toy_graph)
        p = Triple("lyon", "P17", "france")
        kinds = Counter()
        for seed in range(60):
            neg = corrupt(p, toy_graph, idx, random.Random(seed))
            if neg is not None and neg.provenance == "corrupted-head":
                kinds[neg.fallback] += 1
                if neg.fallback is None:
                    assert neg.triple.head == "bonn"
        # lyon's exact pool is {bonn, lyon}; bonn is always valid so no fallback is needed
        assert kinds and set(kinds) == {None}

        g = KnowledgeGraph.from_triples([Triple("a", "P31", "T"), Triple("a", "P31", "U"), Triple("b", "P31", "T")],
                                   typing_relations=["P31"])
        idx = build_type_index(g)
        for seed in range(20):
            neg = corrupt(Triple("a", "R", "b"), g, idx, random.Random(seed))
            if neg is not None and neg.provenance == "corrupted-head":
                assert neg.fallback == SHARED_TYPE_FALLBACK and neg.triple.head == "b"

    def test_uniform_over_valid_pool(self):
        triples = [Triple(f"c{i}", "P31", "T") for i in range(4)] + [Triple("x", "P31", "U")]
        g = KnowledgeGraph.from_triples(triples, typing_relations=["P31"])
        idx = build_type_index(g)
        negs = sample_negatives([Triple("x", "R", "c0")] * 6000, g, idx, seed=3)
        tails = Counter(n.triple.tail for n in negs if n.provenance == "corrupted-tail")
        assert set(tails) == {"c1", "c2", "c3"}
        n = sum(tails.values())
        chi2 = sum((c - n / 3) ** 2 / (n / 3) for c in tails.values())
        assert chi2 < CHI2_DF2_999

    def test_known_fact_exclusion_toggle(self):
        g = KnowledgeGraph.from_triples([Triple("a", "P31", "T"), Triple("b", "P31", "T"), Triple("x", "R", "b")],
                                        typing_relations=["P31"])
        idx = build_type_index(g)
        strict = sample_negatives([Triple("x", "R", "a")] * 50, g, idx, 0)
        assert all(n.provenance == "corrupted-head" for n in strict) or not strict
        loose = sample_negatives([Triple("x", "R", "a")] * 50, g, idx, 0, exclude_known_facts=False)
        assert Triple("x", "R", "b") in {n.triple for n in loose}

    def test_empty(self, toy_graph):
        assert sample_negatives([], toy_graph, build_type_index(toy_graph), 0) == []


class TestTestset:
    def positives(self, n: int) -> tuple[KnowledgeGraph, list[Triple]]:
        typed = [Triple(f"e{i}", "P31", f"T{i % 4}") for i in range(60)]
        facts = [Triple(f"e{i}", "R", f"e{(i * 7 + 3) % 60}") for i in range(n)]
        return KnowledgeGraph.from_triples(typed + facts, typing_relations=["P31"]), facts

    def test_balance_and_determinism(self, tmp_path):
        g, facts = self.positives(60)
        idx = build_type_index(g)
        a = build_testset(facts, g, idx, n=40, seed=5)
        b = build_testset(list(reversed(facts)), g, idx, n=40, seed=5)
        assert a == b
        assert Counter(i.label for i in a) == {True: 20, False: 20}
        used = {i.triple for i in a if i.label} | {i.source for i in a if not i.label}
        assert len(used) == 40
        path = tmp_path / "t.jsonl"
        write_testset(path, a, "abc")
        items, sums = read_testset(path)
        assert items == a and sums == {"abc"}

    def test_odd_n(self):
        g, facts = self.positives(20)
        items = build_testset(facts, g, build_type_index(g), n=7, seed=1)
        assert Counter(i.label for i in items) == {True: 4, False: 3}

    def test_insufficient(self):
        g, facts = self.positives(10)
        with pytest.raises(InsufficientPositives):
            build_testset(facts, g, build_type_index(g), n=11)

    def test_labeled_triple_invariants(self):
        with pytest.raises(ValueError):
            LabeledTriple(Triple("a", "b", "c"), True, "corrupted-head")
        with pytest.raises(ValueError):
            LabeledTriple(Triple("a", "b", "c"), False)

    def test_bad_record(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"head": "a"}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_testset(p)


class TestMetrics:
    def test_worked_example(self):
        m = metrics_from_confusion(tp=3, fp=1, tn=5, fn=1)
        assert (m.accuracy, m.precision, m.recall, m.f1) == (0.8, 0.75, 0.75, 0.75)

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_matches_formulas(self, tp, fp, tn, fn):
        m = metrics_from_confusion(tp, fp, tn, fn)
        assert (m.accuracy, m.precision, m.recall, m.f1) == pytest.approx(metrics_formulas(tp, fp, tn, fn))

    def test_invalid_counts_as_wrong(self):
        m = compute_metrics([None, None, True, False], [True, False, True, False])
        assert m.confusion == (1, 1, 1, 1)
        assert compute_metrics([None] * 4, [True, True, False, False]).accuracy == 0.0
        with pytest.raises(ValueError):
            compute_metrics([True], [])

    def test_render(self):
        assert "80.0" in metrics_from_confusion(3, 1, 5, 1).render("x")


class TestThreshold:
    def test_candidates(self):
        assert candidate_thresholds([3, 1, 1, 2]) == [-math.inf, 1.5, 2.5, math.inf]

    @given(st.lists(st.tuples(st.integers(-20, 20).map(lambda x: x / 4), st.booleans()), min_size=1, max_size=40),
           st.sampled_from(["higher-is-true", "lower-is-true"]))
    def test_matches_exhaustive(self, pairs, direction):
        scores, truths = [s for s, _ in pairs], [t for _, t in pairs]
        got = threshold_search(scores, truths, direction)
        assert (got.delta, got.accuracy) == exhaustive_threshold(scores, truths, direction)

    def test_separable(self):
        r = threshold_search([0.1, 0.2, 0.8, 0.9], [False, False, True, True])
        assert r == threshold_search([0.1, 0.2, 0.8, 0.9], [False, False, True, True])
        assert r.accuracy == 1.0 and r.delta == 0.5
        assert threshold_search([0.1, 0.9], [True, False], "lower-is-true").accuracy == 1.0

    @pytest.mark.parametrize("args", [([], []), ([1.0], []), ([float("nan")], [True])])
    def test_bad_input(self, args):
        with pytest.raises(ValueError):
            threshold_search(*args)
        with pytest.raises(ValueError):
            threshold_search([1.0], [True], "sideways")


def _session(sid, correct, tools, turns, inp, out):
    return SimpleNamespace(session_id=sid, correct=correct, tool_counts=tools,
                           usage={"turns": turns, "input_tokens": inp, "output_tokens": out})


class TestStats:
    def test_hand_counts(self):
        sessions = [
            _session("0", True, {"KG_Path": 2, "Web_Evidence": 1}, 4, 1000, 100),
            _session("1", True, {"KG_Path": 1}, 2, 500, 50),
            _session("2", False, {"Wiki_Evidence": 5}, 6, 1500, 150),
        ]
        r = aggregate_stats(sessions, Pricing.per_million(2.5, 10.0))
        assert r.tool_counts == {"KG_Path": 3, "Web_Evidence": 1}
        assert r.tool_frequency == {"KG_Path": 0.75, "Web_Evidence": 0.25}
        assert (r.sessions, r.correct_sessions, r.avg_turns, r.avg_input_tokens, r.avg_output_tokens) == (3, 2, 4, 1000, 100)
        assert r.avg_cost == pytest.approx(1000 * 2.5e-6 + 100 * 1e-5)
        assert r.records()[-1]["kind"] == "summary"
        assert "KG_Path" in r.render()

    def test_edge_cases(self):
        assert aggregate_stats([]).note == "no sessions"
        r = aggregate_stats([_session("0", False, {"KG_Path": 1}, 1, 1, 1)])
        assert r.note == "no correctly predicted sessions" and r.tool_counts == {}
        assert aggregate_stats([_session("0", True, {}, 1, 1, 1)]).note == "correct sessions made no tool calls"
