from __future__ import annotations

import json

import numpy as np
import pytest

from kgverify.encoders import HashingEncoder
from kgverify.fixtures import fixture_path
from kgverify.graph import Triple
from kgverify.memory import (
    MemoryBank,
    MemoryFormatError,
    Trajectory,
    TrajectoryStep,
    dump_memory,
    load_memory,
    render_demos,
    retrieve,
    trajectory_from_record,
    verbalize,
)
from kgverify.tools import FINISH, KG_PATH, ToolCall

from tests.oracles import cosine_ranking


def _traj(h: str, r: str, t: str, label: str = "Correct") -> Trajectory:
    steps = (
        TrajectoryStep("look for a path", ToolCall(KG_PATH, (h, t)), "no path"),
        TrajectoryStep("done", ToolCall(FINISH, (label,))),
    )
    return Trajectory(Triple(h, r, t), "Human", steps, label, "the evidence says so")


class TestLoad:
    def test_fixture_bank(self, encoder):
        bank = load_memory(fixture_path("memory.jsonl"), encoder)
        assert len(bank) == 4
        assert bank.entries[0].category == "Organizational"
        assert bank.entries[0].text == "Elon Musk | CEO | Tesla"
        assert bank.task_vectors.shape == (4, encoder.dimension)

    def test_error_names_record_index(self, tmp_path, encoder):
        good = json.dumps(_traj("a", "r", "b").to_record())
        bad = json.loads(good)
        bad["category"] = "Sports"
        p = tmp_path / "m.jsonl"
        p.write_text(good + "\n\n" + good + "\n" + json.dumps(bad) + "\n")
        with pytest.raises(MemoryFormatError, match=r"record 2: .*Sports"):
            load_memory(p, encoder)

    @pytest.mark.parametrize("mutate,match", [
        (lambda d: d["final"].update(label="Maybe"), "Correct or Incorrect"),
        (lambda d: d["steps"][0].pop("observation"), "lacks an observation"),
        (lambda d: d["steps"].reverse(), "Finish may only be the last step"),
        (lambda d: d.pop("task"), "malformed"),
    ])
    def test_schema_violations(self, mutate, match):
        d = _traj("a", "r", "b").to_record()
        mutate(d)
        with pytest.raises(MemoryFormatError, match=match):
            trajectory_from_record(d)

    def test_core_suffix_and_case(self):
        d = _traj("a", "r", "b").to_record()
        d["category"] = "geography core"
        assert trajectory_from_record(d).category == "Geography"

    def test_dump_round_trip(self, tmp_path, encoder):
        bank = load_memory(fixture_path("memory.jsonl"), encoder)
        p = tmp_path / "m.jsonl"
        dump_memory(bank, p)
        again = load_memory(p, encoder)
        assert again.entries == bank.entries


class TestRetrieve:
    def test_matches_exhaustive_ranking(self, encoder):
        trajs = [_traj(f"h{i}", f"r{i % 3}", f"t{i % 7}") for i in range(40)]
        bank = MemoryBank.build(trajs, encoder)
        for i in range(10):
            q = Triple(f"h{i * 3}", "r1", "t2")
            expected = cosine_ranking(encoder.encode([verbalize(q)])[0], bank.task_vectors)[:5]
            assert retrieve(bank, q, 5, encoder) == [trajs[j] for j in expected]

    def test_ties_keep_bank_order(self, encoder):
        trajs = [_traj("x", "y", "z"), _traj("x", "y", "z", "Incorrect"), _traj("x", "y", "z")]
        bank = MemoryBank.build(trajs, encoder)
        got = retrieve(bank, Triple("x", "y", "z"), 3, encoder)
        assert [id(t) for t in got] == [id(t) for t in trajs]

    def test_uses_graph_labels(self, encoder, runtime):
        bank = runtime.env.memory
        got = retrieve(bank, Triple("Q317521", "P169", "Q478214"), 1, encoder, runtime.graph)
        assert got[0].text == "Elon Musk | CEO | Tesla"

    def test_bad_arguments(self, encoder):
        bank = MemoryBank.build([_traj("a", "b", "c")], encoder)
        with pytest.raises(ValueError):
            retrieve(bank, Triple("a", "b", "c"), 0, encoder)
        with pytest.raises(ValueError):
            retrieve(bank, Triple("a", "b", "c"), 1, HashingEncoder(32))
        assert retrieve(MemoryBank.build([], encoder), Triple("a", "b", "c"), 3, encoder) == []
        assert MemoryBank.build([], encoder).task_vectors.shape == (0, encoder.dimension)
        assert np.isfinite(bank.task_vectors).all()


class TestRender:
    def test_trajectory_block(self):
        text = render_demos([_traj("a", "r", "b")])
        assert text == (
            "--- Case 1 ---\n"
            'Target Triple: "a, r, b"\n'
            "Thought 1: look for a path\n"
            "Action 1: KG_Path('a', 'b')\n"
            "Observation 1: no path\n"
            "Thought 2: done\n"
            "Final Answer: [Correct] Because the evidence says so"
        )

    def test_empty_and_stable(self, encoder):
        assert render_demos([]) == "(no reference case available)"
        bank = load_memory(fixture_path("memory.jsonl"), encoder)
        assert render_demos(bank.entries) == render_demos(load_memory(fixture_path("memory.jsonl"), encoder).entries)
