from __future__ import annotations

import pytest

from kgverify.agent import (
    Ablations,
    AgentEnv,
    SessionConfig,
    SessionRecord,
    parse_plan,
    parse_step,
    parse_verdict,
    rag_sweep,
    run_batch,
    run_session,
)
from kgverify.fixtures import ELON_CEO_TESLA, KEMP_PARENT_GLIRICIDIA
from kgverify.graph import Triple
from kgverify.llm import ScriptedBackend, ScriptEntry
from kgverify.tools import FORMAT_ERROR, KG_DEFINITION, KG_PATH, WEB_EVIDENCE, ToolCall

VERDICT = "Final Answer: [Incorrect] Because nothing supports it."


def scripted(*pairs: tuple[str, str]) -> ScriptedBackend:
    return ScriptedBackend([ScriptEntry(m, r) for m, r in pairs])


class TestParsePlan:
    def test_bracketed_steps(self):
        plan = parse_plan("noise\n=== Strategic Plan ===\n1. [Check with KG_Path('a', 'b')]\n2. Ask the web\n3) KG_Basic_Info_Tool\n")
        assert [s.description for s in plan.steps] == ["Check with KG_Path('a', 'b')", "Ask the web", "KG_Basic_Info_Tool"]
        assert plan.steps[0].tool == KG_PATH and plan.steps[0].args == ("a", "b")
        assert plan.steps[1].tool is None
        assert plan.steps[2].tool == KG_DEFINITION and plan.steps[2].args is None

    def test_absent(self):
        assert parse_plan("1. do something") is None
        assert parse_plan("=== Strategic Plan ===\nnothing numbered") is None


class TestParseStep:
    def test_action(self):
        s = parse_step("Thought 2: look it up\nAction 2: KG_Path_Tool(entity_a='A', entity_b='B')")
        assert s.thought == "look it up"
        assert s.call == ToolCall(KG_PATH, ("A", "B"), ("entity_a", "entity_b"))

    def test_final_answer_after_action_wins(self):
        s = parse_step("Thought: x\nAction: KG_Path(a, b)\nFinal Answer: [Correct] Because y")
        assert s.is_finish and s.finish_text == "Final Answer: [Correct] Because y"

    def test_finish_call(self):
        s = parse_step("Thought: done\nAction: Finish('[Correct] Because z')")
        assert s.is_finish and parse_verdict(s.finish_text).label == "Correct"

    @pytest.mark.parametrize("text", ["I am not sure.", "Action: KG_Path('a"])
    def test_format_errors(self, text):
        assert parse_step(text).call.tool == FORMAT_ERROR


class TestParseVerdict:
    @pytest.mark.parametrize("text,label", [
        ("Final Answer: [Correct] Because it is.", "Correct"),
        ("final answer: incorrect, because no.", "Incorrect"),
        ("Final Answer: [Incorrect] Because: spans\nlines", "Incorrect"),
    ])
    def test_valid(self, text, label):
        v = parse_verdict(text)
        assert v.valid_format and v.label == label and v.explanation

    @pytest.mark.parametrize("text", ["", "Final Answer: [Correct]", "Correct because yes", "Final Answer: [Maybe] Because x",
                                      "Final Answer: [Correct] Because "])
    def test_invalid(self, text):
        v = parse_verdict(text)
        assert not v.valid_format and v.prediction is None


class TestAblations:
    def test_without(self):
        a = Ablations.without(["kg", "memory"])
        assert not a.kg_tools and not a.memory and a.planning and a.external_tools
        assert a.enabled_tools() == frozenset({"Wiki_Evidence", "Web_Evidence"})
        with pytest.raises(ValueError):
            Ablations.without(["bogus"])

    def test_no_tools_forces_zero_shot(self, runtime):
        cfg = SessionConfig(ablations=Ablations.without(["kg", "external"]))
        rec = run_session(ELON_CEO_TESLA, runtime.env, cfg, scripted(("", "Final Answer: [Correct] Because known.")))
        assert rec.mode == "zero-shot" and rec.steps == [] and rec.usage["turns"] == 1

    def test_no_planning_skips_plan_call(self, runtime):
        cfg = SessionConfig(ablations=Ablations.without(["planning", "memory"]))
        rec = run_session(ELON_CEO_TESLA, runtime.env, cfg, scripted(("User Context:", VERDICT)))
        assert rec.plan == [] and rec.demos == [] and rec.usage["turns"] == 1
        assert rec.prediction is False

    def test_disabled_tool_is_rejected_not_counted(self, runtime):
        cfg = SessionConfig(ablations=Ablations.without(["external"]))
        b = scripted(("User Input:", "no plan"), ("User Input:", "still none"),
                     ("User Context:", "Action: Web_Evidence('x')"), ("User Context:", VERDICT))
        rec = run_session(ELON_CEO_TESLA, runtime.env, cfg, b)
        assert rec.plan == [] and rec.tool_counts == {}
        assert "not available" in rec.steps[0].result.rendering


class TestSessions:
    def test_elon_replay(self, runtime):
        rec = run_session(ELON_CEO_TESLA, runtime.env, runtime.session, runtime.backends(ELON_CEO_TESLA), truth=True)
        assert rec.verdict.label == "Correct" and rec.correct and not rec.judgment_forced
        assert rec.tool_counts == {KG_DEFINITION: 2, KG_PATH: 1, WEB_EVIDENCE: 1}
        assert rec.verdict.evidence_chain == (1, 2, 3, 4)
        assert rec.usage["turns"] == 6

    def test_kemp_replay(self, runtime):
        rec = run_session(KEMP_PARENT_GLIRICIDIA, runtime.env, runtime.session,
                          runtime.backends(KEMP_PARENT_GLIRICIDIA), truth=False)
        assert rec.verdict.label == "Incorrect" and rec.correct
        assert any("No direct,2-hop or 3-hop paths found" in s.result.rendering for s in rec.steps)

    def test_forced_judgment(self, runtime):
        cfg = SessionConfig(t_max=3, ablations=Ablations.without(["planning"]))
        b = scripted(*[("User Context:", "Action: KG_Path('Elon Musk', 'Tesla')")] * 5, ("SYSTEM ALERT", VERDICT))
        rec = run_session(ELON_CEO_TESLA, runtime.env, cfg, b)
        assert rec.judgment_forced and len(rec.steps) == 3 and rec.usage["turns"] == 4
        assert rec.prediction is False

    def test_backend_failure_is_recorded(self, runtime):
        rec = run_session(ELON_CEO_TESLA, runtime.env, runtime.session, scripted())
        assert rec.error and "no scripted reply" in rec.error and rec.prediction is None

    def test_rag_baseline(self, runtime):
        cfg = SessionConfig(mode="rag-baseline")
        rec = run_session(ELON_CEO_TESLA, runtime.env, cfg, scripted(("", VERDICT)))
        assert rec.mode == "rag-baseline" and rec.usage["turns"] == 1
        assert [h.call for h in rec.steps] == rag_sweep(ELON_CEO_TESLA, runtime.env.tools)
        assert len(rec.steps) == 8

    def test_record_round_trip(self, runtime):
        rec = run_session(ELON_CEO_TESLA, runtime.env, runtime.session, runtime.backends(ELON_CEO_TESLA), truth=True)
        again = SessionRecord.from_json(rec.to_json())
        assert again.to_json() == rec.to_json()
        assert again.fingerprint() == rec.fingerprint()

    def test_batch_order_and_ids(self, runtime):
        items = [(ELON_CEO_TESLA, True), (KEMP_PARENT_GLIRICIDIA, False), (Triple("Q5", "P31", "Q5"), None)]
        recs = run_batch(items, runtime.env, runtime.session, runtime.backends, concurrency=3)
        assert [r.session_id for r in recs] == ["000000", "000001", "000002"]
        assert [r.correct for r in recs] == [True, True, False]
        assert recs[2].error
        with pytest.raises(ValueError):
            run_batch(items, runtime.env, runtime.session, runtime.backends, concurrency=0)

    def test_memory_free_env(self, runtime):
        env = AgentEnv(runtime.env.tools, None)
        rec = run_session(ELON_CEO_TESLA, env, runtime.session, runtime.backends(ELON_CEO_TESLA))
        assert rec.demos == [] and rec.verdict.label == "Correct"
