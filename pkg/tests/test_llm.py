from __future__ import annotations

import json
import threading

import httpx
import pytest

from kgverify.llm import (
    COMPLETION_LIMIT,
    ChatRequest,
    ChatResponse,
    Message,
    Pricing,
    RemoteBackend,
    ScriptedBackend,
    ScriptEntry,
    ScriptLibrary,
    ScriptMiss,
    Usage,
    UsageLedger,
    complete,
    record_and_report,
    truncate_at_stop,
)


def req(user: str, stops=("[Observation]", "\nObservation:")) -> ChatRequest:
    return ChatRequest((Message("system", "sys prompt"), Message("user", user)), stop_sequences=stops)


class TestTruncation:
    @pytest.mark.parametrize("text,expected", [
        ("Action: KG_Path(a, b)\n[Observation] fake", "Action: KG_Path(a, b)\n"),
        ("Thought\nObservation: fake\n[Observation]", "Thought"),
        ("clean text", "clean text"),
    ])
    def test_cut_at_earliest_stop(self, text, expected):
        out, _ = truncate_at_stop(text, ("[Observation]", "\nObservation:"))
        assert out == expected

    def test_gateway_always_truncates(self):
        class Leaky:
            def complete(self, r):
                return ChatResponse("a [Observation] b", Usage(1, 3), "stop")

        assert complete(Leaky(), req("x")).text == "a "


class TestScripted:
    def test_first_unused_match_wins(self):
        b = ScriptedBackend([ScriptEntry("User Input:", "plan"), ScriptEntry("User Context:", "s1"),
                             ScriptEntry("User Context:", "s2")])
        assert b.complete(req("User Context: ...")).text == "s1"
        assert b.complete(req("User Input: ...")).text == "plan"
        assert b.complete(req("User Context: ...")).text == "s2"
        with pytest.raises(ScriptMiss):
            b.complete(req("User Context: ..."))
        assert b.fork().remaining == 3

    def test_usage_is_whitespace_tokens(self):
        r = ScriptedBackend([ScriptEntry("q", "one two three")]).complete(req("q q"))
        assert r.usage == Usage(4, 3)

    def test_gateway_maps_miss_to_error(self):
        ledger = UsageLedger()
        r = complete(ScriptedBackend([]), req("x"), ledger, "s")
        assert r.finish_reason == "error" and "no scripted reply" in r.error
        assert ledger.session("s").turns == 1

    def test_library_groups_by_target(self, tmp_path):
        p = tmp_path / "s.jsonl"
        rows = [{"match": "A", "reply": "own", "target": "h|r|t"}, {"match": "A", "reply": "shared"},
                {"match": "A", "reply": "other", "target": "x|y|z"}]
        p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        lib = ScriptLibrary.from_jsonl(p)
        assert lib.targets == ["h|r|t", "x|y|z"]
        b = lib.backend("h|r|t")
        assert [b.complete(req("A")).text for _ in range(2)] == ["own", "shared"]
        p.write_text('{"reply": "no match"}\n')
        with pytest.raises(ValueError, match=":1:"):
            ScriptLibrary.from_jsonl(p)


def _ok(content: str, usage: dict | None = None, finish: str = "stop") -> httpx.Response:
    body = {"choices": [{"message": {"content": content}, "finish_reason": finish}]}
    if usage is not None:
        body["usage"] = usage
    return httpx.Response(200, json=body)


class TestRemote:
    def make(self, handler, **kw):
        sleeps: list[float] = []
        b = RemoteBackend("http://llm.test/v1/", "m", transport=httpx.MockTransport(handler), sleep=sleeps.append, **kw)
        return b, sleeps

    def test_payload_and_usage(self, monkeypatch):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return _ok("Thought: x\n[Observation] y", {"prompt_tokens": 11, "completion_tokens": 5})

        monkeypatch.setenv("TEST_KEY", "secret")
        b, _ = self.make(handler, api_key_env="TEST_KEY")
        r = b.complete(req("hi"))
        assert seen["url"] == "http://llm.test/v1/chat/completions"
        assert seen["auth"] == "Bearer secret"
        assert seen["body"]["messages"][1] == {"role": "user", "content": "hi"}
        assert seen["body"]["stop"] == ["[Observation]", "\nObservation:"]
        assert r.text == "Thought: x\n" and r.usage == Usage(11, 5)

    def test_retries_then_success(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) == 1:
                raise httpx.ConnectError("boom")
            if len(calls) == 2:
                return httpx.Response(503)
            return _ok("fine", finish="length")

        b, sleeps = self.make(handler, retries=3, backoff=0.5)
        r = b.complete(req("hi"))
        assert r.text == "fine" and r.finish_reason == "length"
        assert sleeps == [0.5, 1.0]
        assert r.usage == Usage(3, 1)

    def test_retries_exhausted(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(429)

        b, sleeps = self.make(handler, retries=3)
        r = b.complete(req("hi"))
        assert r.finish_reason == "error" and "retries exhausted" in r.error
        assert len(calls) == 4 and len(sleeps) == 3

    def test_client_error_and_malformed(self):
        b, _ = self.make(lambda r: httpx.Response(401, text="nope"))
        assert b.complete(req("x")).error.startswith("HTTP 401")
        b, _ = self.make(lambda r: httpx.Response(200, json={"choices": []}))
        assert "malformed" in b.complete(req("x")).error


class TestLedger:
    def test_totals_equal_call_sums_under_threads(self):
        ledger = UsageLedger(Pricing.per_million(2.5, 10.0))
        b = ScriptedBackend([ScriptEntry("", "w " * 7)] * 400)

        def work(k: int) -> None:
            for _ in range(50):
                complete(b, req("a b c"), ledger, f"s{k}")

        threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        calls = ledger.calls()
        assert len(calls) == 400
        total = ledger.total()
        assert total.input_tokens == sum(u.input_tokens for _, u in calls) == 400 * 5
        assert total.output_tokens == 400 * 7
        assert all(s.turns == 50 for s in ledger.sessions().values())

    def test_pricing_and_table(self):
        ledger = UsageLedger(Pricing.per_million(2.5, 10.0))
        ledger.record("a", Usage(1000, 100))
        ledger.record("a", Usage(1000, 100))
        ledger.record("b", Usage(2000, 0))
        assert Pricing.per_million(2.5, 10.0).cost(Usage(1_000_000, 1_000_000)) == pytest.approx(12.5)
        row = record_and_report(ledger, label="fixture").rows[0]
        assert (row.sessions, row.avg_turns, row.avg_input_tokens, row.avg_output_tokens) == (2, 1.5, 2000, 100)
        assert row.avg_cost == pytest.approx((0.0050 + 0.0020 + 0.0050) / 2)
        assert "Avg. Interaction Turns" in record_and_report(ledger).render()
        assert record_and_report(UsageLedger()).render() == "(no sessions)"

    def test_limiter_resize(self):
        old = COMPLETION_LIMIT.size
        try:
            COMPLETION_LIMIT.resize(3)
            assert COMPLETION_LIMIT.size == 3
            with pytest.raises(ValueError):
                COMPLETION_LIMIT.resize(0)
        finally:
            COMPLETION_LIMIT.resize(old)


class TestRequest:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChatRequest(())
        with pytest.raises(ValueError):
            ChatRequest((Message("user", "x"),), max_output_tokens=0)
        with pytest.raises(ValueError):
            Usage(-1, 0)
