"""One verification session end to end, plus the single-shot baselines and a batch driver.

The agent retrieves expert demonstrations, asks for a strategic plan, then runs
Think-Act-Observe turns until it finishes or exhausts ``t_max``; in the latter
case one mandatory-judgment prompt forces a verdict.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

from kgverify import prompts
from kgverify.graph import Triple, normalize_name
from kgverify.llm import (
    REASONING_STOPS,
    Backend,
    ChatRequest,
    ChatResponse,
    Message,
    Usage,
    UsageLedger,
    complete,
)
from kgverify.memory import MemoryBank, render_demos, retrieve, verbalize
from kgverify.pathsearch import Path
from kgverify.tools import (
    ALL_TOOLS,
    EXTERNAL_TOOLS,
    FINISH,
    KG_DEFINITION,
    KG_NEIGHBOR,
    KG_PATH,
    KG_TOOLS,
    SPECS,
    TOOL_ALIASES,
    WEB_EVIDENCE,
    WIKI_EVIDENCE,
    CallFormatError,
    ToolCall,
    ToolEnv,
    ToolResult,
    canonical_tool,
    dispatch,
    evidence_from_dict,
    evidence_to_dict,
    format_call,
    format_error_call,
    parse_call,
    registry,
    render_registry,
)

log = logging.getLogger(__name__)

Mode = Literal["agent", "rag-baseline", "zero-shot"]
MODES: tuple[Mode, ...] = ("agent", "rag-baseline", "zero-shot")
PLAN_MARKER = "=== Strategic Plan ==="

DEFAULT_JUDGMENT_CRITERIA = "\n".join(
    [
        "- Check that the head and tail fit the relation's domain and range.",
        "- Treat explicit KG edges and paths as strong evidence; use external text to confirm them or to fill gaps.",
        "- Absence of a KG path is weak evidence on its own, because the graph is incomplete.",
        "- Dates, places and identities in the evidence must agree with the triple as stated.",
    ]
)

NO_DEMOS = "(no reference case available)"
NO_PLAN = "(no plan available)"
NO_HISTORY = "(no actions taken yet)"


class SessionAbort(RuntimeError):
    """The backend failed hard; the session ends with an error verdict."""


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class Ablations:
    memory: bool = True
    planning: bool = True
    kg_tools: bool = True
    external_tools: bool = True

    def enabled_tools(self) -> frozenset[str]:
        out: set[str] = set()
        if self.kg_tools:
            out |= KG_TOOLS
        if self.external_tools:
            out |= EXTERNAL_TOOLS
        return frozenset(out)

    def as_dict(self) -> dict[str, bool]:
        return {
            "memory": self.memory, "planning": self.planning,
            "kg_tools": self.kg_tools, "external_tools": self.external_tools,
        }

    @classmethod
    def without(cls, names: Sequence[str]) -> Ablations:
        """Switch off the named groups (``memory``, ``planning``, ``kg``, ``external``)."""
        aliases = {"kg": "kg_tools", "external": "external_tools"}
        flags = cls().as_dict()
        for n in names:
            key = aliases.get(n, n)
            if key not in flags:
                raise ValueError(f"unknown ablation {n!r}")
            flags[key] = False
        return cls(**flags)


@dataclass(frozen=True)
class SessionConfig:
    t_max: int = 10
    k_memory: int = 3
    ablations: Ablations = field(default_factory=Ablations)
    mode: Mode = "agent"
    judgment_criteria: str = DEFAULT_JUDGMENT_CRITERIA
    impression_preask: bool = False
    temperature: float = 0.0
    max_output_tokens: int = 1024
    config_checksum: str = ""

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.k_memory < 1:
            raise ValueError("k_memory must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def effective_mode(self) -> Mode:
        if not self.ablations.kg_tools and not self.ablations.external_tools:
            return "zero-shot"
        return self.mode


@dataclass(frozen=True)
class AgentEnv:
    tools: ToolEnv
    memory: MemoryBank | None = None


# --------------------------------------------------------------------------- plan


@dataclass(frozen=True)
class PlanStep:
    description: str
    tool: str | None = None
    args: tuple[str, ...] | None = None

    def as_dict(self) -> dict:
        return {"description": self.description, "tool": self.tool, "args": list(self.args) if self.args is not None else None}


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...] = ()

    def render(self) -> str:
        if not self.steps:
            return NO_PLAN
        return "\n".join(f"Step {i}: {s.description}" for i, s in enumerate(self.steps, start=1))


_STEP_LINE = re.compile(r"^\s*[\[(]?\s*(?:step\s*)?(\d+)\s*[\]).:\-]+\s*(.+?)\s*$", re.IGNORECASE)
_TOOL_MENTION = re.compile(r"\b([A-Za-z_]\w*)\s*\(")
_KNOWN_NAMES = sorted({*SPECS, *TOOL_ALIASES}, key=len, reverse=True)


def _plan_tool(desc: str) -> tuple[str | None, tuple[str, ...] | None]:
    for m in _TOOL_MENTION.finditer(desc):
        name = canonical_tool(m.group(1))
        if name in SPECS and name != FINISH:
            try:
                call = parse_call(desc[m.start():])
                return name, call.arguments
            except CallFormatError:
                return name, None
    low = desc.lower()
    for n in _KNOWN_NAMES:
        if re.search(r"\b" + re.escape(n.lower()) + r"\b", low):
            name = canonical_tool(n)
            if name != FINISH:
                return name, None
    return None, None


def parse_plan(text: str) -> Plan | None:
    """Numbered step lines under the plan marker; ``None`` when absent or empty."""
    i = text.lower().find(PLAN_MARKER.lower())
    if i < 0:
        return None
    steps = []
    for line in text[i + len(PLAN_MARKER):].splitlines():
        m = _STEP_LINE.match(line)
        if not m:
            continue
        desc = m.group(2).strip()
        if desc.startswith("[") and desc.endswith("]"):
            desc = desc[1:-1].strip()
        if desc:
            tool, args = _plan_tool(desc)
            steps.append(PlanStep(desc, tool, args))
    return Plan(tuple(steps)) if steps else None


# --------------------------------------------------------------------------- step parsing


@dataclass(frozen=True)
class ParsedStep:
    thought: str
    action_text: str
    call: ToolCall | None
    finish_text: str | None = None

    @property
    def is_finish(self) -> bool:
        return self.finish_text is not None


_FINAL = re.compile(r"final\s+answer\s*:", re.IGNORECASE)
_ACTION = re.compile(r"^[ \t*]*action(?:\s*\d+)?[ \t*]*:[ \t*]*", re.IGNORECASE | re.MULTILINE)
_THOUGHT = re.compile(r"^[ \t*]*thought(?:\s*\d+)?[ \t*]*:[ \t*]*", re.IGNORECASE | re.MULTILINE)


def _thought_before(text: str, end: int) -> str:
    chunk = text[:end]
    marks = list(_THOUGHT.finditer(chunk))
    if marks:
        chunk = chunk[marks[-1].end():]
    return chunk.strip()


def parse_step(text: str) -> ParsedStep:
    """Split a reasoning completion into thought and action.

    A ``Final Answer:`` after the last action (or without any action) is a
    Finish. Unparseable output maps to the reserved format-error route.
    """
    fm = _FINAL.search(text)
    actions = list(_ACTION.finditer(text))
    am = actions[-1] if actions else None
    if fm is not None and (am is None or fm.start() > am.start()):
        return ParsedStep(_thought_before(text, fm.start()), "", None, text[fm.start():].strip())
    if am is None:
        return ParsedStep(text.strip(), "", format_error_call("no 'Action:' line found"))
    raw = text[am.end():].strip()
    thought = _thought_before(text, am.start())
    try:
        call = parse_call(raw)
    except CallFormatError as exc:
        return ParsedStep(thought, raw, format_error_call(str(exc)))
    if call.tool == FINISH:
        answer = call.arguments[0] if call.arguments else ""
        if not _FINAL.search(answer):
            answer = f"Final Answer: {answer}"
        return ParsedStep(thought, raw, None, answer)
    return ParsedStep(thought, raw, call)


# --------------------------------------------------------------------------- history and verdict


@dataclass(frozen=True)
class HistoryEntry:
    turn: int
    thought: str
    action_text: str
    call: ToolCall
    result: ToolResult

    def render(self) -> str:
        return (
            f"Thought {self.turn}: {self.thought}\n"
            f"Action {self.turn}: {self.action_text or format_call(self.call)}\n"
            f"Observation {self.turn}:\n{self.result.rendering}"
        )

    def as_dict(self) -> dict:
        return {
            "turn": self.turn,
            "thought": self.thought,
            "action": self.action_text,
            "call": self.call.as_dict(),
            "tool": self.result.tool,
            "status": self.result.status,
            "executed": self.result.executed,
            "observation": self.result.rendering,
            "provenance": list(self.result.provenance),
            "payload": [evidence_to_dict(e) for e in self.result.payload],
        }


def render_history(history: Sequence[HistoryEntry]) -> str:
    if not history:
        return NO_HISTORY
    return "\n".join(h.render() for h in history)


@dataclass(frozen=True)
class Verdict:
    label: Literal["Correct", "Incorrect"] | None
    explanation: str
    evidence_chain: tuple[int, ...]
    valid_format: bool
    raw: str = ""
    heuristic_evidence: bool = True

    @property
    def prediction(self) -> bool | None:
        """True/False for a valid verdict; None for refusals and malformed output."""
        if not self.valid_format or self.label is None:
            return None
        return self.label == "Correct"

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "explanation": self.explanation,
            "evidence_chain": list(self.evidence_chain),
            "valid_format": self.valid_format,
            "heuristic_evidence": self.heuristic_evidence,
            "raw": self.raw,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Verdict:
        return cls(
            d.get("label"), d.get("explanation", ""), tuple(d.get("evidence_chain", ())),
            bool(d.get("valid_format")), d.get("raw", ""), bool(d.get("heuristic_evidence", True)),
        )


_VERDICT = re.compile(
    r"final\s+answer\s*:\s*\[?\s*(correct|incorrect)\s*\]?\s*[,.:;-]?\s*because\b[\s:,]*(.*)",
    re.IGNORECASE | re.DOTALL,
)
_QUOTED = re.compile(r"\"([^\"]{3,}?)\"|“([^”]{3,}?)”|(?<!\w)'([^']{3,}?)'(?!\w)")


def _word_in(needle: str, haystack: str) -> bool:
    return re.search(r"(?<!\w)" + re.escape(needle) + r"(?!\w)", haystack) is not None


def evidence_chain(explanation: str, history: Sequence[HistoryEntry], anchors: dict[str, str]) -> tuple[int, ...]:
    """History turns whose observation shares a quoted span or a known entity with the explanation.

    ``anchors`` maps surface names (labels, aliases) to identifiers; a mentioned
    name matches observations containing the name or its identifier.
    """
    expl = normalize_name(explanation)
    keys: set[str] = set()
    for m in _QUOTED.finditer(explanation):
        span = normalize_name(next(g for g in m.groups() if g))
        if len(span) >= 3:
            keys.add(span)
    for name, ident in anchors.items():
        n = normalize_name(name)
        if len(n) >= 3 and _word_in(n, expl):
            keys.add(n)
            keys.add(normalize_name(ident))
    chain = []
    for h in history:
        obs = normalize_name(h.result.rendering)
        if any(_word_in(k, obs) for k in keys):
            chain.append(h.turn)
    return tuple(chain)


def parse_verdict(
    text: str, history: Sequence[HistoryEntry] = (), anchors: dict[str, str] | None = None
) -> Verdict:
    """Total parse of ``Final Answer: [Correct/Incorrect] Because ...``."""
    m = _VERDICT.search(text or "")
    if not m or not m.group(2).strip():
        return Verdict(None, "", (), False, text or "")
    label = "Correct" if m.group(1).lower() == "correct" else "Incorrect"
    explanation = m.group(2).strip()
    chain = evidence_chain(explanation, history, anchors or {})
    return Verdict(label, explanation, chain, True, text)


# --------------------------------------------------------------------------- records


@dataclass
class SessionRecord:
    session_id: str
    target: Triple
    target_text: str
    truth: bool | None
    mode: str
    ablations: dict[str, bool]
    plan: list[PlanStep]
    demos: list[str]
    impression: str
    steps: list[HistoryEntry]
    verdict: Verdict
    tool_counts: dict[str, int]
    usage: dict[str, int]
    judgment_forced: bool
    error: str | None = None
    duration_s: float = 0.0
    config_checksum: str = ""

    @property
    def prediction(self) -> bool | None:
        return self.verdict.prediction

    @property
    def correct(self) -> bool:
        return self.truth is not None and self.prediction is not None and self.prediction == self.truth

    @property
    def tool_calls(self) -> int:
        return sum(self.tool_counts.values())

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "target": self.target.as_dict(),
            "target_text": self.target_text,
            "truth": self.truth,
            "mode": self.mode,
            "ablations": dict(self.ablations),
            "plan": [s.as_dict() for s in self.plan],
            "demos": list(self.demos),
            "impression": self.impression,
            "steps": [h.as_dict() for h in self.steps],
            "verdict": self.verdict.as_dict(),
            "tool_counts": dict(sorted(self.tool_counts.items())),
            "usage": dict(self.usage),
            "judgment_forced": self.judgment_forced,
            "error": self.error,
            "duration_s": self.duration_s,
            "config_checksum": self.config_checksum,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    def fingerprint(self) -> str:
        """Digest of everything except wall-clock duration."""
        d = self.to_dict()
        d.pop("duration_s")
        return hashlib.sha256(json.dumps(d, ensure_ascii=False, sort_keys=True).encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> SessionRecord:
        steps = []
        for s in d.get("steps", ()):
            call = ToolCall.from_dict(s["call"])
            payload = tuple(evidence_from_dict(e) for e in s.get("payload", ()))
            provenance = tuple(s.get("provenance", ())) if payload else ()
            result = ToolResult(
                s.get("tool", call.tool), s["status"], s["observation"], payload, provenance,
                executed=bool(s.get("executed", True)),
            )
            steps.append(HistoryEntry(int(s["turn"]), s.get("thought", ""), s.get("action", ""), call, result))
        plan = [
            PlanStep(p["description"], p.get("tool"), tuple(p["args"]) if p.get("args") is not None else None)
            for p in d.get("plan", ())
        ]
        t = d["target"]
        return cls(
            session_id=d["session_id"],
            target=Triple(t["head"], t["relation"], t["tail"]),
            target_text=d.get("target_text", ""),
            truth=d.get("truth"),
            mode=d.get("mode", "agent"),
            ablations=dict(d.get("ablations", {})),
            plan=plan,
            demos=list(d.get("demos", ())),
            impression=d.get("impression", ""),
            steps=steps,
            verdict=Verdict.from_dict(d["verdict"]),
            tool_counts={k: int(v) for k, v in d.get("tool_counts", {}).items()},
            usage={k: int(v) for k, v in d.get("usage", {}).items()},
            judgment_forced=bool(d.get("judgment_forced")),
            error=d.get("error"),
            duration_s=float(d.get("duration_s", 0.0)),
            config_checksum=d.get("config_checksum", ""),
        )

    @classmethod
    def from_json(cls, line: str) -> SessionRecord:
        return cls.from_dict(json.loads(line))


# --------------------------------------------------------------------------- session machinery


@dataclass
class _Caller:
    """Per-session completion wrapper: shared ledger plus local totals."""

    backend: Backend
    config: SessionConfig
    ledger: UsageLedger | None
    session_id: str
    usage: Usage = Usage()
    turns: int = 0

    def __call__(self, system: str, user: str) -> ChatResponse:
        msgs = (Message("system", system), Message("user", user)) if system else (Message("user", user),)
        req = ChatRequest(msgs, self.config.temperature, REASONING_STOPS, self.config.max_output_tokens)
        resp = complete(self.backend, req, self.ledger, self.session_id)
        self.usage = self.usage + resp.usage
        self.turns += 1
        if resp.finish_reason == "error":
            raise SessionAbort(resp.error or "backend error")
        return resp

    def totals(self) -> dict[str, int]:
        return {"turns": self.turns, "input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens}


def _anchors(target: Triple, tools: ToolEnv, history: Sequence[HistoryEntry]) -> dict[str, str]:
    g = tools.graph
    ids: list[str] = [target.head, target.tail, target.relation]
    for h in history:
        for item in h.result.payload:
            if isinstance(item, Triple):
                ids += [item.head, item.tail]
            elif isinstance(item, Path):
                ids += list(item.nodes)
    out: dict[str, str] = {}
    for i in ids:
        rec = g.entities.get(i) or g.relations.get(i)
        if rec is None:
            continue
        for name in (rec.label, *rec.aliases):
            out.setdefault(name, i)
    return out


def _session_tools(target: Triple, env: AgentEnv, config: SessionConfig) -> ToolEnv:
    return env.tools.with_exclusion({target}).with_enabled(config.ablations.enabled_tools())


def generate_plan(caller: _Caller, tools_text: str, demos_text: str, triple_text: str) -> Plan:
    """Prompt for a strategic plan; one retry on a parse failure, then an empty plan."""
    system = prompts.render("plan.system", {"tools": tools_text, "trajectory case": demos_text})
    user = prompts.render("plan.user", {"triple": triple_text})
    for _attempt in range(2):
        plan = parse_plan(caller(system, user).text)
        if plan is not None:
            return plan
    log.warning("no '%s' block in planner output after retry; continuing without a plan", PLAN_MARKER)
    return Plan()


def _tool_counts(history: Sequence[HistoryEntry]) -> dict[str, int]:
    return dict(Counter(h.result.tool for h in history if h.result.executed))


def _record(
    session_id: str, target: Triple, triple_text: str, truth: bool | None, mode: str, config: SessionConfig,
    plan: Plan, demos: list[str], impression: str, history: list[HistoryEntry], verdict: Verdict,
    caller: _Caller, forced: bool, error: str | None, started: float,
) -> SessionRecord:
    return SessionRecord(
        session_id=session_id, target=target, target_text=triple_text, truth=truth, mode=mode,
        ablations=config.ablations.as_dict(), plan=list(plan.steps), demos=demos, impression=impression,
        steps=history, verdict=verdict, tool_counts=_tool_counts(history), usage=caller.totals(),
        judgment_forced=forced, error=error, duration_s=round(time.perf_counter() - started, 6),
        config_checksum=config.config_checksum,
    )


def _error_verdict(message: str) -> Verdict:
    return Verdict(None, "", (), False, f"[session error] {message}")


def run_session(
    target: Triple,
    env: AgentEnv,
    config: SessionConfig,
    backend: Backend,
    *,
    ledger: UsageLedger | None = None,
    session_id: str = "session",
    truth: bool | None = None,
) -> SessionRecord:
    """Verify one triple. Never raises; failures end in an invalid-format verdict."""
    mode = config.effective_mode
    if mode == "zero-shot":
        return run_zero_shot(target, env, config, backend, ledger=ledger, session_id=session_id, truth=truth)
    if mode == "rag-baseline":
        return run_rag_baseline(target, env, config, backend, ledger=ledger, session_id=session_id, truth=truth)

    started = time.perf_counter()
    caller = _Caller(backend, config, ledger, session_id)
    tools = _session_tools(target, env, config)
    g = tools.graph
    triple_text = verbalize(target, g)
    tools_text = render_registry(registry(tools.enabled))
    plan, demos, impression = Plan(), [], ""
    history: list[HistoryEntry] = []
    forced = False
    try:
        trajs = []
        if config.ablations.memory and env.memory is not None and len(env.memory):
            trajs = retrieve(env.memory, target, config.k_memory, tools.encoder, g)
        demos = [t.text for t in trajs]
        demos_text = render_demos(trajs) if trajs else NO_DEMOS
        if config.impression_preask:
            impression = caller("", prompts.render("zeroshot.user", {"triple": triple_text})).text.strip()
        if config.ablations.planning:
            plan = generate_plan(caller, tools_text, demos_text, triple_text)
        system = prompts.render(
            "reason.system", {"tools": tools_text, "judgment criteria": config.judgment_criteria}
        )
        verdict = None
        for t in range(1, config.t_max + 1):
            user = prompts.render(
                "reason.user",
                {"plan": plan.render(), "trajectory case": demos_text, "triple": triple_text,
                 "history": render_history(history)},
            )
            parsed = parse_step(caller(system, user).text)
            if parsed.is_finish:
                verdict = parse_verdict(parsed.finish_text or "", history, _anchors(target, tools, history))
                break
            assert parsed.call is not None
            history.append(HistoryEntry(t, parsed.thought, parsed.action_text, parsed.call, dispatch(parsed.call, tools)))
        if verdict is None:
            forced = True
            user = prompts.render(
                "judge.user",
                {"impression": impression or "(not captured)", "plan": plan.render(),
                 "history": render_history(history), "triple": triple_text},
            )
            verdict = parse_verdict(caller(system, user).text, history, _anchors(target, tools, history))
        error = None
    except SessionAbort as exc:
        verdict, error = _error_verdict(str(exc)), str(exc)
    except Exception as exc:  # keep batch runs alive
        log.exception("session %s failed", session_id)
        verdict, error = _error_verdict(repr(exc)), repr(exc)
    return _record(session_id, target, triple_text, truth, mode, config, plan, demos, impression,
                   history, verdict, caller, forced, error, started)


def rag_sweep(target: Triple, tools: ToolEnv) -> list[ToolCall]:
    """The fixed retrieval sweep of the single-shot baseline, filtered by enabled tools."""
    g = tools.graph
    h, r, t = target.head, target.relation, target.tail
    hl, rl, tl = g.label(h), g.label(r), g.label(t)
    calls = [
        ToolCall(KG_DEFINITION, (h,), ("entity",)),
        ToolCall(KG_DEFINITION, (r,), ("relation",)),
        ToolCall(KG_DEFINITION, (t,), ("entity",)),
        ToolCall(KG_NEIGHBOR, (h, rl)),
        ToolCall(KG_NEIGHBOR, (t, rl)),
        ToolCall(KG_PATH, (h, t)),
        ToolCall(WIKI_EVIDENCE, (hl, tl)),
        ToolCall(WEB_EVIDENCE, (f"{hl} {rl} {tl}",)),
    ]
    return [c for c in calls if c.tool in tools.enabled]


def run_rag_baseline(
    target: Triple,
    env: AgentEnv,
    config: SessionConfig,
    backend: Backend,
    *,
    ledger: UsageLedger | None = None,
    session_id: str = "session",
    truth: bool | None = None,
) -> SessionRecord:
    """Run every tool once, concatenate the renderings, ask for a verdict in one completion."""
    started = time.perf_counter()
    caller = _Caller(backend, config, ledger, session_id)
    tools = _session_tools(target, env, config)
    triple_text = verbalize(target, tools.graph)
    history = [
        HistoryEntry(i, "", format_call(c), c, dispatch(c, tools))
        for i, c in enumerate(rag_sweep(target, tools), start=1)
    ]
    evidence = "\n\n".join(f"[{h.turn}] {h.action_text}\n{h.result.rendering}" for h in history) or "(no evidence retrieved)"
    try:
        text = caller(prompts.render("baseline.system", {}), prompts.render("rag.user", {"triple": triple_text, "evidence": evidence})).text
        verdict, error = parse_verdict(text, history, _anchors(target, tools, history)), None
    except SessionAbort as exc:
        verdict, error = _error_verdict(str(exc)), str(exc)
    return _record(session_id, target, triple_text, truth, "rag-baseline", config, Plan(), [], "",
                   history, verdict, caller, False, error, started)


def run_zero_shot(
    target: Triple,
    env: AgentEnv,
    config: SessionConfig,
    backend: Backend,
    *,
    ledger: UsageLedger | None = None,
    session_id: str = "session",
    truth: bool | None = None,
) -> SessionRecord:
    """One completion from the model's own knowledge, no tools."""
    started = time.perf_counter()
    caller = _Caller(backend, config, ledger, session_id)
    triple_text = verbalize(target, env.tools.graph)
    try:
        text = caller(prompts.render("baseline.system", {}), prompts.render("zeroshot.user", {"triple": triple_text})).text
        verdict, error = parse_verdict(text), None
    except SessionAbort as exc:
        verdict, error = _error_verdict(str(exc)), str(exc)
    return _record(session_id, target, triple_text, truth, "zero-shot", config, Plan(), [], "",
                   [], verdict, caller, False, error, started)


def run_batch(
    targets: Sequence[Triple | tuple[Triple, bool | None]],
    env: AgentEnv,
    config: SessionConfig,
    backend_factory: Callable[[Triple], Backend],
    *,
    concurrency: int = 50,
    ledger: UsageLedger | None = None,
) -> list[SessionRecord]:
    """Run sessions on a thread pool; records come back in input order.

    Session ids are the zero-padded input positions, so reruns line up.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    items = [(t, None) if isinstance(t, Triple) else t for t in targets]

    def one(i: int) -> SessionRecord:
        target, truth = items[i]
        sid = f"{i:06d}"
        try:
            backend = backend_factory(target)
        except Exception as exc:
            caller = _Caller(None, config, None, sid)  # type: ignore[arg-type]
            return _record(sid, target, verbalize(target, env.tools.graph), truth, config.effective_mode, config,
                           Plan(), [], "", [], _error_verdict(repr(exc)), caller, False, repr(exc), time.perf_counter())
        return run_session(target, env, config, backend, ledger=ledger, session_id=sid, truth=truth)

    if concurrency == 1:
        return [one(i) for i in range(len(items))]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, range(len(items))))


__all__ = [
    "ALL_TOOLS",
    "AgentEnv",
    "Ablations",
    "HistoryEntry",
    "Plan",
    "PlanStep",
    "SessionConfig",
    "SessionRecord",
    "Verdict",
    "generate_plan",
    "parse_plan",
    "parse_step",
    "parse_verdict",
    "run_batch",
    "run_rag_baseline",
    "run_session",
    "run_zero_shot",
]
