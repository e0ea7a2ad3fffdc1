"""Chat-completion gateway: scripted and remote backends, stop handling, usage accounting."""

from __future__ import annotations

import json
import os
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Literal, Protocol, Sequence

import httpx

Role = Literal["system", "user", "assistant"]
FinishReason = Literal["stop", "length", "error"]

REASONING_STOPS: tuple[str, ...] = ("[Observation]", "\nObservation:")


class BackendError(RuntimeError):
    """Hard backend failure (transport exhausted, scripted miss, malformed reply)."""


class ScriptMiss(BackendError):
    pass


@dataclass(frozen=True)
class Message:
    role: Role
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = REASONING_STOPS
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    @property
    def last_user(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("usage counts are non-negative")

    def __add__(self, other: Usage) -> Usage:
        return Usage(self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Usage = Usage()
    finish_reason: FinishReason = "stop"
    error: str | None = None


def truncate_at_stop(text: str, stops: Iterable[str]) -> tuple[str, bool]:
    """Cut ``text`` before the earliest stop sequence. Returns (text, stopped)."""
    cut = len(text)
    for s in stops:
        if s:
            i = text.find(s)
            if 0 <= i < cut:
                cut = i
    return text[:cut], cut < len(text)


def whitespace_tokens(text: str) -> int:
    return len(text.split())


class Backend(Protocol):
    kind: str

    def complete(self, req: ChatRequest) -> ChatResponse: ...


# --------------------------------------------------------------------------- scripted


@dataclass(frozen=True)
class ScriptEntry:
    match: str
    reply: str
    target: str | None = None


class ScriptedBackend:
    """Deterministic offline playback.

    Each request consumes the first unused entry whose ``match`` substring occurs
    in the last user message. Usage is synthesized from whitespace token counts.
    """

    kind = "scripted"

    def __init__(self, entries: Sequence[ScriptEntry]) -> None:
        self.entries = tuple(entries)
        self._used = [False] * len(self.entries)
        self._lock = threading.Lock()

    def fork(self) -> ScriptedBackend:
        """A fresh playback cursor over the same entries."""
        return ScriptedBackend(self.entries)

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def complete(self, req: ChatRequest) -> ChatResponse:
        prompt = req.last_user
        with self._lock:
            for i, entry in enumerate(self.entries):
                if not self._used[i] and entry.match in prompt:
                    self._used[i] = True
                    break
            else:
                head = " ".join(prompt.split())[:120]
                raise ScriptMiss(f"no scripted reply matches prompt starting {head!r}")
        text, stopped = truncate_at_stop(entry.reply, req.stop_sequences)
        usage = Usage(whitespace_tokens(req.prompt_text), whitespace_tokens(text))
        return ChatResponse(text, usage, "stop")


class ScriptLibrary:
    """Script entries grouped by target triple key (``head|relation|tail``).

    Entries without a target are shared and appended after the target's own.
    """

    def __init__(self, entries: Sequence[ScriptEntry]) -> None:
        self._by_target: dict[str | None, list[ScriptEntry]] = defaultdict(list)
        for e in entries:
            self._by_target[e.target].append(e)

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike) -> ScriptLibrary:
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    entries.append(ScriptEntry(str(d["match"]), str(d["reply"]), d.get("target")))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad script record: {exc}") from exc
        return cls(entries)

    @property
    def targets(self) -> list[str]:
        return sorted(k for k in self._by_target if k is not None)

    def backend(self, target_key: str | None = None) -> ScriptedBackend:
        own = self._by_target.get(target_key, []) if target_key is not None else []
        return ScriptedBackend([*own, *self._by_target.get(None, [])])


# --------------------------------------------------------------------------- remote


class RemoteBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    Transient failures (transport errors, 429, 5xx) are retried ``retries`` times
    with exponential backoff; afterwards the response has ``finish_reason="error"``.
    """

    kind = "remote"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "KGVERIFY_API_KEY",
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _payload(self, req: ChatRequest) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "stop": list(req.stop_sequences)[:4],
            "max_tokens": req.max_output_tokens,
        }

    def complete(self, req: ChatRequest) -> ChatResponse:
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=self._payload(req), headers=headers)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                return ChatResponse("", Usage(), "error", f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                choice = body["choices"][0]
                raw = choice["message"].get("content") or ""
                usage_d = body.get("usage") or {}
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                return ChatResponse("", Usage(), "error", f"malformed response: {exc}")
            text, _ = truncate_at_stop(raw, req.stop_sequences)
            if "prompt_tokens" in usage_d:
                usage = Usage(int(usage_d.get("prompt_tokens", 0)), int(usage_d.get("completion_tokens", 0)))
            else:
                usage = Usage(whitespace_tokens(req.prompt_text), whitespace_tokens(text))
            reason: FinishReason = "length" if choice.get("finish_reason") == "length" else "stop"
            return ChatResponse(text, usage, reason)
        return ChatResponse("", Usage(), "error", f"retries exhausted: {last}")


# --------------------------------------------------------------------------- gateway


class _Limiter:
    """Process-wide cap on in-flight completions; resizable between runs."""

    def __init__(self, n: int) -> None:
        self._lock = threading.Lock()
        self._sem = threading.BoundedSemaphore(n)
        self.size = n

    def resize(self, n: int) -> None:
        if n < 1:
            raise ValueError("concurrency must be >= 1")
        with self._lock:
            self._sem = threading.BoundedSemaphore(n)
            self.size = n

    @contextmanager
    def slot(self) -> Iterator[None]:
        sem = self._sem
        sem.acquire()
        try:
            yield
        finally:
            sem.release()


COMPLETION_LIMIT = _Limiter(50)


def complete(
    backend: Backend,
    req: ChatRequest,
    ledger: UsageLedger | None = None,
    session_id: str | None = None,
) -> ChatResponse:
    """Run one completion under the process-wide limiter and record its usage.

    Backend exceptions become ``finish_reason="error"`` responses; the returned
    text never contains a configured stop sequence.
    """
    try:
        with COMPLETION_LIMIT.slot():
            resp = backend.complete(req)
    except BackendError as exc:
        resp = ChatResponse("", Usage(), "error", str(exc))
    text, _ = truncate_at_stop(resp.text, req.stop_sequences)
    if text != resp.text:
        resp = ChatResponse(text, resp.usage, resp.finish_reason, resp.error)
    if ledger is not None and session_id is not None:
        ledger.record(session_id, resp.usage)
    return resp


# --------------------------------------------------------------------------- accounting


@dataclass(frozen=True)
class Pricing:
    input_per_token: float = 0.0
    output_per_token: float = 0.0
    currency: str = "USD"

    @classmethod
    def per_million(cls, input_price: float, output_price: float, currency: str = "USD") -> Pricing:
        return cls(input_price / 1e6, output_price / 1e6, currency)

    def cost(self, usage: Usage) -> float:
        return usage.input_tokens * self.input_per_token + usage.output_tokens * self.output_per_token


@dataclass
class SessionUsage:
    turns: int = 0
    input_tokens: int = 0
    output_tokens: int = 0

    @property
    def usage(self) -> Usage:
        return Usage(self.input_tokens, self.output_tokens)


@dataclass
class UsageLedger:
    """Thread-safe per-call usage log with per-session totals."""

    pricing: Pricing = field(default_factory=Pricing)
    _calls: list[tuple[str, Usage]] = field(default_factory=list, repr=False)
    _sessions: dict[str, SessionUsage] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, session_id: str, usage: Usage) -> None:
        with self._lock:
            self._calls.append((session_id, usage))
            s = self._sessions.setdefault(session_id, SessionUsage())
            s.turns += 1
            s.input_tokens += usage.input_tokens
            s.output_tokens += usage.output_tokens

    def session(self, session_id: str) -> SessionUsage:
        with self._lock:
            s = self._sessions.get(session_id, SessionUsage())
            return SessionUsage(s.turns, s.input_tokens, s.output_tokens)

    def calls(self) -> list[tuple[str, Usage]]:
        with self._lock:
            return list(self._calls)

    def sessions(self) -> dict[str, SessionUsage]:
        with self._lock:
            return {k: SessionUsage(v.turns, v.input_tokens, v.output_tokens) for k, v in self._sessions.items()}

    def total(self) -> Usage:
        with self._lock:
            return sum((u for _, u in self._calls), Usage())


@dataclass(frozen=True)
class CostRow:
    label: str
    sessions: int
    avg_turns: float
    avg_input_tokens: float
    avg_output_tokens: float
    avg_cost: float
    currency: str


@dataclass(frozen=True)
class CostTable:
    rows: tuple[CostRow, ...]

    def render(self) -> str:
        if not self.rows:
            return "(no sessions)"
        head = f"{'Dataset':<20} {'Avg. Interaction Turns':>22} {'Avg. Input token':>17} {'Avg. Output token':>18} {'Avg. Cost':>10}"
        lines = [head]
        for r in self.rows:
            lines.append(
                f"{r.label:<20} {r.avg_turns:>22.2f} {r.avg_input_tokens:>17,.2f} "
                f"{r.avg_output_tokens:>18,.2f} {r.avg_cost:>10.4f}"
            )
        return "\n".join(lines)


def cost_row(label: str, usages: Sequence[SessionUsage], pricing: Pricing) -> CostRow | None:
    if not usages:
        return None
    n = len(usages)
    return CostRow(
        label,
        n,
        sum(u.turns for u in usages) / n,
        sum(u.input_tokens for u in usages) / n,
        sum(u.output_tokens for u in usages) / n,
        sum(pricing.cost(u.usage) for u in usages) / n,
        pricing.currency,
    )


def record_and_report(
    ledger: UsageLedger, sessions: Iterable[str] | None = None, label: str = "run"
) -> CostTable:
    """Averages over the given session ids (all recorded sessions by default)."""
    per = ledger.sessions()
    ids = sorted(per) if sessions is None else list(sessions)
    row = cost_row(label, [per.get(i, SessionUsage()) for i in ids], ledger.pricing)
    return CostTable((row,) if row else ())
