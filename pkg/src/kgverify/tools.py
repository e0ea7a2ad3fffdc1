"""The hybrid toolset: registry, call syntax, tool implementations and dispatch.

Five tools are exposed to the agent (three over the graph, two over external
text) plus the terminal ``Finish``. :func:`dispatch` never raises: unknown tools,
bad arity and internal failures all come back as error-status observations so
the agent can correct itself on the next turn.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Union

from kgverify.encoders import Encoder, tokenize
from kgverify.graph import (
    NO_EXCLUSION,
    KnowledgeGraph,
    ResolutionError,
    Triple,
    neighbors,
    resolve,
    resolve_exact,
)
from kgverify.pathsearch import Hop, Path, find_paths
from kgverify.providers import ProviderError, WebProvider, WebSnippet, WikiArticle, WikiProvider
from kgverify.retrieval import HybridConfig, cosine_or_zero, top_k

KG_DEFINITION = "KG_Definition"
KG_NEIGHBOR = "KG_Neighbor"
KG_PATH = "KG_Path"
WIKI_EVIDENCE = "Wiki_Evidence"
WEB_EVIDENCE = "Web_Evidence"
FINISH = "Finish"
FORMAT_ERROR = "__format_error__"

KG_TOOLS = frozenset({KG_DEFINITION, KG_NEIGHBOR, KG_PATH})
EXTERNAL_TOOLS = frozenset({WIKI_EVIDENCE, WEB_EVIDENCE})
ALL_TOOLS = KG_TOOLS | EXTERNAL_TOOLS

NO_PATHS_TEMPLATE = "No direct,2-hop or 3-hop paths found between {a} and {b}."
NO_WEB_RESULTS = "No relevant webpages found (API returned empty)."

# Variant names seen in curated trajectories, keyed case-insensitively.
TOOL_ALIASES: dict[str, str] = {
    "kg_basic_info_tool": KG_DEFINITION,
    "kg_basic_info": KG_DEFINITION,
    "kg_definition_tool": KG_DEFINITION,
    "kg_neighbor_tool": KG_NEIGHBOR,
    "kg_neighbour": KG_NEIGHBOR,
    "kg_neighbour_tool": KG_NEIGHBOR,
    "kg_path_tool": KG_PATH,
    "wiki_evidence_tool": WIKI_EVIDENCE,
    "wikipedia_evidence_tool": WIKI_EVIDENCE,
    "web_evidence_tool": WEB_EVIDENCE,
    "web_search_tool": WEB_EVIDENCE,
}


@dataclass(frozen=True)
class ToolSpec:
    name: str
    parameters: tuple[tuple[str, str], ...]
    usage: str
    min_args: int | None = None

    @property
    def max_args(self) -> int:
        return len(self.parameters)

    @property
    def arity(self) -> tuple[int, int]:
        lo = self.max_args if self.min_args is None else self.min_args
        return lo, self.max_args

    @property
    def signature(self) -> str:
        return f"{self.name}({', '.join(p for p, _ in self.parameters)})"


_SPECS: tuple[ToolSpec, ...] = (
    ToolSpec(
        KG_DEFINITION,
        (("entity", "str, an entity name; write relation='<name>' instead to look up a relation"),),
        "Returns schema metadata (label, description, aliases, types; domain and range for relations) "
        "to establish basic definitions for nodes and edges.",
    ),
    ToolSpec(
        KG_NEIGHBOR,
        (("entity", "str, the entity whose 1-hop neighborhood is fetched"),
         ("relation", "str, the relation used to rank neighboring edges")),
        "Returns the top-20 neighboring triples whose relation is semantically closest to the given "
        "relation, to analyze local subgraphs.",
    ),
    ToolSpec(
        KG_PATH,
        (("entity_a", "str, the first entity"), ("entity_b", "str, the second entity")),
        "Returns explicit 1 to 3-hop relational paths between the two entities to verify structural "
        "connectivity and implicit links.",
    ),
    ToolSpec(
        WIKI_EVIDENCE,
        (("entity_a", "str, an entity name"),
         ("entity_b", "str, optional second entity name")),
        "With one entity returns its encyclopedia summary and attributes; with two entities returns "
        "passages where both are mentioned close together.",
        min_args=1,
    ),
    ToolSpec(
        WEB_EVIDENCE,
        (("question", "str, a natural-language search question"),),
        "Returns the top-5 web search snippets as a fallback for long-tail or recent facts.",
    ),
    ToolSpec(
        FINISH,
        (("answer", "str, the final verdict"),),
        "Ends the session. Equivalent to writing: Final Answer: [Correct/Incorrect] Because [explanation]",
    ),
)
SPECS: dict[str, ToolSpec] = {s.name: s for s in _SPECS}

_KEYWORD_SLOTS: dict[str, dict[str, int]] = {
    KG_DEFINITION: {"entity": 0, "relation": 0},
    KG_NEIGHBOR: {"entity": 0, "relation": 1},
    KG_PATH: {"entity_a": 0, "entity_b": 1, "head": 0, "tail": 1},
    WIKI_EVIDENCE: {"entity_a": 0, "entity": 0, "entity_b": 1},
    WEB_EVIDENCE: {"question": 0, "query": 0},
    FINISH: {"answer": 0},
}
KEYWORDS = frozenset(k for slots in _KEYWORD_SLOTS.values() for k in slots)


def registry(enabled: Iterable[str] | None = None) -> list[ToolSpec]:
    """The tool specs shown to the agent, optionally restricted to ``enabled`` tools."""
    allowed = ALL_TOOLS if enabled is None else frozenset(enabled)
    return [s for s in _SPECS if s.name == FINISH or s.name in allowed]


def render_registry(specs: Iterable[ToolSpec]) -> str:
    """Prompt rendering of the tool definitions (byte-stable)."""
    blocks = []
    for i, spec in enumerate(specs, start=1):
        lines = [f"{i}. {spec.signature}"]
        for name, desc in spec.parameters:
            lines.append(f"   - {name}: {desc}")
        lines.append(f"   Usage: {spec.usage}")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def canonical_tool(name: str) -> str:
    """Map a tool name or known alias onto its canonical name (unknown names pass through)."""
    if name in SPECS:
        return name
    low = name.lower()
    for canon in SPECS:
        if canon.lower() == low:
            return canon
    return TOOL_ALIASES.get(low, name)


# --------------------------------------------------------------------------- call syntax


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: tuple[str, ...] = ()
    keywords: tuple[str | None, ...] = ()

    def __post_init__(self) -> None:
        if self.keywords and len(self.keywords) != len(self.arguments):
            raise ValueError("keywords must align with arguments")

    def keyword(self, i: int) -> str | None:
        return self.keywords[i] if self.keywords else None

    def as_dict(self) -> dict:
        d: dict = {"tool": self.tool, "args": list(self.arguments)}
        if any(self.keywords):
            d["keywords"] = list(self.keywords)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ToolCall:
        args = tuple(str(a) for a in d.get("args", ()))
        kws = tuple(d.get("keywords") or ())
        return cls(str(d["tool"]), args, kws)


class CallFormatError(ValueError):
    pass


_NAME = re.compile(r"\s*([A-Za-z_]\w*)\s*[(\[]")
_KW = re.compile(r"(" + "|".join(sorted(KEYWORDS, key=len, reverse=True)) + r")\s*[=:]\s*", re.IGNORECASE)
_QUOTES = {"'": "'", '"': '"', "“": "”", "‘": "’"}


def _closing_quote(text: str, start: int, close_char: str) -> int:
    """Index of the quote that closes a value opened at ``start``; -1 if none.

    A quote only closes when followed (after spaces) by a separator, a closing
    bracket or the end, so apostrophes inside names survive.
    """
    j = start
    while True:
        j = text.find(close_char, j)
        if j < 0:
            return -1
        k = j + 1
        while k < len(text) and text[k] in " \t":
            k += 1
        if k >= len(text) or text[k] in ",)]":
            return j
        j += 1


def parse_call(text: str) -> ToolCall:
    """Parse ``Name(v1, key=v2, ...)``; values may be quoted or bare.

    Raises:
        CallFormatError: no call syntax, unterminated quote or unbalanced brackets.
    """
    m = _NAME.match(text)
    if not m:
        raise CallFormatError("expected ToolName(value, ...)")
    name = canonical_tool(m.group(1))
    closer = ")" if text[m.end() - 1] == "(" else "]"
    i = m.end()
    n = len(text)
    args: list[str] = []
    kws: list[str | None] = []
    while True:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            raise CallFormatError("unbalanced parentheses in action")
        if text[i] == closer and not args:
            return ToolCall(name)
        kw = None
        km = _KW.match(text, i)
        if km:
            kw = km.group(1).lower()
            i = km.end()
        if i < n and text[i] in _QUOTES:
            close_char = _QUOTES[text[i]]
            j = _closing_quote(text, i + 1, close_char)
            if j < 0:
                raise CallFormatError("unterminated quoted value")
            value = text[i + 1 : j]
            i = j + 1
        else:
            depth = 0
            j = i
            while j < n:
                c = text[j]
                if c in "([":
                    depth += 1
                elif c in ")]":
                    if depth == 0:
                        break
                    depth -= 1
                elif c == "," and depth == 0:
                    break
                j += 1
            value = text[i:j].strip()
            i = j
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            raise CallFormatError("unbalanced parentheses in action")
        if value or kw:
            args.append(value)
            kws.append(kw)
        if text[i] == ",":
            i += 1
            continue
        if text[i] == closer:
            return ToolCall(name, tuple(args), tuple(kws) if any(kws) else ())
        raise CallFormatError(f"unexpected character {text[i]!r} in action")


def format_call(call: ToolCall) -> str:
    """Render a call in the syntax accepted by :func:`parse_call`."""
    parts = []
    for i, value in enumerate(call.arguments):
        q = '"' if "'" in value else "'"
        kw = call.keyword(i)
        parts.append(f"{kw}={q}{value}{q}" if kw else f"{q}{value}{q}")
    return f"{call.tool}({', '.join(parts)})"


# --------------------------------------------------------------------------- results and environment


@dataclass(frozen=True)
class WikiPassage:
    title: str
    text: str


Evidence = Union[Triple, Path, WebSnippet, WikiPassage]


def evidence_to_dict(e: Evidence) -> dict:
    if isinstance(e, Triple):
        return {"kind": "triple", **e.as_dict()}
    if isinstance(e, Path):
        return {"kind": "path", "hops": [[h.source, h.relation, h.direction, h.target] for h in e.hops]}
    if isinstance(e, WebSnippet):
        return {"kind": "snippet", "text": e.text, "source": e.source}
    return {"kind": "passage", "title": e.title, "text": e.text}


def evidence_from_dict(d: dict) -> Evidence:
    kind = d["kind"]
    if kind == "triple":
        return Triple(d["head"], d["relation"], d["tail"])
    if kind == "path":
        return Path(tuple(Hop(*h) for h in d["hops"]))
    if kind == "snippet":
        return WebSnippet(d["text"], d.get("source", "unknown"))
    if kind == "passage":
        return WikiPassage(d["title"], d["text"])
    raise ValueError(f"unknown evidence kind {kind!r}")


@dataclass(frozen=True)
class ToolResult:
    tool: str
    status: Literal["ok", "empty", "error"]
    rendering: str
    payload: tuple[Evidence, ...] = ()
    provenance: tuple[str, ...] = ()
    executed: bool = True

    def __post_init__(self) -> None:
        if not self.rendering:
            raise ValueError("tool results always carry a rendering")
        if len(self.payload) != len(self.provenance):
            raise ValueError("one provenance tag per payload item")

    def triples(self) -> list[Triple]:
        """Every KG edge carried by the payload."""
        out: list[Triple] = []
        for item in self.payload:
            if isinstance(item, Triple):
                out.append(item)
            elif isinstance(item, Path):
                out.extend(item.triples())
        return out


@dataclass(frozen=True)
class ToolLimits:
    neighbor_limit: int = 20
    max_paths: int = 20
    max_hops: int = 3
    degree_cap: int | None = 1000
    web_k: int = 5
    web_pool: int = 10
    wiki_k: int = 5
    tau_words: int = 50
    summary_sentences: int = 3
    min_similarity: float = 0.35

    def __post_init__(self) -> None:
        if self.neighbor_limit < 1 or self.max_paths < 1 or self.web_k < 1 or self.wiki_k < 1:
            raise ValueError("result limits must be >= 1")
        if self.max_hops not in (1, 2, 3):
            raise ValueError("max_hops must be 1, 2 or 3")
        if self.tau_words < 0:
            raise ValueError("tau_words must be >= 0")


@dataclass(frozen=True)
class ToolEnv:
    """Everything a tool needs. Shared read-only across sessions except ``exclude``."""

    graph: KnowledgeGraph
    encoder: Encoder
    wiki: WikiProvider | None = None
    web: WebProvider | None = None
    exclude: frozenset[Triple] = NO_EXCLUSION
    limits: ToolLimits = field(default_factory=ToolLimits)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    enabled: frozenset[str] = ALL_TOOLS

    def with_exclusion(self, triples: Iterable[Triple]) -> ToolEnv:
        return replace(self, exclude=frozenset(triples))

    def with_enabled(self, tools: Iterable[str]) -> ToolEnv:
        return replace(self, enabled=frozenset(tools) & ALL_TOOLS)


def _empty(tool: str, message: str) -> ToolResult:
    return ToolResult(tool, "empty", message)


def _error(tool: str, message: str) -> ToolResult:
    return ToolResult(tool, "error", message)


def _reject(tool: str, message: str) -> ToolResult:
    """A call refused before reaching any tool (not counted as executed)."""
    return ToolResult(tool, "error", message, executed=False)


def _lookup(env: ToolEnv, name: str, kind: Literal["entity", "relation"]) -> str | None:
    try:
        return resolve(env.graph, name, kind, env.encoder, min_similarity=env.limits.min_similarity)
    except ResolutionError:
        return None


def _entity_types(env: ToolEnv, eid: str) -> list[str]:
    g = env.graph
    found = {
        tail
        for rel, tail in g.out_index.get(eid, ())
        if rel in g.typing_relations and Triple(eid, rel, tail) not in env.exclude
    }
    return sorted(found)


def _profile(header: str, fields: list[tuple[str, str]]) -> str:
    body = [f"{k}: {v}" for k, v in fields if v]
    last = body[-1].rstrip(".")
    return header + "\n" + ";\n".join(body[:-1] + [last]) + "."


# --------------------------------------------------------------------------- tools


def kg_definition(target: str, kind: Literal["entity", "relation"] | None, env: ToolEnv) -> ToolResult:
    """Entity or relation profile; ``kind=None`` tries entities first, then relations."""
    g = env.graph
    hit: tuple[str, str] | None = None
    kinds: tuple[Literal["entity", "relation"], ...] = (kind,) if kind else ("entity", "relation")
    for k in kinds:
        rid = resolve_exact(g, target, k)
        if rid is not None:
            hit = (k, rid)
            break
    if hit is None:
        for k in kinds:
            rid = _lookup(env, target, k)
            if rid is not None:
                hit = (k, rid)
                break
    if hit is None:
        what = kind or "entity or relation"
        return _empty(KG_DEFINITION, f"No {what} matches '{target}' in the knowledge graph.")

    k, rid = hit
    if k == "entity":
        rec = g.entities[rid]
        types = _entity_types(env, rid)
        typing_rel = sorted(g.typing_relations)
        payload = tuple(
            Triple(rid, r, t) for t in types for r in typing_rel if Triple(rid, r, t) in g.triples
        )
        text = _profile(
            f"Entity Profile: {rid}",
            [
                ("Label", rec.label),
                ("Description", rec.description),
                ("Type", ", ".join(g.label(t) for t in types)),
                ("Aliases", ", ".join(rec.aliases)),
            ],
        )
        return ToolResult(KG_DEFINITION, "ok", text, payload, ("kg",) * len(payload))

    rec = g.relations[rid]

    def constraint(types: frozenset[str]) -> str:
        if not types:
            return "None defined (Open Domain / Any)"
        return "; ".join(sorted((g.label(t) for t in types), key=lambda x: (x.casefold(), x)))

    text = _profile(
        f"Relation Profile: {rid}",
        [
            ("Label", rec.label),
            ("Description", rec.description),
            ("Aliases", ", ".join(rec.aliases)),
            ("Subject Constraint (Domain)", constraint(rec.domain_types)),
            ("Object Constraint (Range)", constraint(rec.range_types)),
        ],
    )
    return ToolResult(KG_DEFINITION, "ok", text)


def kg_neighbor(entity: str, relation: str, env: ToolEnv) -> ToolResult:
    """1-hop edges in both directions ranked by relation-label cosine to ``relation``."""
    g = env.graph
    eid = _lookup(env, entity, "entity")
    if eid is None:
        return _empty(KG_NEIGHBOR, f"No entity matches '{entity}' in the knowledge graph.")
    edges, _ = neighbors(g, eid, env.exclude)
    if not edges:
        return _empty(KG_NEIGHBOR, f"No neighbors found for {g.label(eid)} ({eid}).")
    rid = resolve_exact(g, relation, "relation")
    query = g.relations[rid].label if rid is not None else relation
    rel_ids = sorted({e.relation for e in edges})
    vecs = env.encoder.encode([query, *(g.label(r) for r in rel_ids)])
    sim = {r: cosine_or_zero(vecs[0], vecs[i + 1]) for i, r in enumerate(rel_ids)}
    ranked = sorted(edges, key=lambda e: -sim[e.relation])[: env.limits.neighbor_limit]
    lines = [
        f"Neighbors of {g.label(eid)} ({eid}) ranked by relevance to '{query}' "
        f"(showing {len(ranked)} of {len(edges)}):"
    ]
    for e in ranked:
        arrow = "->" if e.direction == "out" else "<-"
        lines.append(f"[{g.label(e.relation)}] {arrow} {g.label(e.other)}")
    payload = tuple(e.triple(eid) for e in ranked)
    return ToolResult(KG_NEIGHBOR, "ok", "\n".join(lines), payload, ("kg",) * len(payload))


def kg_path(entity_a: str, entity_b: str, env: ToolEnv) -> ToolResult:
    """Relational paths of 1 to ``max_hops`` hops, shortest first."""
    g = env.graph
    a = _lookup(env, entity_a, "entity")
    b = _lookup(env, entity_b, "entity")
    missing = [name for name, rid in ((entity_a, a), (entity_b, b)) if rid is None]
    if missing:
        return _empty(KG_PATH, "No entity matches " + " or ".join(f"'{m}'" for m in missing) + " in the knowledge graph.")
    lim = env.limits
    paths = find_paths(g, a, b, env.exclude, max_hops=lim.max_hops, max_paths=lim.max_paths, degree_cap=lim.degree_cap)
    if not paths:
        return _empty(KG_PATH, NO_PATHS_TEMPLATE.format(a=a, b=b))
    text = "\n".join(p.render(g.label) for p in paths)
    return ToolResult(KG_PATH, "ok", text, tuple(paths), ("kg",) * len(paths))


def _surface_forms(env: ToolEnv, name: str) -> list[str]:
    forms = [name]
    eid = resolve_exact(env.graph, name, "entity")
    if eid is not None:
        rec = env.graph.entities[eid]
        forms += [rec.label, *rec.aliases]
    seen: dict[str, str] = {}
    for f in forms:
        toks = " ".join(tokenize(f))
        if toks and toks not in seen:
            seen[toks] = f
    return list(seen.values())


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_END.split(text) if s.strip()]


def _mentions(words: list[str], form: list[str]) -> list[tuple[int, int]]:
    """``(start, end)`` word spans (end exclusive) where ``form`` occurs."""
    n = len(form)
    return [(i, i + n) for i in range(len(words) - n + 1) if words[i : i + n] == form]


def cooccurrence_passages(article: WikiArticle, forms_a: list[str], forms_b: list[str], tau: int) -> list[str]:
    """Sentence windows where a form of A and a form of B are at most ``tau`` words apart.

    The gap is the number of words strictly between the two mentions. A window
    spans every sentence from the first mention to the second.
    """
    sentences = [s for p in article.body for s in split_sentences(p)]
    words: list[str] = []
    sent_of: list[int] = []
    for si, s in enumerate(sentences):
        toks = tokenize(s)
        words.extend(toks)
        sent_of.extend([si] * len(toks))
    spans_a = [sp for f in forms_a for sp in _mentions(words, tokenize(f))]
    spans_b = [sp for f in forms_b for sp in _mentions(words, tokenize(f))]
    windows: set[tuple[int, int]] = set()
    for sa, ea in spans_a:
        for sb, eb in spans_b:
            if ea <= sb:
                gap = sb - ea
            elif eb <= sa:
                gap = sa - eb
            else:
                continue
            if gap <= tau:
                lo = sent_of[min(sa, sb)]
                hi = sent_of[max(ea, eb) - 1]
                windows.add((lo, hi))
    return [" ".join(sentences[lo : hi + 1]) for lo, hi in sorted(windows)]


def _summary(article: WikiArticle, n_sentences: int) -> str:
    body = article.body
    if not body:
        return ""
    return " ".join(split_sentences(body[0])[:n_sentences])


def wiki_evidence(args: list[str], env: ToolEnv) -> ToolResult:
    """Entity mode with one argument, co-occurrence mode with two."""
    if env.wiki is None:
        return _error(WIKI_EVIDENCE, "Wiki evidence is not configured for this run.")
    lim = env.limits
    try:
        if len(args) == 1:
            art = None
            for form in _surface_forms(env, args[0]):
                art = env.wiki.article(form)
                if art is not None:
                    break
            if art is None:
                return _empty(WIKI_EVIDENCE, f"No Wikipedia article found for '{args[0]}'.")
            lines = [f"Wikipedia: {art.title}", f"Summary: {_summary(art, lim.summary_sentences)}"]
            if art.infobox:
                lines.append("Attributes: " + "; ".join(f"{k} = {v}" for k, v in art.infobox))
            passage = WikiPassage(art.title, lines[1][len("Summary: "):])
            return ToolResult(WIKI_EVIDENCE, "ok", "\n".join(lines), (passage,), (f"wiki:{art.title}",))

        a, b = args
        forms_a, forms_b = _surface_forms(env, a), _surface_forms(env, b)
        docs: dict[str, WikiArticle] = {}
        for f in forms_a + forms_b:
            art = env.wiki.article(f)
            if art is not None:
                docs.setdefault(art.title, art)
        for art in env.wiki.articles():
            docs.setdefault(art.title, art)
    except ProviderError as exc:
        return _error(WIKI_EVIDENCE, f"Wiki evidence failed: {exc}")

    pool: list[tuple[str, str]] = []
    titles: dict[str, str] = {}
    for title in sorted(docs):
        for j, text in enumerate(cooccurrence_passages(docs[title], forms_a, forms_b, lim.tau_words)):
            pid = f"{title}#{j:04d}"
            pool.append((pid, text))
            titles[pid] = title
    if not pool:
        return _empty(WIKI_EVIDENCE, f"No sentences mention both '{a}' and '{b}' within {lim.tau_words} words.")
    texts = dict(pool)
    ranked = top_k(f"{a} {b}", pool, lim.wiki_k, env.hybrid, env.encoder)
    lines = [f"Passages mentioning both '{a}' and '{b}':"]
    payload = []
    for i, (pid, _score) in enumerate(ranked, start=1):
        lines.append(f'Passage {i}: "{texts[pid]}" (Source: Wikipedia: {titles[pid]})')
        payload.append(WikiPassage(titles[pid], texts[pid]))
    return ToolResult(
        WIKI_EVIDENCE, "ok", "\n".join(lines), tuple(payload), tuple(f"wiki:{p.title}" for p in payload)
    )


def web_evidence(question: str, env: ToolEnv, k: int | None = None) -> ToolResult:
    """Top-``k`` search snippets, re-ranked by hybrid score against the question."""
    if env.web is None:
        return _error(WEB_EVIDENCE, "Web evidence is not configured for this run.")
    if not question.strip():
        return _error(WEB_EVIDENCE, "Web_Evidence needs a non-empty question.")
    k = env.limits.web_k if k is None else k
    try:
        found = env.web.search(question, max(k, env.limits.web_pool))
    except ProviderError as exc:
        return _error(WEB_EVIDENCE, f"Web search failed: {exc}")
    if not found:
        return _empty(WEB_EVIDENCE, NO_WEB_RESULTS)
    pool = [(f"{i:04d}", s.text) for i, s in enumerate(found)]
    ranked = top_k(question, pool, k, env.hybrid, env.encoder)
    chosen = [found[int(pid)] for pid, _ in ranked]
    lines = [f'Snippet {i}: "{s.text}" (Source: {s.source})' for i, s in enumerate(chosen, start=1)]
    return ToolResult(
        WEB_EVIDENCE, "ok", "\n".join(lines), tuple(chosen), tuple(f"web:{s.source}" for s in chosen)
    )


# --------------------------------------------------------------------------- dispatch


def protocol_hint(env: ToolEnv | None = None) -> str:
    names = [s.name for s in registry(env.enabled if env else None)]
    return (
        "Reply with 'Thought: ...' followed by 'Action: ToolName(value, ...)' using one of: "
        + ", ".join(names)
        + ". When the evidence suffices, reply 'Final Answer: [Correct/Incorrect] Because ...'."
    )


def format_error_call(detail: str) -> ToolCall:
    return ToolCall(FORMAT_ERROR, (detail,))


def _bind(spec: ToolSpec, call: ToolCall) -> tuple[list[str], str | None]:
    """Order arguments by parameter slot. Returns (values, error message)."""
    slots = _KEYWORD_SLOTS[spec.name]
    values: list[str | None] = [None] * spec.max_args
    pos = 0
    for i, value in enumerate(call.arguments):
        kw = call.keyword(i)
        if kw is not None and kw in slots:
            slot = slots[kw]
        else:
            while pos < spec.max_args and values[pos] is not None:
                pos += 1
            slot = pos
        if slot >= spec.max_args or values[slot] is not None:
            return [], _arity_message(spec, len(call.arguments))
        values[slot] = value
    filled = [v for v in values if v is not None]
    lo, hi = spec.arity
    if not lo <= len(filled) <= hi or any(v is None for v in values[: len(filled)]):
        return [], _arity_message(spec, len(call.arguments))
    return filled, None


def _arity_message(spec: ToolSpec, got: int) -> str:
    lo, hi = spec.arity
    want = str(lo) if lo == hi else f"{lo} or {hi}"
    return f"{spec.name} takes {want} argument(s), got {got}. Signature: {spec.signature}"


def dispatch(call: ToolCall, env: ToolEnv) -> ToolResult:
    """Route a call to its tool. Never raises; failures become error observations."""
    tool = call.tool
    try:
        if tool == FORMAT_ERROR:
            detail = call.arguments[0] if call.arguments else "unparseable output"
            return _reject(FORMAT_ERROR, f"Invalid response format: {detail}. {protocol_hint(env)}")
        spec = SPECS.get(tool)
        valid = ", ".join(s.name for s in registry(env.enabled))
        if spec is None:
            return _reject(tool or "?", f"Unknown tool '{tool}'. Valid tools: {valid}.")
        if tool == FINISH:
            return _reject(FINISH, "Finish ends the session and is not executed as a tool. " + protocol_hint(env))
        if tool not in env.enabled:
            return _reject(tool, f"Tool '{tool}' is not available in this run. Valid tools: {valid}.")
        args, problem = _bind(spec, call)
        if problem:
            return _reject(tool, problem)
        if any(not a.strip() for a in args):
            return _reject(tool, f"{tool} arguments must be non-empty. Signature: {spec.signature}")
        if tool == KG_DEFINITION:
            kw = call.keyword(0)
            kind = kw if kw in ("entity", "relation") else None
            return kg_definition(args[0], kind, env)  # type: ignore[arg-type]
        if tool == KG_NEIGHBOR:
            return kg_neighbor(args[0], args[1], env)
        if tool == KG_PATH:
            return kg_path(args[0], args[1], env)
        if tool == WIKI_EVIDENCE:
            return wiki_evidence(args, env)
        return web_evidence(args[0], env)
    except Exception as exc:  # the loop must survive any tool failure
        return _error(tool or "?", f"Tool '{tool}' failed: {type(exc).__name__}: {exc}")

