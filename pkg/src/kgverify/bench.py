"""Benchmark harness: type-constrained negatives, balanced test sets, metrics, thresholds, tool stats."""

from __future__ import annotations

import json
import logging
import math
import os
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from kgverify.graph import KnowledgeGraph, Triple
from kgverify.llm import Pricing, SessionUsage, cost_row

log = logging.getLogger(__name__)

Provenance = Literal["original", "corrupted-head", "corrupted-tail"]
Direction = Literal["higher-is-true", "lower-is-true"]

UNTYPED: tuple[str, ...] = ()
"""Signature shared by entities without any typing edge."""

REJECTION_ATTEMPTS = 32
SHARED_TYPE_FALLBACK = "shared-type"


# --------------------------------------------------------------------------- labeled data


@dataclass(frozen=True)
class LabeledTriple:
    triple: Triple
    label: bool
    provenance: Provenance = "original"
    source: Triple | None = None
    fallback: str | None = None

    def __post_init__(self) -> None:
        if self.label and self.provenance != "original":
            raise ValueError("positives keep provenance 'original'")
        if not self.label and self.provenance == "original":
            raise ValueError("negatives must record their corruption side")

    def to_record(self) -> dict:
        d: dict = {**self.triple.as_dict(), "label": self.label, "provenance": self.provenance,
                   "source": self.source.as_dict() if self.source else None}
        if self.fallback:
            d["fallback"] = self.fallback
        return d

    @classmethod
    def from_record(cls, d: dict) -> LabeledTriple:
        src = d.get("source")
        return cls(
            Triple(d["head"], d["relation"], d["tail"]),
            bool(d["label"]),
            d.get("provenance", "original"),
            Triple(src["head"], src["relation"], src["tail"]) if src else None,
            d.get("fallback"),
        )


def write_testset(path: str | os.PathLike, items: Iterable[LabeledTriple], config_checksum: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            rec = item.to_record()
            if config_checksum:
                rec["config_checksum"] = config_checksum
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_testset(path: str | os.PathLike) -> tuple[list[LabeledTriple], set[str]]:
    """Items plus the set of config checksums found in the file."""
    items, checksums = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                items.append(LabeledTriple.from_record(d))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad test-set record: {exc}") from exc
            if d.get("config_checksum"):
                checksums.add(d["config_checksum"])
    return items, checksums


# --------------------------------------------------------------------------- type index


@dataclass(frozen=True)
class TypeIndex:
    pools: dict[tuple[str, ...], list[str]]
    signature: dict[str, tuple[str, ...]]
    by_type: dict[str, list[str]] = field(default_factory=dict)

    def pool_of(self, entity: str) -> list[str]:
        return self.pools.get(self.signature.get(entity, UNTYPED), [])


def build_type_index(g: KnowledgeGraph, typing_relations: Iterable[str] | None = None) -> TypeIndex:
    """Partition entities by their full type signature.

    The signature is the sorted set of tails reached over typing relations;
    entities without types share the :data:`UNTYPED` pool.
    """
    typing = g.typing_relations if typing_relations is None else frozenset(typing_relations)
    sig: dict[str, tuple[str, ...]] = {}
    for eid in g.entities:
        sig[eid] = tuple(sorted({t for r, t in g.out_index.get(eid, ()) if r in typing}))
    pools: dict[tuple[str, ...], list[str]] = defaultdict(list)
    by_type: dict[str, list[str]] = defaultdict(list)
    for eid in sorted(sig):
        pools[sig[eid]].append(eid)
        for ty in sig[eid]:
            by_type[ty].append(eid)
    return TypeIndex(dict(pools), sig, dict(by_type))


def _shared_type_pool(idx: TypeIndex, entity: str) -> list[str]:
    types = idx.signature.get(entity, UNTYPED)
    if not types:
        return []
    return sorted({e for ty in types for e in idx.by_type.get(ty, ())})


def _replace(p: Triple, side: str, e: str) -> Triple:
    return Triple(e, p.relation, p.tail) if side == "head" else Triple(p.head, p.relation, e)


def _draw(rng: random.Random, pool: Sequence[str], p: Triple, side: str, original: str,
          known: frozenset[Triple] | set[Triple] | None) -> Triple | None:
    """Uniform valid replacement: bounded rejection first, exhaustive filter after."""
    def ok(e: str) -> bool:
        return e != original and (known is None or _replace(p, side, e) not in known)

    if not pool:
        return None
    for _ in range(REJECTION_ATTEMPTS):
        e = pool[rng.randrange(len(pool))]
        if ok(e):
            return _replace(p, side, e)
    valid = [e for e in pool if ok(e)]
    if not valid:
        return None
    return _replace(p, side, valid[rng.randrange(len(valid))])


def corrupt(
    p: Triple, g: KnowledgeGraph, idx: TypeIndex, rng: random.Random,
    exclude_known_facts: bool = True, known: set[Triple] | frozenset[Triple] | None = None,
) -> LabeledTriple | None:
    """One type-constrained negative for ``p``, or None when every pool is exhausted."""
    side = rng.choice(("head", "tail"))
    original = p.head if side == "head" else p.tail
    facts = (known if known is not None else g.triples) if exclude_known_facts else None
    prov: Provenance = "corrupted-head" if side == "head" else "corrupted-tail"
    neg = _draw(rng, idx.pool_of(original), p, side, original, facts)
    if neg is not None:
        return LabeledTriple(neg, False, prov, p)
    neg = _draw(rng, _shared_type_pool(idx, original), p, side, original, facts)
    if neg is not None:
        return LabeledTriple(neg, False, prov, p, SHARED_TYPE_FALLBACK)
    log.warning("no valid %s replacement for %s; skipped", side, p)
    return None


def sample_negatives(
    positives: Sequence[Triple], g: KnowledgeGraph, idx: TypeIndex, seed: int,
    exclude_known_facts: bool = True,
) -> list[LabeledTriple]:
    """One corruption per positive (skipped positives produce nothing)."""
    if not positives:
        return []
    rng = random.Random(seed)
    known = set(g.triples) | set(positives) if exclude_known_facts else None
    out = []
    for p in positives:
        neg = corrupt(p, g, idx, rng, exclude_known_facts, known)
        if neg is not None:
            out.append(neg)
    return out


class InsufficientPositives(ValueError):
    pass


def build_testset(
    test_positives: Sequence[Triple], g: KnowledgeGraph, idx: TypeIndex, n: int = 1000, seed: int = 0,
    exclude_known_facts: bool = True,
) -> list[LabeledTriple]:
    """Balanced set: ``n - n//2`` positives kept, ``n//2`` positives replaced by their corruptions.

    Positives that cannot be corrupted are replaced by further unused draws.

    Raises:
        InsufficientPositives: fewer than ``n`` distinct positives, or too many uncorruptible ones.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    unique = sorted(set(test_positives))
    if len(unique) < n:
        raise InsufficientPositives(f"need {n} positives, have {len(unique)}")
    rng = random.Random(seed)
    order = rng.sample(unique, len(unique))
    n_neg = n // 2
    kept = order[n_neg:n]
    reserve = iter(order[:n_neg] + order[n:])
    known = set(g.triples) | set(unique) if exclude_known_facts else None
    negatives: list[LabeledTriple] = []
    while len(negatives) < n_neg:
        p = next(reserve, None)
        if p is None:
            raise InsufficientPositives(f"only {len(negatives)} of {n_neg} positives could be corrupted")
        neg = corrupt(p, g, idx, rng, exclude_known_facts, known)
        if neg is not None:
            negatives.append(neg)
    items = [LabeledTriple(p, True) for p in kept] + negatives
    rng.shuffle(items)
    return items


# --------------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def confusion(self) -> tuple[int, int, int, int]:
        return self.tp, self.fp, self.tn, self.fn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    def render(self, label: str = "run") -> str:
        head = f"{'Method':<20} {'Accuracy':>9} {'F1':>7} {'Precision':>10} {'Recall':>7}"
        row = (f"{label:<20} {100 * self.accuracy:>9.1f} {100 * self.f1:>7.1f} "
               f"{100 * self.precision:>10.1f} {100 * self.recall:>7.1f}")
        return f"{head}\n{row}"


def metrics_from_confusion(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(accuracy, precision, recall, f1, tp, fp, tn, fn)


def compute_metrics(predictions: Sequence[bool | None], truths: Sequence[bool]) -> Metrics:
    """Confusion-matrix metrics; ``None`` (invalid verdict) always counts as wrong."""
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} truths")
    tp = fp = tn = fn = 0
    for p, t in zip(predictions, truths):
        if p is None:
            p = not t
        if t:
            if p:
                tp += 1
            else:
                fn += 1
        elif p:
            fp += 1
        else:
            tn += 1
    return metrics_from_confusion(tp, fp, tn, fn)


# --------------------------------------------------------------------------- threshold search


@dataclass(frozen=True)
class ThresholdResult:
    delta: float
    accuracy: float


def predict_at(scores: Sequence[float], delta: float, direction: Direction) -> list[bool]:
    if direction == "higher-is-true":
        return [s > delta for s in scores]
    return [s < delta for s in scores]


def candidate_thresholds(scores: Sequence[float]) -> list[float]:
    """-inf, midpoints between consecutive distinct scores, +inf (ascending)."""
    xs = sorted(set(scores))
    return [-math.inf, *((a + b) / 2 for a, b in zip(xs, xs[1:])), math.inf]


def threshold_search(scores: Sequence[float], truths: Sequence[bool], direction: Direction = "higher-is-true") -> ThresholdResult:
    """Smallest threshold attaining maximal accuracy, by one sweep over sorted scores."""
    if not scores:
        raise ValueError("threshold search needs at least one score")
    if len(scores) != len(truths):
        raise ValueError("scores and truths differ in length")
    if direction not in ("higher-is-true", "lower-is-true"):
        raise ValueError(f"unknown direction {direction!r}")
    if any(math.isnan(s) for s in scores):
        raise ValueError("scores must not be NaN")
    pos: Counter[float] = Counter()
    neg: Counter[float] = Counter()
    for s, t in zip(scores, truths):
        (pos if t else neg)[s] += 1
    n = len(scores)
    cands = candidate_thresholds(scores)
    xs = sorted(set(scores))
    higher = direction == "higher-is-true"
    correct = sum(pos.values()) if higher else sum(neg.values())
    best, best_i = correct, 0
    for i, v in enumerate(xs, start=1):
        correct += (neg[v] - pos[v]) if higher else (pos[v] - neg[v])
        if correct > best:
            best, best_i = correct, i
    return ThresholdResult(cands[best_i], best / n)


# --------------------------------------------------------------------------- tool statistics


@dataclass(frozen=True)
class StatsReport:
    sessions: int
    correct_sessions: int
    tool_counts: dict[str, int]
    tool_frequency: dict[str, float]
    avg_turns: float
    avg_input_tokens: float
    avg_output_tokens: float
    avg_cost: float
    currency: str = "USD"
    note: str = ""

    def records(self) -> list[dict]:
        rows = [{"kind": "tool", "tool": t, "count": c, "frequency": self.tool_frequency[t]}
                for t, c in self.tool_counts.items()]
        rows.append({
            "kind": "summary", "sessions": self.sessions, "correct_sessions": self.correct_sessions,
            "avg_turns": self.avg_turns, "avg_input_tokens": self.avg_input_tokens,
            "avg_output_tokens": self.avg_output_tokens, "avg_cost": self.avg_cost,
            "currency": self.currency, "note": self.note,
        })
        return rows

    def render(self) -> str:
        lines = ["Tool usage over correctly predicted samples"]
        if not self.tool_counts:
            lines.append(f"  ({self.note or 'no tool calls'})")
        for tool, count in self.tool_counts.items():
            lines.append(f"  {tool:<16} {count:>7} {100 * self.tool_frequency[tool]:>6.1f}%")
        lines.append("")
        lines.append(f"{'Avg. Interaction Turns':>22} {'Avg. Input token':>17} {'Avg. Output token':>18} {'Avg. Cost':>10}")
        lines.append(f"{self.avg_turns:>22.2f} {self.avg_input_tokens:>17,.2f} "
                     f"{self.avg_output_tokens:>18,.2f} {self.avg_cost:>10.4f}")
        return "\n".join(lines)


def aggregate_stats(sessions: Sequence, pricing: Pricing | None = None) -> StatsReport:
    """Tool frequencies over correct sessions; turn, token and cost averages over all sessions.

    ``sessions`` are :class:`kgverify.agent.SessionRecord` objects (duck-typed).
    """
    pricing = pricing or Pricing()
    ordered = sorted(sessions, key=lambda s: s.session_id)
    correct = [s for s in ordered if s.correct]
    counts: Counter[str] = Counter()
    for s in correct:
        counts.update(s.tool_counts)
    total = sum(counts.values())
    tool_counts = dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    freq = {t: c / total for t, c in tool_counts.items()}
    note = ""
    if not correct:
        note = "no correctly predicted sessions"
    elif not total:
        note = "correct sessions made no tool calls"
    usages = [
        SessionUsage(s.usage.get("turns", 0), s.usage.get("input_tokens", 0), s.usage.get("output_tokens", 0))
        for s in ordered
    ]
    row = cost_row("run", usages, pricing)
    if row is None:
        return StatsReport(0, 0, {}, {}, 0.0, 0.0, 0.0, 0.0, pricing.currency, "no sessions")
    return StatsReport(len(ordered), len(correct), tool_counts, freq, row.avg_turns,
                       row.avg_input_tokens, row.avg_output_tokens, row.avg_cost, pricing.currency, note)


__all__ = [
    "LabeledTriple",
    "Metrics",
    "StatsReport",
    "ThresholdResult",
    "TypeIndex",
    "aggregate_stats",
    "build_testset",
    "build_type_index",
    "compute_metrics",
    "read_testset",
    "sample_negatives",
    "threshold_search",
    "write_testset",
]
