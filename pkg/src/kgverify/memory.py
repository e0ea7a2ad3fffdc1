"""Expert trajectory memory: loading, verbalization, similarity retrieval and rendering."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from kgverify.encoders import Encoder
from kgverify.graph import KnowledgeGraph, Triple
from kgverify.retrieval import cosine_or_zero
from kgverify.tools import FINISH, ToolCall, canonical_tool, format_call

CATEGORIES = ("Classification", "Human", "Geography", "Time", "Culture", "Organizational")
Label = Literal["Correct", "Incorrect"]


class MemoryFormatError(ValueError):
    pass


def verbalize(t: Triple, g: KnowledgeGraph | None = None) -> str:
    """Canonical ``head | relation | tail`` text, using labels when the graph knows them."""
    if g is None:
        return f"{t.head} | {t.relation} | {t.tail}"
    return f"{g.label(t.head)} | {g.label(t.relation)} | {g.label(t.tail)}"


@dataclass(frozen=True)
class TrajectoryStep:
    thought: str
    action: ToolCall
    observation: str | None = None

    @property
    def is_finish(self) -> bool:
        return self.action.tool == FINISH


@dataclass(frozen=True)
class Trajectory:
    task: Triple
    category: str
    steps: tuple[TrajectoryStep, ...]
    final_label: Label
    final_explanation: str
    labels: tuple[str, str, str] | None = None

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise MemoryFormatError(f"unknown category {self.category!r}")
        if self.final_label not in ("Correct", "Incorrect"):
            raise MemoryFormatError(f"final label must be Correct or Incorrect, got {self.final_label!r}")
        for i, step in enumerate(self.steps):
            if step.is_finish and i != len(self.steps) - 1:
                raise MemoryFormatError("Finish may only be the last step")
            if not step.is_finish and step.observation is None:
                raise MemoryFormatError(f"step {i + 1} lacks an observation")

    @property
    def text(self) -> str:
        """Verbalized task used for similarity search."""
        if self.labels:
            return " | ".join(self.labels)
        return verbalize(self.task)

    def to_record(self) -> dict:
        task = self.task.as_dict()
        if self.labels:
            task["labels"] = dict(zip(("head", "relation", "tail"), self.labels))
        steps = []
        for s in self.steps:
            d: dict = {"thought": s.thought, "action": s.action.as_dict()}
            if s.observation is not None:
                d["observation"] = s.observation
            steps.append(d)
        return {
            "task": task,
            "category": self.category,
            "steps": steps,
            "final": {"label": self.final_label, "explanation": self.final_explanation},
        }


def _category(raw: object) -> str:
    if not isinstance(raw, str):
        raise MemoryFormatError("category must be a string")
    name = raw.strip()
    if name.lower().endswith(" core"):
        name = name[:-5].strip()
    for c in CATEGORIES:
        if c.lower() == name.lower():
            return c
    raise MemoryFormatError(f"unknown category {raw!r}")


def trajectory_from_record(rec: dict) -> Trajectory:
    try:
        task_d = rec["task"]
        task = Triple(str(task_d["head"]), str(task_d["relation"]), str(task_d["tail"]))
        labels_d = task_d.get("labels")
        labels = None
        if labels_d:
            labels = (str(labels_d["head"]), str(labels_d["relation"]), str(labels_d["tail"]))
        steps = []
        for s in rec["steps"]:
            act = s["action"]
            call = ToolCall.from_dict({**act, "tool": canonical_tool(str(act["tool"]))})
            steps.append(TrajectoryStep(str(s.get("thought", "")), call, s.get("observation")))
        final = rec["final"]
        return Trajectory(
            task, _category(rec.get("category")), tuple(steps),
            final["label"], str(final.get("explanation", "")), labels,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MemoryFormatError):
            raise
        raise MemoryFormatError(f"malformed trajectory: {exc}") from exc


@dataclass
class MemoryBank:
    entries: list[Trajectory]
    encoder: Encoder
    task_vectors: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, trajectories: Iterable[Trajectory], encoder: Encoder) -> MemoryBank:
        entries = list(trajectories)
        if entries:
            vecs = encoder.encode([t.text for t in entries])
        else:
            vecs = np.zeros((0, encoder.dimension))
        return cls(entries, encoder, vecs)

    def __len__(self) -> int:
        return len(self.entries)


def load_memory(path: str | os.PathLike, enc: Encoder) -> MemoryBank:
    """Read line-delimited trajectory records.

    Raises:
        MemoryFormatError: a record violates the schema; the message names its index.
    """
    trajs = []
    with open(path, encoding="utf-8") as fh:
        idx = 0
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                trajs.append(trajectory_from_record(rec))
            except (json.JSONDecodeError, MemoryFormatError) as exc:
                raise MemoryFormatError(f"record {idx}: {exc}") from exc
            idx += 1
    return MemoryBank.build(trajs, enc)


def dump_memory(bank: MemoryBank | Sequence[Trajectory], path: str | os.PathLike) -> None:
    entries = bank.entries if isinstance(bank, MemoryBank) else list(bank)
    with open(path, "w", encoding="utf-8") as fh:
        for t in entries:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def retrieve(
    bank: MemoryBank, query: Triple, k: int, enc: Encoder, g: KnowledgeGraph | None = None
) -> list[Trajectory]:
    """Top-``k`` trajectories by cosine between the verbalized query and stored tasks.

    Ties keep bank order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if enc is not bank.encoder and enc.dimension != bank.encoder.dimension:
        raise ValueError("query encoder does not match the bank encoder")
    if not bank.entries:
        return []
    q = enc.encode([verbalize(query, g)])[0]
    sims = [cosine_or_zero(q, v) for v in bank.task_vectors]
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
    return [bank.entries[i] for i in order[:k]]


def render_trajectory(t: Trajectory) -> str:
    head, rel, tail = t.labels or (t.task.head, t.task.relation, t.task.tail)
    lines = [f'Target Triple: "{head}, {rel}, {tail}"']
    n = 0
    for step in t.steps:
        if step.is_finish:
            break
        n += 1
        lines.append(f"Thought {n}: {step.thought}")
        lines.append(f"Action {n}: {format_call(step.action)}")
        lines.append(f"Observation {n}: {step.observation}")
    closing = next((s.thought for s in t.steps if s.is_finish and s.thought), None)
    if closing:
        lines.append(f"Thought {n + 1}: {closing}")
    lines.append(f"Final Answer: [{t.final_label}] Because {t.final_explanation}")
    return "\n".join(lines)


def render_demos(trajectories: Sequence[Trajectory]) -> str:
    """The demonstration block pinned into planning and reasoning prompts."""
    if not trajectories:
        return "(no reference case available)"
    blocks = [f"--- Case {i} ---\n{render_trajectory(t)}" for i, t in enumerate(trajectories, start=1)]
    return "\n\n".join(blocks)
