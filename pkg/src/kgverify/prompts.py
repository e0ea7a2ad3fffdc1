"""Versioned prompt templates shipped as package text files.

Placeholders are ``{name}`` slots (names may contain spaces, e.g.
``{trajectory case}``). Filling is a single regex pass, so braces inside the
substituted values are never re-expanded.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping

TEMPLATE_VERSION = "1"

TEMPLATES = (
    "plan.system",
    "plan.user",
    "reason.system",
    "reason.user",
    "judge.user",
    "baseline.system",
    "rag.user",
    "zeroshot.user",
)

_SLOT = re.compile(r"\{([a-z][a-z ]*)\}")


class TemplateError(KeyError):
    pass


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATES:
        raise TemplateError(f"unknown template {name!r}")
    text = resources.files("kgverify").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return text.rstrip("\n")


def placeholders(name: str) -> list[str]:
    """Slot names in order of first appearance."""
    seen: dict[str, None] = {}
    for m in _SLOT.finditer(load_template(name)):
        seen.setdefault(m.group(1))
    return list(seen)


def render(name: str, values: Mapping[str, str]) -> str:
    """Fill every slot of template ``name``.

    Raises:
        TemplateError: a slot has no value, or a value names no slot.
    """
    slots = placeholders(name)
    missing = [s for s in slots if s not in values]
    extra = [k for k in values if k not in slots]
    if missing or extra:
        raise TemplateError(f"template {name!r}: missing {missing}, unexpected {extra}")
    return _SLOT.sub(lambda m: values[m.group(1)], load_template(name))
