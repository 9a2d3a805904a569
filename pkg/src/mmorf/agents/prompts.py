"""Prompt rendering from the bundled templates."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

import jinja2

from mmorf.errors import MissingPlaceholder, UnknownTemplate

ROLES = ("coordinator", "navigator", "regulator", "verifier")
_UNDEFINED_RE = re.compile(r"'([A-Za-z_][A-Za-z_0-9]*)' is undefined")


def _read(name: str) -> str:
    return (resources.files("mmorf.agents") / "templates" / name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _env() -> jinja2.Environment:
    return jinja2.Environment(
        loader=jinja2.FunctionLoader(lambda name: _read(name)),
        undefined=jinja2.StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=False,
        autoescape=False,
    )


@lru_cache(maxsize=None)
def system_prompt(role: str) -> str:
    if role not in ROLES:
        raise UnknownTemplate(role)
    return _read(f"{role}_system.txt").rstrip("\n")


def render_prompt(template_id: str, context: Mapping[str, Any]) -> str:
    if template_id not in ROLES:
        raise UnknownTemplate(template_id)
    template = _env().get_template(f"{template_id}.j2")
    try:
        return template.render(**context).rstrip("\n")
    except jinja2.UndefinedError as exc:
        m = _UNDEFINED_RE.search(str(exc))
        raise MissingPlaceholder(m.group(1) if m else str(exc)) from exc
