"""Static restriction database keyed by product patterns."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from mmorf.chemworld import Reaction, canonicalize_molecule, match_pattern, validate_pattern, validate_restriction_pattern
from mmorf.errors import MalformedEntry, MmorfError, ParseError
from mmorf.restrictions import NO_DEPTH_LIMIT, RestrictionSet

_KEYS = {"type", "molecules", "specific_reactions", "reaction_templates", "depth_limit", "rationale", "apply_when"}


def _strings(entry: dict, key: str, index: int) -> list[str]:
    value = entry.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise MalformedEntry(index, f"'{key}' must be a list of strings")
    return value


def check_entry(entry: Any, index: int) -> dict[str, Any]:
    if not isinstance(entry, dict):
        raise MalformedEntry(index, "entry must be an object")
    extra = set(entry) - _KEYS
    if extra:
        raise MalformedEntry(index, f"unknown keys {sorted(extra)}")
    if entry.get("type", "restriction") != "restriction":
        raise MalformedEntry(index, "type must be 'restriction'")
    depth = entry.get("depth_limit", NO_DEPTH_LIMIT)
    if isinstance(depth, bool) or not isinstance(depth, int) or depth < NO_DEPTH_LIMIT:
        raise MalformedEntry(index, "depth_limit must be an integer >= -1")
    apply_when = _strings(entry, "apply_when", index)
    if not apply_when:
        raise MalformedEntry(index, "apply_when needs at least one pattern")
    try:
        return {
            "molecules": [canonicalize_molecule(m) for m in _strings(entry, "molecules", index)],
            "specific_reactions": [Reaction.parse(r).smiles for r in _strings(entry, "specific_reactions", index)],
            "reaction_templates": [validate_restriction_pattern(p) for p in _strings(entry, "reaction_templates", index)],
            "depth_limit": depth,
            "apply_when": [validate_pattern(p) for p in apply_when],
        }
    except MmorfError as exc:
        raise MalformedEntry(index, str(exc)) from exc


def staticreg_restrictions(db: Iterable[Any], product: str) -> RestrictionSet:
    """Union of every entry whose ``apply_when`` matches the product.

    The depth limit is the most permissive among matches: none if any match
    has none, else the largest.
    """
    out = RestrictionSet()
    depths: list[int] = []
    for i, raw in enumerate(db):
        entry = check_entry(raw, i)
        if not any(match_pattern(p, product) for p in entry["apply_when"]):
            continue
        out.molecules.update(entry["molecules"])
        out.specific_reactions.update(entry["specific_reactions"])
        out.reaction_patterns.update(entry["reaction_templates"])
        depths.append(entry["depth_limit"])
    if depths and NO_DEPTH_LIMIT not in depths:
        out.depth_limit = max(depths)
    return out


def load_restriction_db(path: str | Path) -> list[dict[str, Any]]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, list):
        raise ParseError(f"{path}: restriction database must be a JSON list")
    for i, entry in enumerate(data):
        check_entry(entry, i)
    return data
