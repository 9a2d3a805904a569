"""Restriction sets enforced during search, and the deltas agents propose against them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from mmorf.chemworld import (
    Reaction,
    canonicalize_molecule,
    reaction_matches,
    validate_restriction_pattern,
)
from mmorf.routes import chain_depth

NO_DEPTH_LIMIT = -1


def canonical_reaction_text(text: str) -> str:
    return Reaction.parse(text).smiles


@dataclass
class RestrictionSet:
    molecules: set[str] = field(default_factory=set)
    specific_reactions: set[str] = field(default_factory=set)
    reaction_patterns: set[str] = field(default_factory=set)
    depth_limit: int = NO_DEPTH_LIMIT

    def __post_init__(self):
        if self.depth_limit < NO_DEPTH_LIMIT:
            raise ValueError(f"depth_limit must be >= -1, got {self.depth_limit}")

    def copy(self) -> "RestrictionSet":
        return RestrictionSet(
            set(self.molecules),
            set(self.specific_reactions),
            set(self.reaction_patterns),
            self.depth_limit,
        )

    def is_empty(self) -> bool:
        return not (self.molecules or self.specific_reactions or self.reaction_patterns) and (
            self.depth_limit == NO_DEPTH_LIMIT
        )

    def blocks_reaction(self, rxn: Reaction) -> bool:
        if any(m in self.molecules for m in rxn.molecules):
            return True
        if rxn.smiles in self.specific_reactions:
            return True
        return any(reaction_matches(p, rxn) for p in self.reaction_patterns)

    def blocks_route(self, reactions: Iterable[Reaction], root: str) -> bool:
        rxns = tuple(reactions)
        if any(self.blocks_reaction(r) for r in rxns):
            return True
        return self.depth_limit >= 0 and chain_depth(rxns, root) > self.depth_limit

    def apply(self, delta: "RestrictionDelta") -> list[str]:
        """Mutate in place; returns warnings for no-op removals."""
        warnings = []
        self.molecules |= delta.add_molecules
        self.specific_reactions |= delta.add_reactions
        self.reaction_patterns |= delta.add_patterns
        for kind, have, gone in (
            ("molecule", self.molecules, delta.remove_molecules),
            ("reaction", self.specific_reactions, delta.remove_reactions),
            ("pattern", self.reaction_patterns, delta.remove_patterns),
        ):
            for item in sorted(gone):
                if item in have:
                    have.discard(item)
                else:
                    warnings.append(f"unrestrict {kind} {item!r}: not restricted")
        if delta.depth_limit is not None:
            self.depth_limit = delta.depth_limit
        return warnings

    def to_json(self) -> dict[str, Any]:
        return {
            "molecules": sorted(self.molecules),
            "specific_reactions": sorted(self.specific_reactions),
            "reaction_templates": sorted(self.reaction_patterns),
            "depth_limit": self.depth_limit,
        }

    def render(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass
class RestrictionDelta:
    """Net change against a starting set. ``depth_limit`` None means unchanged."""

    add_molecules: set[str] = field(default_factory=set)
    add_reactions: set[str] = field(default_factory=set)
    add_patterns: set[str] = field(default_factory=set)
    remove_molecules: set[str] = field(default_factory=set)
    remove_reactions: set[str] = field(default_factory=set)
    remove_patterns: set[str] = field(default_factory=set)
    depth_limit: int | None = None

    def is_empty(self) -> bool:
        return not any(
            (
                self.add_molecules,
                self.add_reactions,
                self.add_patterns,
                self.remove_molecules,
                self.remove_reactions,
                self.remove_patterns,
            )
        ) and self.depth_limit is None

    @classmethod
    def between(cls, before: RestrictionSet, after: RestrictionSet) -> "RestrictionDelta":
        return cls(
            add_molecules=after.molecules - before.molecules,
            add_reactions=after.specific_reactions - before.specific_reactions,
            add_patterns=after.reaction_patterns - before.reaction_patterns,
            remove_molecules=before.molecules - after.molecules,
            remove_reactions=before.specific_reactions - after.specific_reactions,
            remove_patterns=before.reaction_patterns - after.reaction_patterns,
            depth_limit=None if after.depth_limit == before.depth_limit else after.depth_limit,
        )

    @classmethod
    def restrict(
        cls,
        molecules: Iterable[str] = (),
        reactions: Iterable[str] = (),
        patterns: Iterable[str] = (),
        depth_limit: int | None = None,
    ) -> "RestrictionDelta":
        return cls(
            add_molecules={canonicalize_molecule(m) for m in molecules},
            add_reactions={canonical_reaction_text(r) for r in reactions},
            add_patterns={validate_restriction_pattern(p) for p in patterns},
            depth_limit=depth_limit,
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "add_molecules": sorted(self.add_molecules),
            "add_reactions": sorted(self.add_reactions),
            "add_patterns": sorted(self.add_patterns),
            "remove_molecules": sorted(self.remove_molecules),
            "remove_reactions": sorted(self.remove_reactions),
            "remove_patterns": sorted(self.remove_patterns),
            "depth_limit": self.depth_limit,
        }
