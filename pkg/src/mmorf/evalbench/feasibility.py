"""Single-step feasibility: the exact-world analogue of a top-5 forward-model check."""

from __future__ import annotations

from typing import Protocol

from mmorf.chemworld import Reaction, World, expand_retro

FEASIBILITY_TOP_K = 5


def feasibility_check(reaction: Reaction, world: World, top_k: int = FEASIBILITY_TOP_K) -> bool:
    return any(r.smiles == reaction.smiles for r in expand_retro(world, reaction.product, top_k))


class ReactionJudge(Protocol):
    """Interface for an LLM-based feasibility judge. No implementation ships."""

    def __call__(self, reaction: Reaction, world: World) -> bool: ...


def llm_feasibility_check(reaction: Reaction, world: World, judge: ReactionJudge | None = None) -> bool:
    if judge is None:
        raise NotImplementedError("LLM feasibility judging needs an external judge callable")
    return judge(reaction, world)
