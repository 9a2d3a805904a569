"""Agent sessions: Navigator and Regulator turn loops, Verifier and Coordinator calls.

Every session is total. A reply that cannot be parsed is retried once with
the error echoed back; after that the role falls back to a safe default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from mmorf.agents.actions import (
    COORDINATOR_ACTIONS,
    NAVIGATOR_ACTIONS,
    REGULATOR_ACTIONS,
    VERIFIER_ACTIONS,
    Action,
    render_action,
    parse_action,
)
from mmorf.agents.llm import LlmBackend
from mmorf.agents.prompts import render_prompt, system_prompt
from mmorf.chemworld import Reaction, World, canonicalize_molecule, validate_restriction_pattern
from mmorf.errors import ActionParseError, LlmError, MalformedArguments, MmorfError, VfError
from mmorf.evalbench.reports import RouteReport, partial_report
from mmorf.restrictions import RestrictionDelta, RestrictionSet
from mmorf.vfdsl import Node, RouteState, evaluate_vf, parse_vf, render_vf

Emit = Callable[[dict[str, Any]], None]
VERIFIER_FALLBACK_REASON = "verifier-parse-fallback"


@dataclass(frozen=True)
class AgentConfig:
    turn_limit: int = 3
    parse_retries_per_turn: int = 1

    def __post_init__(self):
        if self.turn_limit < 1:
            raise ValueError("turn_limit must be >= 1")
        if self.parse_retries_per_turn < 0:
            raise ValueError("parse_retries_per_turn must be >= 0")


@dataclass(frozen=True)
class CandidateView:
    id: str
    reactions: tuple[Reaction, ...]
    open: tuple[str, ...]


@dataclass
class PlanningView:
    """The slice of search state an agent may look at."""

    product: str
    world: World
    candidates: list[CandidateView]
    vf: Node
    restrictions: RestrictionSet
    instruction: str


@dataclass(frozen=True)
class Verdict:
    decision: str  # accept_proposed | reject | accept_previous
    text: str
    previous_id: int | None = None
    fallback: bool = False


@dataclass
class Transcript:
    entries: list[dict[str, Any]] = field(default_factory=list)

    def add(self, role: str, prompt: str, reply: str | None, error: str | None = None) -> None:
        entry: dict[str, Any] = {"role": role, "prompt": prompt, "reply": reply}
        if error:
            entry["error"] = error
        self.entries.append(entry)


def _noop(_: dict[str, Any]) -> None:
    pass


def _ask(
    role: str,
    prompt: str,
    backend: LlmBackend,
    allowed: frozenset[str],
    config: AgentConfig,
    transcript: Transcript | None,
    check: Callable[[Action], None] | None = None,
) -> tuple[Action | None, str | None]:
    """One agent turn with retries. Returns (action, None) or (None, last error)."""
    text = prompt
    error: str | None = None
    for _ in range(config.parse_retries_per_turn + 1):
        reply: str | None = None
        try:
            reply = backend.complete(role, system_prompt(role), text)
            action = parse_action(reply, allowed)
            if check is not None:
                check(action)
        except (ActionParseError, LlmError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            if transcript is not None:
                transcript.add(role, text, reply, error)
            text = (
                f"{prompt}\n\nYour previous reply could not be used ({error}). "
                "Answer again using the required format."
            )
            continue
        if transcript is not None:
            transcript.add(role, text, reply)
        return action, None
    return None, error


# ---------------------------------------------------------------------------
# candidate presentation
# ---------------------------------------------------------------------------

def safe_value(vf: Node, cand: CandidateView, world: World) -> float:
    try:
        return evaluate_vf(vf, RouteState(cand.reactions, cand.open), world)
    except VfError:
        return -math.inf


def rank_candidates(view: PlanningView, vf: Node) -> list[tuple[CandidateView, float]]:
    """Stable sort by value, best first; ties keep the incoming (creation) order."""
    scored = [(c, safe_value(vf, c, view.world)) for c in view.candidates]
    return sorted(scored, key=lambda t: -t[1])


def candidate_report(world: World, product: str, cand: CandidateView, value: float | None) -> str:
    body = partial_report(world, product, cand.reactions, cand.open).to_json()
    body["id"] = cand.id
    body["open_molecules"] = list(cand.open)
    if value is not None:
        body["value"] = None if math.isinf(value) else round(value, 6)
    return json.dumps(body, sort_keys=True)


# ---------------------------------------------------------------------------
# navigator
# ---------------------------------------------------------------------------

def navigator_session(
    view: PlanningView,
    instructions: str,
    backend: LlmBackend,
    config: AgentConfig = AgentConfig(),
    transcript: Transcript | None = None,
    emit: Emit = _noop,
) -> Node:
    current = view.vf
    previous_output = ""
    acts: list[str] = []
    for turn in range(config.turn_limit):
        remaining = config.turn_limit - turn
        ranked = rank_candidates(view, current)
        prompt = render_prompt(
            "navigator",
            {
                "PRODUCT": view.product,
                "CANDIDATE_ROUTE_REPORTS": [
                    candidate_report(view.world, view.product, c, v) for c, v in ranked
                ],
                "INSTRUCTION_FROM_COORDINATOR": instructions,
                "VALUE_FUNCTION": render_vf(current),
                "REMAINING_TURNS": remaining,
                "PREVIOUS_OUTPUT": previous_output,
                "PREVIOUS_ACTIONS": acts,
            },
        )
        action, err = _ask("navigator", prompt, backend, NAVIGATOR_ACTIONS, config, transcript)
        emit({"event": "agent_turn", "role": "navigator", "turn": turn + 1,
              "action": render_action(action) if action else None, "error": err})
        if action is None:
            previous_output = f"Error: {err}. The value function is unchanged."
            continue
        acts.append(render_action(action))
        if action.tool == "Finalize":
            break
        try:
            vf = parse_vf(action.args[0])
        except VfError as exc:
            previous_output = f"Error: invalid value function ({type(exc).__name__}: {exc}). The value function is unchanged."
            emit({"event": "invalid_vf", "role": "navigator", "turn": turn + 1, "error": str(exc)})
            continue
        current = vf
        previous_output = f"The value function is now `{render_vf(vf)}`; the routes below are re-ranked under it."
    return current


# ---------------------------------------------------------------------------
# regulator
# ---------------------------------------------------------------------------

def _apply_regulator_action(rs: RestrictionSet, action: Action) -> list[str]:
    warnings: list[str] = []
    tool, args = action.tool, action.args

    def each(convert, target: set[str], add: bool, label: str):
        for raw in args:
            try:
                item = convert(raw)
            except MmorfError as exc:
                warnings.append(f"skipped {label} {raw!r}: {exc}")
                continue
            if add:
                target.add(item)
            elif item in target:
                target.discard(item)
            else:
                warnings.append(f"{label} {item!r} was not restricted")

    if tool == "RestrictMolecules":
        each(canonicalize_molecule, rs.molecules, True, "molecule")
    elif tool == "RestrictSpecificReactions":
        each(lambda t: Reaction.parse(t).smiles, rs.specific_reactions, True, "reaction")
    elif tool == "RestrictReactionTemplates":
        each(validate_restriction_pattern, rs.reaction_patterns, True, "template")
    elif tool == "UnrestrictMolecules":
        each(canonicalize_molecule, rs.molecules, False, "molecule")
    elif tool == "UnrestrictSpecificReaction":
        each(lambda t: Reaction.parse(t).smiles, rs.specific_reactions, False, "reaction")
    elif tool == "UnrestrictReactionTemplate":
        each(validate_restriction_pattern, rs.reaction_patterns, False, "template")
    elif tool == "DepthLimit":
        rs.depth_limit = args[0]
    return warnings


def regulator_session(
    view: PlanningView,
    routes: Sequence[CandidateView],
    instructions: str,
    backend: LlmBackend,
    config: AgentConfig = AgentConfig(),
    transcript: Transcript | None = None,
    emit: Emit = _noop,
) -> RestrictionDelta:
    start = view.restrictions.copy()
    preview = start.copy()
    originals = [candidate_report(view.world, view.product, r, None) for r in routes]
    previous_output = ""
    acts: list[str] = []
    for turn in range(config.turn_limit):
        remaining = config.turn_limit - turn
        prompt = render_prompt(
            "regulator",
            {
                "PRODUCT": view.product,
                "ROUTE_REPORTS": originals,
                "RESTRICTIONS": preview.render(),
                "REMAINING_TURNS": remaining,
                "PREVIOUS_OUTPUT": previous_output,
                "INSTRUCTION_FROM_COORDINATOR_OR_VERIFIER": instructions,
                "PREVIOUS_ACTIONS": acts,
            },
        )
        action, err = _ask("regulator", prompt, backend, REGULATOR_ACTIONS, config, transcript)
        emit({"event": "agent_turn", "role": "regulator", "turn": turn + 1,
              "action": render_action(action) if action else None, "error": err})
        if action is None:
            previous_output = f"Error: {err}. The restrictions are unchanged."
            continue
        acts.append(render_action(action))
        if action.tool == "Finalize":
            break
        warnings = _apply_regulator_action(preview, action)
        for w in warnings:
            emit({"event": "warning", "role": "regulator", "message": w})
        lines = [f"Applied {render_action(action)}."]
        lines += [f"Warning: {w}." for w in warnings]
        lines.append(f"Updated restrictions: {preview.render()}")
        lines.append("Routes under the new restrictions:")
        for i, r in enumerate(routes, 1):
            if preview.blocks_route(r.reactions, view.product):
                lines.append(f"{i}. pruned")
            else:
                lines.append(f"{i}. {originals[i - 1]}")
        previous_output = "\n".join(lines)
    return RestrictionDelta.between(start, preview)


# ---------------------------------------------------------------------------
# verifier
# ---------------------------------------------------------------------------

def verify_route(
    report: RouteReport,
    rejected_history: Sequence[RouteReport],
    remaining_iterations: int,
    backend: LlmBackend,
    product: str,
    instruction: str,
    config: AgentConfig = AgentConfig(),
    transcript: Transcript | None = None,
    emit: Emit = _noop,
) -> Verdict:
    prompt = render_prompt(
        "verifier",
        {
            "PRODUCT": product,
            "ROUTE_REPORT": report.render(),
            "TASK_INSTRUCTIONS": instruction,
            "NUM_REJECTED_ROUTES": len(rejected_history),
            "REJECTED_ROUTES": [(i, r.render()) for i, r in enumerate(rejected_history, 1)],
            "REMAINING_RETRO_ITERATIONS": remaining_iterations,
        },
    )

    def check(action: Action) -> None:
        if action.tool == "AcceptPrevious" and action.args[0] > len(rejected_history):
            raise MalformedArguments(
                f"AcceptPrevious({action.args[0]}) but only {len(rejected_history)} rejected routes exist"
            )

    action, err = _ask("verifier", prompt, backend, VERIFIER_ACTIONS, config, transcript, check)
    emit({"event": "agent_turn", "role": "verifier", "turn": 1,
          "action": render_action(action) if action else None, "error": err})
    if action is None:
        return Verdict("accept_proposed", VERIFIER_FALLBACK_REASON, fallback=True)
    if action.tool == "AcceptProposed":
        return Verdict("accept_proposed", action.args[0])
    if action.tool == "Reject":
        return Verdict("reject", action.args[0])
    return Verdict("accept_previous", action.args[1], previous_id=action.args[0])


# ---------------------------------------------------------------------------
# coordinator
# ---------------------------------------------------------------------------

COORDINATOR_FALLBACK = Action("ExpandDefault", (1,))


def coordinator_delegate(
    view: PlanningView,
    ranked: Sequence[tuple[CandidateView, float]],
    previous_actions: Sequence[str],
    backend: LlmBackend,
    config: AgentConfig = AgentConfig(),
    transcript: Transcript | None = None,
    emit: Emit = _noop,
) -> Action:
    prompt = render_prompt(
        "coordinator",
        {
            "PRODUCT": view.product,
            "CANDIDATE_ROUTE_REPORTS": [
                candidate_report(view.world, view.product, c, v) for c, v in ranked
            ],
            "TASK_INSTRUCTION": view.instruction,
            "PREVIOUS_ACTIONS": list(previous_actions),
            "RESTRICTIONS": view.restrictions.render(),
            "VALUE_FUNCTION": render_vf(view.vf),
        },
    )
    action, err = _ask("coordinator", prompt, backend, COORDINATOR_ACTIONS, config, transcript)
    emit({"event": "agent_turn", "role": "coordinator", "turn": 1,
          "action": render_action(action) if action else None, "error": err})
    return action if action is not None else COORDINATOR_FALLBACK
