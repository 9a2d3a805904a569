"""Agent action grammar: ``Action: `Tool(args)`<PAUSE>``.

Tools are described by a signature table instead of one class per tool.
Signature codes: ``s`` one string, ``i`` one integer, ``s*`` one or more strings.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Any, Iterable

from mmorf.errors import DisallowedTool, MalformedArguments, NoActionFound, UnknownTool

SIGNATURES: dict[str, tuple[str, ...]] = {
    # navigator
    "SetValueFunction": ("s",),
    "Finalize": (),
    # regulator
    "RestrictMolecules": ("s*",),
    "RestrictSpecificReactions": ("s*",),
    "RestrictReactionTemplates": ("s*",),
    "DepthLimit": ("i",),
    "UnrestrictMolecules": ("s*",),
    "UnrestrictSpecificReaction": ("s",),
    "UnrestrictReactionTemplate": ("s",),
    # verifier
    "AcceptProposed": ("s",),
    "Reject": ("s",),
    "AcceptPrevious": ("i", "s"),
    # coordinator
    "Pruning": ("s",),
    "ValueFn": ("s",),
    "ExpandDefault": ("i",),
    "Expand": ("s",),
}

NAVIGATOR_ACTIONS = frozenset({"SetValueFunction", "Finalize"})
REGULATOR_ACTIONS = frozenset(
    {
        "RestrictMolecules",
        "RestrictSpecificReactions",
        "RestrictReactionTemplates",
        "DepthLimit",
        "UnrestrictMolecules",
        "UnrestrictSpecificReaction",
        "UnrestrictReactionTemplate",
        "Finalize",
    }
)
VERIFIER_ACTIONS = frozenset({"AcceptProposed", "Reject", "AcceptPrevious"})
COORDINATOR_ACTIONS = frozenset({"Pruning", "ValueFn", "ExpandDefault", "Expand"})
ROLE_ACTIONS = {
    "navigator": NAVIGATOR_ACTIONS,
    "regulator": REGULATOR_ACTIONS,
    "verifier": VERIFIER_ACTIONS,
    "coordinator": COORDINATOR_ACTIONS,
}


@dataclass(frozen=True)
class Action:
    tool: str
    args: tuple[Any, ...] = ()

    def __post_init__(self):
        _check(self.tool, self.args)

    def render(self) -> str:
        return render_action(self)

    def __str__(self) -> str:
        return self.render()


def render_action(action: Action) -> str:
    return f"{action.tool}({', '.join(repr(a) for a in action.args)})"


def _check(tool: str, args: tuple[Any, ...]) -> None:
    sig = SIGNATURES.get(tool)
    if sig is None:
        raise UnknownTool(f"unknown tool {tool!r}")
    if sig == ("s*",):
        if not args:
            raise MalformedArguments(f"{tool} needs at least one argument")
        kinds = ["s"] * len(args)
    else:
        if len(args) != len(sig):
            raise MalformedArguments(f"{tool} takes {len(sig)} argument(s), got {len(args)}")
        kinds = list(sig)
    for kind, arg in zip(kinds, args):
        if kind == "s" and not (isinstance(arg, str) and arg.strip()):
            raise MalformedArguments(f"{tool}: expected a non-empty string, got {arg!r}")
        if kind == "i" and (isinstance(arg, bool) or not isinstance(arg, int)):
            raise MalformedArguments(f"{tool}: expected an integer, got {arg!r}")
    if tool == "ExpandDefault" and args[0] < 1:
        raise MalformedArguments("ExpandDefault(N) needs N >= 1")
    if tool == "DepthLimit" and args[0] < -1:
        raise MalformedArguments("DepthLimit(N) needs N >= -1")
    if tool == "AcceptPrevious" and args[0] < 1:
        raise MalformedArguments("AcceptPrevious ids start at 1")


def _parse_call(src: str) -> Action:
    try:
        node = ast.parse(src.strip(), mode="eval").body
    except SyntaxError as exc:
        raise MalformedArguments(f"cannot parse {src!r}: {exc.msg}") from exc
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise MalformedArguments(f"{src!r} is not a tool call")
    tool = node.func.id
    if tool not in SIGNATURES:
        raise UnknownTool(f"unknown tool {tool!r}")
    if node.keywords:
        raise MalformedArguments(f"{tool}: keyword arguments are not supported")
    args = []
    for a in node.args:
        try:
            value = ast.literal_eval(a)
        except ValueError as exc:
            raise MalformedArguments(f"{tool}: arguments must be literals") from exc
        if tool == "Expand" and isinstance(value, int) and not isinstance(value, bool):
            value = str(value)
        args.append(value)
    return Action(tool, tuple(args))


def parse_action(text: str, allowed: Iterable[str] | None = None) -> Action:
    """Parse the backticked call after the last ``Action:`` marker."""
    idx = text.rfind("Action:")
    if idx < 0:
        raise NoActionFound("no 'Action:' line in reply")
    rest = text[idx + len("Action:"):]
    start = rest.find("`")
    if start < 0:
        raise NoActionFound("action is not wrapped in backticks")
    # the call itself may contain backticks inside string arguments
    ends = [i for i, ch in enumerate(rest) if ch == "`" and i > start]
    if not ends:
        raise NoActionFound("unterminated backtick in action")
    first_error: Exception | None = None
    action = None
    for end in ends:
        try:
            action = _parse_call(rest[start + 1:end])
            break
        except (MalformedArguments, UnknownTool) as exc:
            first_error = first_error or exc
    if action is None:
        assert first_error is not None
        raise first_error
    if allowed is not None and action.tool not in set(allowed):
        raise DisallowedTool(f"{action.tool} is not allowed here; use one of {sorted(allowed)}")
    return action


def format_reply(action: Action, thought: str = "") -> str:
    return f"Thought: {thought}\nAction: `{render_action(action)}`<PAUSE>"
