"""Value-function expressions: parser, canonical printer and evaluator.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := atom (('*' | '/') atom)*
    atom   := ['+' | '-'] NUMBER | COMPONENT '(' [STRING (',' STRING)*] ')' | '(' expr ')'
    NUMBER := digits ['.' digits]        (no exponent)
    STRING := single-quoted text

Eight components are available.  Route-level ones (``Synth``, ``Depth``)
contribute once; reaction-level ones are summed over the route's reactions.
The planner *maximizes* the value, so ``Synth()`` is the negated remaining
synthesis cost of the open molecules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterator, Union

from mmorf.chemworld import (
    Reaction,
    World,
    annotate,
    canonicalize_molecule,
    molecule_similarity,
)
from mmorf.errors import (
    BadArgument,
    ForbiddenOperator,
    MoleculeError,
    UnknownComponent,
    VfDivisionByZero,
    VfSyntaxError,
)

DIV_EPS = 1e-9

ROUTE_COMPONENTS = ("Synth", "Depth")
REACTION_COMPONENTS = ("BBPrice", "GHS", "FastCarc", "MaxSim", "MinSim", "Pyro")
COMPONENTS = ROUTE_COMPONENTS + REACTION_COMPONENTS
_VARARG = {"GHS", "MaxSim", "MinSim"}
_GHS_RE = re.compile(r"H[0-9]{3}")


@dataclass(frozen=True)
class Num:
    value: Decimal


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Call, BinOp]
ValueFunctionAst = Node

DEFAULT_VF = Call("Synth")


@dataclass(frozen=True)
class RouteState:
    """What a value function sees of a partial route."""

    reactions: tuple[Reaction, ...]
    frontier: tuple[str, ...]

    @property
    def depth(self) -> int:
        return len(self.reactions)


# ---------------------------------------------------------------------------
# lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_SPEC = [
    ("WS", r"\s+"),
    ("NUMBER", r"\d+(?:\.\d+)?|\.\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("STRING", r"'[^']*'"),
    ("FORBIDDEN", r"\*\*|\^|<=|>=|==|!=|<|>|=|%|&|\||!|//"),
    ("OP", r"[+\-*/]"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
]
_LEX_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Tok]:
    out: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _LEX_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise VfSyntaxError(f"use single quotes for arguments (position {pos})")
            raise VfSyntaxError(f"unexpected character {ch!r} at position {pos}")
        kind = m.lastgroup
        if kind == "FORBIDDEN":
            raise ForbiddenOperator(f"operator {m.group()!r} is not allowed; use only + - * /")
        if kind == "NUMBER" and m.end() < len(text) and text[m.end()] in "eE":
            raise VfSyntaxError("scientific notation is not supported")
        if kind != "WS":
            out.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    out.append(_Tok("EOF", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self, kind: str | None = None) -> _Tok:
        tok = self.toks[self.i]
        if kind is not None and tok.kind != kind:
            want = {"RPAREN": "')'", "LPAREN": "'('", "EOF": "end of input"}.get(kind, kind)
            raise VfSyntaxError(f"expected {want} at position {tok.pos}, found {tok.text or 'end'!r}")
        self.i += 1
        return tok

    def parse(self) -> Node:
        if self.peek().kind == "EOF":
            raise VfSyntaxError("empty value function")
        node = self.expr()
        self.take("EOF")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "OP" and self.peek().text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.atom()
        while self.peek().kind == "OP" and self.peek().text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.atom())
        return node

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "OP" and tok.text in "+-":
            self.take()
            nxt = self.peek()
            if nxt.kind != "NUMBER":
                raise VfSyntaxError(
                    f"unary {tok.text!r} at position {tok.pos} may only prefix a number"
                )
            self.take()
            value = Decimal(nxt.text)
            return Num(-value if tok.text == "-" else value)
        if tok.kind == "NUMBER":
            self.take()
            return Num(Decimal(tok.text))
        if tok.kind == "LPAREN":
            self.take()
            node = self.expr()
            self.take("RPAREN")
            return node
        if tok.kind == "IDENT":
            return self.call()
        raise VfSyntaxError(f"unexpected {tok.text or 'end of input'!r} at position {tok.pos}")

    def call(self) -> Call:
        name = self.take("IDENT").text
        if name not in COMPONENTS:
            raise UnknownComponent(f"unknown component {name!r}; allowed: {', '.join(COMPONENTS)}")
        self.take("LPAREN")
        args: list[str] = []
        if self.peek().kind != "RPAREN":
            while True:
                tok = self.peek()
                if tok.kind != "STRING":
                    raise VfSyntaxError(f"{name}: expected a quoted argument at position {tok.pos}")
                args.append(self.take().text[1:-1])
                if self.peek().kind == "COMMA":
                    self.take()
                    continue
                break
        self.take("RPAREN")
        return Call(name, _check_args(name, args))


def _check_args(name: str, args: list[str]) -> tuple[str, ...]:
    if name not in _VARARG:
        if args:
            raise BadArgument(f"{name}() takes no arguments")
        return ()
    if not args:
        raise BadArgument(f"{name}() needs at least one argument")
    if name == "GHS":
        for a in args:
            if not _GHS_RE.fullmatch(a.strip()):
                raise BadArgument(f"GHS: {a!r} is not a hazard code like 'H225'")
        return tuple(a.strip() for a in args)
    out = []
    for a in args:
        try:
            out.append(canonicalize_molecule(a))
        except MoleculeError as exc:
            raise BadArgument(f"{name}: {exc}") from exc
    return tuple(out)


def parse_vf(text: str) -> Node:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    return _PREC[node.op] if isinstance(node, BinOp) else 3


def render_vf(node: Node) -> str:
    if isinstance(node, Num):
        text = format(node.value, "f")
        return text
    if isinstance(node, Call):
        return f"{node.name}({', '.join(repr_arg(a) for a in node.args)})"
    p = _PREC[node.op]
    left = render_vf(node.left)
    if _prec(node.left) < p:
        left = f"({left})"
    right = render_vf(node.right)
    if _prec(node.right) <= p:
        right = f"({right})" if isinstance(node.right, BinOp) else right
    return f"{left} {node.op} {right}"


def repr_arg(arg: str) -> str:
    return f"'{arg}'"


def iter_calls(node: Node) -> Iterator[Call]:
    if isinstance(node, Call):
        yield node
    elif isinstance(node, BinOp):
        yield from iter_calls(node.left)
        yield from iter_calls(node.right)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _reaction_term(call: Call, rxn: Reaction, world: World) -> float:
    key = ("vf", call, rxn.smiles)
    hit = world._cache.get(key)
    if hit is not None:
        return hit
    mols = rxn.molecules
    if call.name == "BBPrice":
        val = sum(world.building_blocks[r] for r in rxn.reactants if r in world.building_blocks)
    elif call.name == "GHS":
        wanted = set(call.args)
        val = 1.0 if any(annotate(world, m).ghs_codes & wanted for m in mols) else 0.0
    elif call.name == "FastCarc":
        val = 1.0 if any(annotate(world, m).carc_alert for m in mols) else 0.0
    elif call.name == "Pyro":
        val = 1.0 if any(annotate(world, m).pyrophoric_predicted for m in mols) else 0.0
    else:
        per_mol = [max(molecule_similarity(m, ref) for ref in call.args) for m in mols]
        val = max(per_mol) if call.name == "MaxSim" else min(per_mol)
    world._cache[key] = float(val)
    return float(val)


def evaluate_component(call: Call, state: RouteState, world: World) -> float:
    if call.name == "Synth":
        return -sum(annotate(world, m).synth_cost for m in state.frontier)
    if call.name == "Depth":
        return float(state.depth)
    return sum(_reaction_term(call, r, world) for r in state.reactions)


def evaluate_vf(node: Node, state: RouteState, world: World) -> float:
    if isinstance(node, Num):
        return float(node.value)
    if isinstance(node, Call):
        return evaluate_component(node, state, world)
    left = evaluate_vf(node.left, state, world)
    right = evaluate_vf(node.right, state, world)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if abs(right) < DIV_EPS:
        raise VfDivisionByZero(f"division by {right!r} in {render_vf(node)}")
    return left / right


def component_breakdown(node: Node, state: RouteState, world: World) -> dict[str, float]:
    return {render_vf(c): evaluate_component(c, state, world) for c in iter_calls(node)}
