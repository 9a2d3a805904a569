"""Route containers and the structural helpers shared by planner, oracle and metrics."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable

from mmorf.chemworld import Reaction, World


@dataclass(frozen=True)
class Route:
    """A set of reactions leading from ``product`` to purchasable leaves, root first."""

    product: str
    reactions: tuple[Reaction, ...]

    @property
    def smiles(self) -> list[str]:
        return [r.smiles for r in self.reactions]

    @property
    def key(self) -> frozenset[str]:
        return frozenset(self.smiles)

    def __len__(self) -> int:
        return len(self.reactions)

    def molecules(self) -> list[str]:
        seen: dict[str, None] = {self.product: None}
        for r in self.reactions:
            seen.setdefault(r.product, None)
            for m in r.reactants:
                seen.setdefault(m, None)
        return list(seen)

    def produced(self) -> set[str]:
        return {r.product for r in self.reactions}

    def starting_materials(self) -> list[str]:
        made = self.produced()
        out: dict[str, None] = {}
        for r in self.reactions:
            for m in r.reactants:
                if m not in made:
                    out.setdefault(m, None)
        return list(out)

    def depth(self) -> int:
        return chain_depth(self.reactions, self.product)

    def to_json(self) -> dict[str, Any]:
        return {"product": self.product, "reactions": self.smiles}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Route":
        return cls(data["product"], tuple(Reaction.parse(s) for s in data["reactions"]))


def producer_map(reactions: Iterable[Reaction]) -> dict[str, list[Reaction]]:
    out: dict[str, list[Reaction]] = {}
    for r in reactions:
        out.setdefault(r.product, []).append(r)
    return out


def chain_depth(reactions: Iterable[Reaction], root: str) -> int:
    """Number of reactions on the longest root-to-leaf chain (cycles are not followed)."""
    prod = {r.product: r for r in reactions}
    memo: dict[str, int] = {}

    def visit(m: str, stack: frozenset[str]) -> int:
        if m in memo:
            return memo[m]
        r = prod.get(m)
        if r is None or m in stack:
            return 0
        d = 1 + max((visit(x, stack | {m}) for x in r.reactants), default=0)
        memo[m] = d
        return d

    return visit(root, frozenset())


def reaches(reactions: Iterable[Reaction], start: str, target: str) -> bool:
    """True if ``target`` is ``start`` or lies below it in the product->reactant graph."""
    prod = {r.product: r for r in reactions}
    todo = [start]
    seen = set()
    while todo:
        m = todo.pop()
        if m == target:
            return True
        if m in seen:
            continue
        seen.add(m)
        r = prod.get(m)
        if r is not None:
            todo.extend(r.reactants)
    return False


def order_root_first(product: str, reactions: Iterable[Reaction]) -> tuple[Reaction, ...]:
    """Breadth-first order from the root; reactions unreachable from it are appended."""
    rxns = list(reactions)
    prod = {r.product: r for r in rxns}
    out: list[Reaction] = []
    done: set[str] = set()
    queue = deque([product])
    while queue:
        m = queue.popleft()
        r = prod.get(m)
        if r is None or r.smiles in done:
            continue
        done.add(r.smiles)
        out.append(r)
        queue.extend(r.reactants)
    out.extend(r for r in rxns if r.smiles not in done)
    return tuple(out)


def open_molecules(route_reactions: Iterable[Reaction], product: str, world: World) -> list[str]:
    """Required molecules that are neither purchasable nor produced, in first-use order."""
    rxns = list(route_reactions)
    made = {r.product for r in rxns}
    out: dict[str, None] = {}
    need = [product] + [m for r in rxns for m in r.reactants]
    for m in need:
        if m not in made and not world.is_purchasable(m):
            out.setdefault(m, None)
    return list(out)
