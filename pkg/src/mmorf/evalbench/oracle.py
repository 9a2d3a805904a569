"""Exhaustive route enumeration, used to check the planner on small worlds."""

from __future__ import annotations

from itertools import product as cartesian
from typing import Iterable

from mmorf.chemworld import DEFAULT_BRANCHING, Reaction, World, expand_retro
from mmorf.errors import BudgetExceeded
from mmorf.restrictions import RestrictionSet
from mmorf.routes import Route, order_root_first, reaches

NODE_CAP = 1_000_000


def _merge(parts: Iterable[frozenset[Reaction]]) -> frozenset[Reaction] | None:
    """Union of sub-routes, or None if some molecule would get two producers."""
    out: dict[str, Reaction] = {}
    for part in parts:
        for r in part:
            prev = out.get(r.product)
            if prev is not None and prev != r:
                return None
            out[r.product] = r
    rxns = tuple(out.values())
    # sub-routes that share an intermediate can close a loop once merged
    if any(reaches(rxns, x, r.product) for r in rxns for x in r.reactants):
        return None
    return frozenset(rxns)


def brute_force_routes(
    world: World,
    product: str,
    max_depth: int,
    branching: int = DEFAULT_BRANCHING,
    node_cap: int = NODE_CAP,
) -> list[Route]:
    """All routes whose longest reaction chain is at most ``max_depth``.

    Purchasable molecules are always leaves.  A molecule never appears twice
    on one root-to-leaf path.  Routes come back sorted by length, then by
    their sorted reaction strings.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if world.is_purchasable(product):
        return []
    visited = 0
    memo: dict[tuple[str, int, frozenset[str]], list[frozenset[Reaction]]] = {}

    def solve(mol: str, depth: int, path: frozenset[str]) -> list[frozenset[Reaction]]:
        nonlocal visited
        if world.is_purchasable(mol):
            return [frozenset()]
        if depth == 0:
            return []
        key = (mol, depth, path)
        if key in memo:
            return memo[key]
        visited += 1
        if visited > node_cap:
            raise BudgetExceeded(f"route enumeration exceeded {node_cap} nodes")
        inner = path | {mol}
        found: set[frozenset[Reaction]] = set()
        for rxn in expand_retro(world, mol, branching):
            if any(r in inner for r in rxn.reactants):
                continue
            options = [solve(r, depth - 1, inner) for r in rxn.reactants]
            if any(not o for o in options):
                continue
            for combo in cartesian(*options):
                visited += 1
                if visited > node_cap:
                    raise BudgetExceeded(f"route enumeration exceeded {node_cap} nodes")
                merged = _merge(combo + (frozenset([rxn]),))
                if merged is not None and merged not in found:
                    found.add(merged)
        result = list(found)
        memo[key] = result
        return result

    routes = [Route(product, order_root_first(product, rs)) for rs in solve(product, max_depth, frozenset())]
    routes.sort(key=lambda r: (len(r), sorted(r.smiles)))
    return routes


def filter_routes(routes: Iterable[Route], restrictions: RestrictionSet) -> list[Route]:
    return [r for r in routes if not restrictions.blocks_route(r.reactions, r.product)]


def min_route_length(routes: Iterable[Route]) -> int | None:
    lengths = [len(r) for r in routes]
    return min(lengths) if lengths else None
