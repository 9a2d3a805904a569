"""Route validity, objective reports, constraint checks and Pareto analysis.

All five objectives (carc, pyro, ghs, smp, rl) are minimized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from mmorf.chemworld import World, annotate
from mmorf.errors import InvalidRoute, UnknownConstraintType
from mmorf.evalbench.feasibility import feasibility_check
from mmorf.evalbench.tasks import CONSTRAINT_TYPES, Constraint
from mmorf.routes import Route, producer_map, reaches

EMPTY = "Empty"
DUPLICATE_PRODUCER = "DuplicateProducer"
CYCLIC = "Cyclic"
ORPHAN = "Orphan"
UNPURCHASABLE_LEAF = "UnpurchasableLeaf"
INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    reasons: tuple[str, ...] = ()
    details: tuple[str, ...] = ()


def validate_route(route: Route | None, world: World) -> ValidityVerdict:
    if route is None or not route.reactions:
        return ValidityVerdict(False, (EMPTY,), ("route has no reactions",))
    reasons: dict[str, None] = {}
    details: list[str] = []
    prods = producer_map(route.reactions)
    for mol, rs in prods.items():
        if len(rs) > 1:
            reasons[DUPLICATE_PRODUCER] = None
            details.append(f"{mol} is produced by {len(rs)} reactions")
    for r in route.reactions:
        if any(reaches(route.reactions, x, r.product) for x in r.reactants):
            reasons[CYCLIC] = None
            details.append(f"{r.smiles} closes a cycle")
            break
    consumed = {m for r in route.reactions for m in r.reactants}
    if route.product not in prods:
        reasons[ORPHAN] = None
        details.append(f"no reaction produces the target {route.product}")
    for mol in prods:
        if mol != route.product and mol not in consumed:
            reasons[ORPHAN] = None
            details.append(f"{mol} is produced but never used")
    for leaf in route.starting_materials():
        if not world.is_purchasable(leaf):
            reasons[UNPURCHASABLE_LEAF] = None
            details.append(f"{leaf} is not purchasable")
    for r in route.reactions:
        if not feasibility_check(r, world):
            reasons[INFEASIBLE] = None
            details.append(f"{r.smiles} fails the feasibility check")
    return ValidityVerdict(not reasons, tuple(reasons), tuple(details))


@dataclass(frozen=True)
class RouteReport:
    carc: float
    pyro: int
    ghs_count: int
    ghs_codes: frozenset[str]
    smp: float
    rl: int
    reactions: tuple[str, ...] = ()
    profiles: dict[str, dict[str, Any]] = field(default_factory=dict, compare=False, hash=False)

    def objectives(self) -> tuple[float, int, int, float, int]:
        return (self.carc, self.pyro, self.ghs_count, self.smp, self.rl)

    def to_json(self) -> dict[str, Any]:
        return {
            "carc": self.carc,
            "pyro": self.pyro,
            "ghs_count": self.ghs_count,
            "ghs_codes": sorted(self.ghs_codes),
            "smp": self.smp,
            "rl": self.rl,
            "reactions": list(self.reactions),
            "molecules": self.profiles,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "RouteReport":
        return cls(
            d["carc"], d["pyro"], d["ghs_count"], frozenset(d["ghs_codes"]), d["smp"], d["rl"],
            tuple(d.get("reactions", ())), dict(d.get("molecules", {})),
        )

    def render(self) -> str:
        """Agent-visible one-line JSON (predicted flags only, no ground truth)."""
        return json.dumps(self.to_json(), sort_keys=True)


def _metrics(world: World, reactions, molecules: Sequence[str], leaves: Iterable[str]) -> RouteReport:
    profiles = [annotate(world, m) for m in molecules]
    codes = frozenset().union(*(p.ghs_codes for p in profiles)) if profiles else frozenset()
    smp = sum(world.price(m) or 0.0 for m in leaves)
    return RouteReport(
        carc=max((p.carc_score for p in profiles), default=0.0),
        pyro=int(any(p.pyrophoric_predicted for p in profiles)),
        ghs_count=len(codes),
        ghs_codes=codes,
        smp=float(smp),
        rl=len(reactions),
        reactions=tuple(r.smiles for r in reactions),
        profiles={p.molecule: p.as_report() for p in profiles},
    )


def build_report(route: Route, world: World, smp_per_occurrence: bool = False) -> RouteReport:
    """Objective report for a structurally sound route.

    Infeasible reactions do not block a report; every other validity failure does.
    """
    verdict = validate_route(route, world)
    fatal = [r for r in verdict.reasons if r != INFEASIBLE]
    if fatal:
        raise InvalidRoute(f"cannot report an invalid route: {', '.join(fatal)}")
    if smp_per_occurrence:
        made = route.produced()
        leaves = [m for r in route.reactions for m in r.reactants if m not in made]
    else:
        leaves = route.starting_materials()
    return _metrics(world, route.reactions, route.molecules(), leaves)


def partial_report(world: World, product: str, reactions, open_molecules: Sequence[str]) -> RouteReport:
    """Report over an incomplete route: the molecules placed so far, open ones included."""
    mols: dict[str, None] = {product: None}
    for r in reactions:
        for m in r.molecules:
            mols.setdefault(m, None)
    made = {r.product for r in reactions}
    leaves = [m for m in mols if m not in made and world.is_purchasable(m)]
    return _metrics(world, reactions, list(mols), leaves)


@dataclass(frozen=True)
class ConstraintResult:
    satisfied: bool
    violations: dict[str, tuple[str, ...]]


def check_constraints(route: Route, constraints: Iterable[Constraint], world: World) -> ConstraintResult:
    """Hard-constraint check against ground-truth flags."""
    mols = route.molecules()
    violations: dict[str, tuple[str, ...]] = {}
    for c in constraints:
        if c.type not in CONSTRAINT_TYPES:
            raise UnknownConstraintType(f"unknown constraint type {c.type!r}")
        if c.type == "carcinogen":
            bad = [m for m in mols if annotate(world, m).ground_truth_carcinogen]
        elif c.type == "pyrophoric":
            bad = [m for m in mols if annotate(world, m).ground_truth_pyrophoric]
        else:
            bad = [m for m in mols if m in c.molecules]
        violations[c.type] = tuple(bad)
    return ConstraintResult(not any(violations.values()), violations)


def dominates(a: RouteReport, b: RouteReport) -> bool:
    return dominates_vec(a.objectives(), b.objectives())


def dominates_vec(a: Sequence[float], b: Sequence[float]) -> bool:
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def pareto_front(reports: Sequence[RouteReport | Sequence[float]]) -> list[int]:
    """Indices of non-dominated entries, ascending. Exact duplicates are all kept.

    Entries are visited in lexicographic order; anything that could dominate
    an entry sorts before it, and dominance is transitive, so comparing
    against the front built so far suffices.
    """
    vecs = [tuple(r.objectives()) if isinstance(r, RouteReport) else tuple(r) for r in reports]
    order = sorted(range(len(vecs)), key=lambda i: vecs[i])
    front: list[int] = []
    for i in order:
        if not any(dominates_vec(vecs[j], vecs[i]) for j in front):
            front.append(i)
    return sorted(front)
