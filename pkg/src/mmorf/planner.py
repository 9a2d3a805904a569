"""Best-first AND/OR route search with optional agent guidance.

Each iteration runs simulate -> (delegate) -> select -> expand.  A candidate is
a partial route: the set of reactions chosen so far plus the molecules that
still need a reaction.  Two candidates with the same reaction set are the same
candidate regardless of the order in which they were built.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from mmorf.agents.actions import render_action
from mmorf.agents.llm import LlmBackend
from mmorf.agents.sessions import (
    AgentConfig,
    CandidateView,
    PlanningView,
    Transcript,
    coordinator_delegate,
    navigator_session,
    regulator_session,
    verify_route,
)
from mmorf.chemworld import DEFAULT_BRANCHING, Reaction, World, annotate, expand_retro
from mmorf.errors import FrontierEmpty, IncompleteAssignment, PurchasableTarget, UnknownSystem, VfError
from mmorf.evalbench.reports import RouteReport, build_report
from mmorf.evalbench.restriction_db import staticreg_restrictions
from mmorf.evalbench.tasks import Task
from mmorf.restrictions import RestrictionDelta, RestrictionSet
from mmorf.routes import Route, chain_depth, order_root_first, reaches
from mmorf.vfdsl import DEFAULT_VF, Node, RouteState, evaluate_vf, render_vf

log = logging.getLogger(__name__)

SYSTEMS = ("plain", "masil", "rfas", "staticreg")
SOLVED = "solved"
FAILED_BUDGET = "failed_budget"
FAILED_EXHAUSTED = "failed_exhausted"


@dataclass(frozen=True)
class SearchConfig:
    i_max: int = 500
    i_init: int = 20
    k_candidates: int = 5
    branching: int = DEFAULT_BRANCHING
    time_limit_seconds: float = 7200
    system: str = "plain"
    selection_policy: str = "value"
    return_policy: str | None = None
    max_routes: int = 1
    restriction_db: tuple[Any, ...] = ()
    smp_per_occurrence: bool = False
    restrictions: RestrictionSet | None = None

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise UnknownSystem(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        if self.i_max < 0:
            raise ValueError("i_max must be >= 0")
        if self.i_init > self.i_max and self.system == "masil":
            raise ValueError("i_init must not exceed i_max")
        if self.k_candidates < 1:
            raise ValueError("k_candidates must be >= 1")
        if self.branching < 1:
            raise ValueError("branching must be >= 1")
        if self.time_limit_seconds < 0:
            raise ValueError("time_limit_seconds must be >= 0")
        if self.selection_policy not in ("value", "agentic"):
            raise ValueError("selection_policy must be 'value' or 'agentic'")
        if self.return_policy not in (None, "first_found", "verified"):
            raise ValueError("return_policy must be 'first_found' or 'verified'")
        if self.max_routes < 1:
            raise ValueError("max_routes must be >= 1")

    @property
    def effective_return_policy(self) -> str:
        if self.return_policy is not None:
            return self.return_policy
        return "verified" if self.system in ("masil", "rfas") else "first_found"


@dataclass
class Candidate:
    id: str
    seq: int
    reactions: tuple[Reaction, ...]
    open: tuple[str, ...]
    parent: str | None = None
    dead: bool = False

    @property
    def key(self) -> frozenset[str]:
        return frozenset(r.smiles for r in self.reactions)

    def state(self) -> RouteState:
        return RouteState(self.reactions, self.open)

    def view(self) -> CandidateView:
        return CandidateView(self.id, self.reactions, self.open)


@dataclass(frozen=True)
class CandidateRef:
    id: str
    value: float


@dataclass(frozen=True)
class ExpansionOutcome:
    kind: str  # extended | dead_end | completed
    children: tuple[str, ...] = ()
    completed: tuple[str, ...] = ()
    molecule: str | None = None


@dataclass(frozen=True)
class PruneSummary:
    pruned: int
    warnings: tuple[str, ...] = ()


@dataclass
class RejectedRoute:
    route: Route
    report: RouteReport
    feedback: str


@dataclass
class SearchState:
    task: Task
    world: World
    config: SearchConfig
    root: str
    vf: Node
    restrictions: RestrictionSet
    candidates: dict[str, Candidate] = field(default_factory=dict)
    frontier: dict[str, None] = field(default_factory=dict)
    seen: set[frozenset[str]] = field(default_factory=set)
    excluded_roots: set[str] = field(default_factory=set)
    iteration: int = 0
    rejected: list[RejectedRoute] = field(default_factory=list)
    events: list[dict[str, Any]] = field(default_factory=list)
    transcript: Transcript = field(default_factory=Transcript)
    _values: dict[tuple[Node, str], float] = field(default_factory=dict, repr=False)

    def emit(self, event: dict[str, Any]) -> None:
        self.events.append({"iteration": self.iteration, **event})

    def new_candidate(self, reactions: tuple[Reaction, ...], open_: tuple[str, ...], parent: str | None) -> Candidate:
        seq = len(self.candidates)
        cand = Candidate(f"c{seq}", seq, reactions, open_, parent)
        self.candidates[cand.id] = cand
        self.seen.add(cand.key)
        return cand

    def value(self, cand: Candidate, vf: Node | None = None) -> float:
        vf = self.vf if vf is None else vf
        key = (vf, cand.id)
        hit = self._values.get(key)
        if hit is None:
            try:
                hit = evaluate_vf(vf, cand.state(), self.world)
            except VfError as exc:
                self.emit({"event": "vf_error", "candidate": cand.id, "error": str(exc)})
                hit = -math.inf
            self._values[key] = hit
        return hit


@dataclass
class PlanResult:
    task_id: str
    task: dict[str, Any]
    system: str
    status: str
    route: Route | None
    report: RouteReport | None
    iterations_used: int
    wall_seconds: float
    rejected_routes: list[RejectedRoute]
    event_log: list[dict[str, Any]]
    transcript: list[dict[str, Any]]
    routes: list[Route] = field(default_factory=list)

    def __post_init__(self):
        if (self.status == SOLVED) != (self.route is not None):
            raise ValueError("status 'solved' and route presence must agree")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "task_id": self.task_id,
            "task": self.task,
            "system": self.system,
            "status": self.status,
            "route": self.route.to_json() if self.route else None,
            "report": self.report.to_json() if self.report else None,
            "iterations_used": self.iterations_used,
            "rejected_routes": [
                {"route": r.route.to_json(), "report": r.report.to_json(), "feedback": r.feedback}
                for r in self.rejected_routes
            ],
            "event_log": self.event_log,
            "transcript": self.transcript,
            "timing": {"wall_seconds": self.wall_seconds},
        }
        if self.routes:
            out["routes"] = [r.to_json() for r in self.routes]
        return out


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def init_search(task: Task, world: World, config: SearchConfig) -> SearchState:
    if config.system not in SYSTEMS:
        raise UnknownSystem(config.system)
    root = task.product
    if world.is_purchasable(root):
        raise PurchasableTarget(f"{root} is purchasable; there is nothing to plan")
    restrictions = config.restrictions.copy() if config.restrictions is not None else RestrictionSet()
    if config.system == "staticreg":
        matched = staticreg_restrictions(config.restriction_db, root)
        restrictions.apply(RestrictionDelta.between(RestrictionSet(), matched))
    state = SearchState(task, world, config, root, DEFAULT_VF, restrictions)
    start = state.new_candidate((), (root,), None)
    state.frontier[start.id] = None
    return state


def simulate(state: SearchState, k: int, vf: Node | None = None) -> list[CandidateRef]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not state.frontier:
        raise FrontierEmpty("no expandable candidates remain")
    cands = [state.candidates[i] for i in state.frontier]
    best = heapq.nsmallest(k, cands, key=lambda c: (-state.value(c, vf), c.seq))
    return [CandidateRef(c.id, state.value(c, vf)) for c in best]


def select(
    state: SearchState,
    candidates: Sequence[CandidateRef],
    policy: str = "value",
    agent_choice: str | None = None,
) -> CandidateRef:
    if not candidates:
        raise ValueError("select needs at least one candidate")
    if policy == "agentic" and agent_choice is not None:
        for c in candidates:
            if c.id == agent_choice:
                return c
        if agent_choice in state.frontier:
            cand = state.candidates[agent_choice]
            return CandidateRef(cand.id, state.value(cand))
        state.emit({"event": "select_fallback", "requested": agent_choice, "chosen": candidates[0].id})
    return candidates[0]


def _pick_open(state: SearchState, cand: Candidate) -> str:
    best, best_cost = cand.open[0], -math.inf
    for m in cand.open:
        cost = annotate(state.world, m).synth_cost
        if cost > best_cost:
            best, best_cost = m, cost
    return best


def _creates_cycle(reactions: tuple[Reaction, ...], rxn: Reaction) -> bool:
    return any(r == rxn.product or reaches(reactions, r, rxn.product) for r in rxn.reactants)


def _root_reaction(cand_reactions: tuple[Reaction, ...], root: str) -> str | None:
    for r in cand_reactions:
        if r.product == root:
            return r.smiles
    return None


def expand(state: SearchState, cand_ref: CandidateRef | Candidate | str) -> ExpansionOutcome:
    cid = cand_ref if isinstance(cand_ref, str) else cand_ref.id
    cand = state.candidates[cid]
    if not cand.open:
        raise IncompleteAssignment(f"{cid} has no open molecule to expand")
    mol = _pick_open(state, cand)
    world, rs = state.world, state.restrictions
    children: list[str] = []
    completed: list[str] = []
    for rxn in expand_retro(world, mol, state.config.branching):
        if rs.blocks_reaction(rxn) or _creates_cycle(cand.reactions, rxn):
            continue
        reactions = cand.reactions + (rxn,)
        key = cand.key | {rxn.smiles}
        if key in state.seen:
            continue
        if rs.depth_limit >= 0 and chain_depth(reactions, state.root) > rs.depth_limit:
            continue
        if state.excluded_roots and _root_reaction(reactions, state.root) in state.excluded_roots:
            continue
        made = {r.product for r in reactions}
        open_ = [m for m in cand.open if m != mol]
        for m in rxn.reactants:
            if m not in made and m not in open_ and not world.is_purchasable(m):
                open_.append(m)
        child = state.new_candidate(reactions, tuple(open_), cand.id)
        if open_:
            state.frontier[child.id] = None
            children.append(child.id)
        else:
            completed.append(child.id)
    state.frontier.pop(cand.id, None)
    if completed:
        kind = "completed"
    elif children:
        kind = "extended"
    else:
        kind = "dead_end"
    return ExpansionOutcome(kind, tuple(children), tuple(completed), mol)


def apply_restrictions(state: SearchState, delta: RestrictionDelta) -> PruneSummary:
    warnings = state.restrictions.apply(delta)
    pruned = 0
    for cid in list(state.frontier):
        cand = state.candidates[cid]
        if state.restrictions.blocks_route(cand.reactions, state.root):
            cand.dead = True
            del state.frontier[cid]
            # forget it so a later relaxation can re-derive the same partial route
            state.seen.discard(cand.key)
            pruned += 1
    return PruneSummary(pruned, tuple(warnings))


def extract_route(state: SearchState, completed: Candidate | str) -> Route:
    cand = state.candidates[completed] if isinstance(completed, str) else completed
    if cand.open or not cand.reactions:
        raise IncompleteAssignment(f"{cand.id} still has open molecules {list(cand.open)}")
    return Route(state.root, order_root_first(state.root, cand.reactions))


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

@dataclass
class _Run:
    state: SearchState
    backend: LlmBackend | None
    agent_config: AgentConfig
    clock: Callable[[], float]
    started: float
    context: str
    previous_actions: list[str] = field(default_factory=list)
    pending_default: int = 0
    found: list[Route] = field(default_factory=list)
    accepted: Route | None = None

    @property
    def cfg(self) -> SearchConfig:
        return self.state.config

    def remaining(self) -> int:
        return self.cfg.i_max - self.state.iteration

    def view(self, refs: Sequence[CandidateRef]) -> PlanningView:
        s = self.state
        return PlanningView(
            s.root, s.world, [s.candidates[r.id].view() for r in refs], s.vf, s.restrictions, self.context
        )

    def emit(self, event: dict[str, Any]) -> None:
        self.state.emit(event)

    # delegation -----------------------------------------------------------

    def delegate(self, refs: list[CandidateRef]) -> tuple[list[CandidateRef], str | None]:
        s = self.state
        view = self.view(refs)
        ranked = [(view.candidates[i], r.value) for i, r in enumerate(refs)]
        action = coordinator_delegate(
            view, ranked, self.previous_actions, self.backend, self.agent_config, s.transcript, self.emit
        )
        self.previous_actions.append(render_action(action))
        self.emit({"event": "delegation", "action": render_action(action)})
        if action.tool == "Pruning":
            delta = regulator_session(
                view, view.candidates, action.args[0], self.backend, self.agent_config, s.transcript, self.emit
            )
            summary = apply_restrictions(s, delta)
            self.emit({"event": "restrictions", "delta": delta.to_json(), "pruned": summary.pruned})
            return simulate(s, self.cfg.k_candidates), None
        if action.tool == "ValueFn":
            new_vf = navigator_session(
                view, action.args[0], self.backend, self.agent_config, s.transcript, self.emit
            )
            if new_vf != s.vf:
                s.vf = new_vf
                self.emit({"event": "value_function", "vf": render_vf(new_vf)})
            return simulate(s, self.cfg.k_candidates), None
        if action.tool == "ExpandDefault":
            n = max(1, min(action.args[0], self.remaining()))
            # this iteration is the first of the n default expansions
            self.pending_default = n - 1
            self.emit({"event": "expand_default", "n": n})
            return refs, None
        if self.cfg.selection_policy == "agentic":
            return refs, action.args[0]
        self.emit({"event": "expand_ignored", "requested": action.args[0]})
        return refs, None

    # completion -----------------------------------------------------------

    def on_completed(self, cid: str) -> bool:
        """Handle one completed candidate. True ends the search."""
        s = self.state
        route = extract_route(s, cid)
        if s.restrictions.blocks_route(route.reactions, s.root):
            self.emit({"event": "completed_pruned", "candidate": cid})
            return False
        self.emit({"event": "completed", "candidate": cid, "route": route.smiles})
        if self.cfg.effective_return_policy == "first_found":
            self.found.append(route)
            if len(self.found) >= self.cfg.max_routes:
                return True
            root_rxn = route.reactions[0].smiles
            s.excluded_roots.add(root_rxn)
            for fid in list(s.frontier):
                if _root_reaction(s.candidates[fid].reactions, s.root) == root_rxn:
                    del s.frontier[fid]
            return False
        return self.verify(route)

    def verify(self, route: Route) -> bool:
        s = self.state
        report = build_report(route, s.world, self.cfg.smp_per_occurrence)
        verdict = verify_route(
            report,
            [r.report for r in s.rejected],
            self.remaining(),
            self.backend,
            s.root,
            s.task.context_text(),
            self.agent_config,
            s.transcript,
            self.emit,
        )
        self.emit({"event": "verdict", "decision": verdict.decision, "text": verdict.text,
                   "previous_id": verdict.previous_id, "fallback": verdict.fallback})
        if verdict.decision == "accept_proposed":
            self.accepted = route
            return True
        if verdict.decision == "accept_previous":
            self.accepted = s.rejected[verdict.previous_id - 1].route
            return True
        s.rejected.append(RejectedRoute(route, report, verdict.text))
        n = len(s.rejected)
        if self.cfg.system == "masil":
            self.context += f"\nVerifier feedback on rejected route {n}: {verdict.text}"
        elif self.cfg.system == "rfas":
            cand = CandidateView(f"rejected-{n}", route.reactions, ())
            view = PlanningView(s.root, s.world, [cand], s.vf, s.restrictions, verdict.text)
            delta = regulator_session(
                view, [cand], verdict.text, self.backend, self.agent_config, s.transcript, self.emit
            )
            summary = apply_restrictions(s, delta)
            self.emit({"event": "restrictions", "delta": delta.to_json(), "pruned": summary.pruned})
        return False

    # main loop ------------------------------------------------------------

    def loop(self) -> str:
        s, cfg = self.state, self.cfg
        while True:
            if s.iteration >= cfg.i_max or self.clock() - self.started >= cfg.time_limit_seconds:
                return FAILED_BUDGET
            warmup = cfg.system == "masil" and s.iteration < cfg.i_init
            static = cfg.system == "rfas" or warmup
            try:
                refs = simulate(s, cfg.k_candidates, DEFAULT_VF if static else None)
                choice = None
                if cfg.system == "masil" and not warmup:
                    if self.pending_default > 0:
                        self.pending_default -= 1
                    else:
                        refs, choice = self.delegate(refs)
            except FrontierEmpty:
                return FAILED_EXHAUSTED
            picked = select(s, refs, cfg.selection_policy, choice)
            outcome = expand(s, picked)
            self.emit({"event": "expand", "candidate": picked.id, "molecule": outcome.molecule,
                       "outcome": outcome.kind, "children": len(outcome.children) + len(outcome.completed)})
            s.iteration += 1
            for cid in outcome.completed:
                if self.on_completed(cid):
                    return SOLVED


def run(
    task: Task,
    world: World,
    config: SearchConfig,
    agent_config: AgentConfig | None = None,
    backend: LlmBackend | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> PlanResult:
    """Plan one task. Failures are reported through ``status``, never raised."""
    started = clock()
    state = init_search(task, world, config)
    if config.system in ("masil", "rfas") and backend is None:
        raise ValueError(f"system {config.system!r} needs an LLM backend")
    r = _Run(state, backend, agent_config or AgentConfig(), clock, started, task.context_text())
    status = r.loop()
    route = r.accepted
    if route is None and r.found:
        route = r.found[0]
        status = SOLVED
    report = build_report(route, world, config.smp_per_occurrence) if route is not None else None
    state.emit({"event": "finished", "status": status})
    return PlanResult(
        task_id=task.id,
        task=task.to_json(),
        system=config.system,
        status=status,
        route=route,
        report=report,
        iterations_used=state.iteration,
        wall_seconds=clock() - started,
        rejected_routes=list(state.rejected),
        event_log=state.events,
        transcript=state.transcript.entries,
        routes=list(r.found) if config.max_routes > 1 else [],
    )
