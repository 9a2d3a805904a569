"""Benchmark-level rates and objective averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from mmorf.chemworld import World
from mmorf.evalbench.reports import build_report, check_constraints, validate_route
from mmorf.evalbench.tasks import Constraint
from mmorf.routes import Route

OBJECTIVES = ("carc", "pyro", "ghs", "smp", "rl")


@dataclass(frozen=True)
class TaskOutcome:
    present: bool
    valid: bool
    success: bool
    objectives: tuple[float, ...] | None = None


@dataclass(frozen=True)
class BenchmarkSummary:
    n_tasks: int
    present_count: int
    valid_count: int
    success_count: int
    pr: float
    vr: float
    sr: float
    p_minus_s: float
    averages: dict[str, float | None]

    def to_json(self) -> dict[str, Any]:
        return {
            "n_tasks": self.n_tasks,
            "present_count": self.present_count,
            "valid_count": self.valid_count,
            "success_count": self.success_count,
            "pr": self.pr,
            "vr": self.vr,
            "sr": self.sr,
            "p_minus_s": self.p_minus_s,
            "averages": dict(self.averages),
        }


def _pct(count: int, n: int) -> float:
    return 100.0 * count / n if n else 0.0


def summary_from_counts(
    n_tasks: int,
    present: int,
    valid: int,
    success: int,
    averages: dict[str, float | None] | None = None,
) -> BenchmarkSummary:
    if not 0 <= success <= valid <= present <= n_tasks:
        raise ValueError("counts must satisfy 0 <= success <= valid <= present <= n_tasks")
    return BenchmarkSummary(
        n_tasks, present, valid, success,
        pr=_pct(present, n_tasks),
        vr=_pct(valid, n_tasks),
        sr=_pct(success, n_tasks),
        # from the raw counts, so rounding of PR and SR never leaks in
        p_minus_s=_pct(present - success, n_tasks),
        averages=averages if averages is not None else {k: None for k in OBJECTIVES},
    )


def assess(route: Route | None, constraints: Sequence[Constraint], world: World,
           smp_per_occurrence: bool = False) -> TaskOutcome:
    if route is None or not route.reactions:
        return TaskOutcome(False, False, False)
    if not validate_route(route, world).valid:
        return TaskOutcome(True, False, False)
    report = build_report(route, world, smp_per_occurrence)
    ok = check_constraints(route, constraints, world).satisfied
    return TaskOutcome(True, True, ok, tuple(float(x) for x in report.objectives()))


def summarize(outcomes: Sequence[TaskOutcome]) -> BenchmarkSummary:
    valid = [o for o in outcomes if o.valid]
    averages: dict[str, float | None] = {}
    for i, name in enumerate(OBJECTIVES):
        vals = [o.objectives[i] for o in valid if o.objectives is not None]
        averages[name] = sum(vals) / len(vals) if vals else None
    return summary_from_counts(
        len(outcomes),
        sum(o.present for o in outcomes),
        len(valid),
        sum(o.success for o in outcomes),
        averages,
    )


def compute_summary(
    results: Iterable[tuple[Route | None, Sequence[Constraint]]],
    world: World,
    smp_per_occurrence: bool = False,
) -> BenchmarkSummary:
    """PR, VR and SR over (route, constraints) pairs; a missing route counts as empty."""
    return summarize([assess(r, c, world, smp_per_occurrence) for r, c in results])
