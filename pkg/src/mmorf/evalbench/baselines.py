"""Non-agent baselines: the first-ten-routes Pareto set and the static restriction DB."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

from mmorf.chemworld import World
from mmorf.evalbench.reports import RouteReport, build_report, pareto_front
from mmorf.evalbench.restriction_db import staticreg_restrictions
from mmorf.evalbench.tasks import Task
from mmorf.routes import Route

__all__ = ["Pareto10Result", "pareto10", "staticreg_restrictions"]

N_ROUTES = 10
_FIELDS = ("carc", "pyro", "ghs_count", "smp", "rl")


@dataclass
class Pareto10Result:
    routes: list[Route] = field(default_factory=list)
    reports: list[RouteReport] = field(default_factory=list)
    front: list[int] = field(default_factory=list)
    averages: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "routes": [r.to_json() for r in self.routes],
            "reports": [r.to_json() for r in self.reports],
            "front": list(self.front),
            "averages": dict(self.averages),
        }


def pareto10(task: Task, world: World, config=None) -> Pareto10Result:
    """Collect up to ten distinct routes with the plain planner and keep the non-dominated ones."""
    from mmorf.planner import SearchConfig, run  # the planner imports this package

    base = config or SearchConfig()
    cfg = dataclasses.replace(base, system="plain", max_routes=N_ROUTES, return_policy="first_found")
    result = run(task, world, cfg)
    routes = result.routes or ([result.route] if result.route else [])
    if not routes:
        return Pareto10Result()
    reports = [build_report(r, world, cfg.smp_per_occurrence) for r in routes]
    front = pareto_front(reports)
    averages = {
        name: sum(getattr(reports[i], name) for i in front) / len(front) for name in _FIELDS
    }
    return Pareto10Result(routes, reports, front, averages)
