"""Command-line entry point: ``mmorf plan|bench|eval|oracle|vf``.

Settings resolve in this order: command-line flag, environment variable,
``--config`` JSON file, built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from mmorf.agents.llm import make_backend
from mmorf.chemworld import Reaction, World, load_world
from mmorf.errors import MmorfError
from mmorf.evalbench.jsonl import JsonlWriter, dumps, read_jsonl
from mmorf.evalbench.metrics import assess, summarize
from mmorf.evalbench.oracle import brute_force_routes
from mmorf.evalbench.reports import build_report, dominates
from mmorf.evalbench.restriction_db import load_restriction_db
from mmorf.evalbench.tasks import Task, load_benchmark, load_task, task_from_dict
from mmorf.planner import SOLVED, SYSTEMS, PlanResult, SearchConfig, run
from mmorf.routes import Route, open_molecules
from mmorf.vfdsl import RouteState, component_breakdown, evaluate_vf, parse_vf, render_vf

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

PRECEDENCE = """\
settings precedence: flag > environment > --config file > default
environment: MMORF_I_MAX, MMORF_TIME_LIMIT, MMORF_LLM (backend spec),
             MMORF_LLM_BASE_URL, MMORF_LLM_MODEL, MMORF_LLM_API_KEY (http backend)
config file keys: i_max, i_init, time_limit_seconds, k_candidates, branching,
                  system, llm, restriction_db, smp_per_occurrence
exit codes: 0 success, 1 no route found, 2 usage or input error"""


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------

def _nonneg_int_value(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _nonneg_float_value(text: str) -> float:
    v = float(text)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


@dataclass(frozen=True)
class _Setting:
    name: str
    env: str | None
    conv: Callable[[str], Any]
    default: Any


_SETTINGS = (
    _Setting("i_max", "MMORF_I_MAX", _nonneg_int_value, 500),
    _Setting("i_init", None, _nonneg_int_value, 20),
    _Setting("time_limit_seconds", "MMORF_TIME_LIMIT", _nonneg_float_value, 7200.0),
    _Setting("k_candidates", None, _nonneg_int_value, 5),
    _Setting("branching", None, _nonneg_int_value, 10),
    _Setting("system", None, str, "plain"),
    _Setting("llm", "MMORF_LLM", str, "rule"),
    _Setting("restriction_db", None, str, None),
    _Setting("smp_per_occurrence", None, bool, False),
)


def resolve_settings(args: argparse.Namespace, env: dict[str, str] | None = None) -> dict[str, Any]:
    env = os.environ if env is None else env
    file_cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        file_cfg = _read_json(args.config)
        if not isinstance(file_cfg, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        unknown = set(file_cfg) - {s.name for s in _SETTINGS}
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {sorted(unknown)}")
    out: dict[str, Any] = {}
    for s in _SETTINGS:
        flag = getattr(args, s.name, None)
        try:
            if flag is not None and flag is not False:
                out[s.name] = flag
            elif s.env and env.get(s.env):
                out[s.name] = s.conv(env[s.env])
            elif s.name in file_cfg:
                value = file_cfg[s.name]
                out[s.name] = s.conv(str(value)) if s.conv is not bool else bool(value)
            else:
                out[s.name] = s.default
        except ValueError as exc:
            raise UsageError(f"bad value for {s.name}: {exc}") from exc
    if out["system"] not in SYSTEMS:
        raise UsageError(f"unknown system {out['system']!r}; choose from {', '.join(SYSTEMS)}")
    return out


def _search_config(settings: dict[str, Any]) -> SearchConfig:
    db = tuple(load_restriction_db(settings["restriction_db"])) if settings["restriction_db"] else ()
    if settings["system"] == "staticreg" and not db:
        raise UsageError("system staticreg needs --restriction-db")
    i_init = settings["i_init"]
    if settings["system"] == "masil":
        i_init = min(i_init, settings["i_max"])
    try:
        return SearchConfig(
            i_max=settings["i_max"],
            i_init=i_init,
            k_candidates=settings["k_candidates"],
            branching=settings["branching"],
            time_limit_seconds=settings["time_limit_seconds"],
            system=settings["system"],
            restriction_db=db,
            smp_per_occurrence=settings["smp_per_occurrence"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _backend(settings: dict[str, Any]):
    if settings["system"] in ("masil", "rfas"):
        return make_backend(settings["llm"])
    return None


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from exc


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def describe_result(result: PlanResult) -> str:
    lines = [f"task {result.task_id} [{result.system}]: {result.status} after {result.iterations_used} iterations"]
    if result.route is not None and result.report is not None:
        rep = result.report
        lines.append(f"  carc={rep.carc:.3f} pyro={rep.pyro} ghs={rep.ghs_count} smp={rep.smp:.2f} rl={rep.rl}")
        for rxn in result.route.smiles:
            lines.append(f"  {rxn}")
    if result.rejected_routes:
        lines.append(f"  {len(result.rejected_routes)} route(s) rejected by the verifier")
    return "\n".join(lines)


def _plan_one(task: Task, world: World, config: SearchConfig, backend) -> PlanResult:
    return run(task, world, config, backend=backend.fresh() if backend is not None else None)


def _summary_from_records(records: Sequence[dict[str, Any]], world: World, smp_per_occurrence: bool):
    outcomes = []
    for rec in records:
        task = task_from_dict(rec["task"], canonical=False)
        route = Route.from_json(rec["route"]) if rec.get("route") else None
        outcomes.append(assess(route, task.constraints, world, smp_per_occurrence))
    return summarize(outcomes)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_plan(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    if bool(args.task) == bool(args.product):
        raise UsageError("plan needs exactly one of --task or --product")
    task = load_task(args.task) if args.task else task_from_dict(
        {"id": args.product, "product": args.product, "mode": "hcmo", "constraints": [], "instruction": ""}
    )
    world = load_world(args.world)
    result = _plan_one(task, world, _search_config(settings), _backend(settings))
    record = dumps(result.to_json())
    if args.out:
        with JsonlWriter(args.out, append=args.append) as w:
            w.write(result.to_json())
        print(describe_result(result))
    else:
        print(record)
        print(describe_result(result), file=sys.stderr)
    return EXIT_OK if result.status == SOLVED else EXIT_FAIL


def cmd_bench(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    tasks = load_benchmark(args.manifest)
    world = load_world(args.world)
    config = _search_config(settings)
    backend = _backend(settings)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(lambda t: _plan_one(t, world, config, backend), tasks))
    records = [r.to_json() for r in results]
    with JsonlWriter(args.out) as w:
        for rec in records:
            w.write(rec)
    summary = _summary_from_records(records, world, settings["smp_per_occurrence"])
    summary_path = Path(args.summary) if args.summary else Path(str(args.out) + ".summary.json")
    summary_path.write_text(json.dumps(summary.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    for r in results:
        print(describe_result(r).splitlines()[0])
    s = summary
    print(f"PR={s.pr:.1f} VR={s.vr:.1f} SR={s.sr:.1f} P-S={s.p_minus_s:.1f} over {s.n_tasks} tasks")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    world = load_world(args.world)
    records = read_jsonl(args.results)
    summary = _summary_from_records(records, world, args.smp_per_occurrence)
    out: dict[str, Any] = {"summary": summary.to_json()}
    if args.compare:
        out["comparison"] = compare_results(records, read_jsonl(args.compare), world, args.smp_per_occurrence)
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def compare_results(a: Sequence[dict], b: Sequence[dict], world: World, smp_per_occurrence: bool = False) -> dict:
    """Per-task Pareto comparison of two result sets, matched on task id."""

    def reports(records):
        out = {}
        for rec in records:
            if rec.get("route"):
                route = Route.from_json(rec["route"])
                if assess(route, (), world).valid:
                    out[rec["task_id"]] = build_report(route, world, smp_per_occurrence)
        return out

    ra, rb = reports(a), reports(b)
    counts = {"a_dominates": 0, "b_dominates": 0, "equal": 0, "incomparable": 0, "only_a": 0, "only_b": 0}
    for tid in sorted(set(ra) | set(rb)):
        if tid not in rb:
            counts["only_a"] += 1
        elif tid not in ra:
            counts["only_b"] += 1
        elif dominates(ra[tid], rb[tid]):
            counts["a_dominates"] += 1
        elif dominates(rb[tid], ra[tid]):
            counts["b_dominates"] += 1
        elif ra[tid].objectives() == rb[tid].objectives():
            counts["equal"] += 1
        else:
            counts["incomparable"] += 1
    return counts


def cmd_oracle(args: argparse.Namespace) -> int:
    world = load_world(args.world)
    routes = brute_force_routes(world, args.product, args.max_depth)
    for r in routes:
        print(dumps({"route": r.to_json(), "report": build_report(r, world).to_json()}))
    print(f"{len(routes)} route(s)", file=sys.stderr)
    return EXIT_OK if routes else EXIT_FAIL


def cmd_vf(args: argparse.Namespace) -> int:
    node = parse_vf(args.expression)
    if args.vf_command == "parse":
        print(render_vf(node))
        return EXIT_OK
    world = load_world(args.world)
    if args.route:
        route = Route.from_json(_read_json(args.route))
        state = RouteState(route.reactions, tuple(open_molecules(route.reactions, route.product, world)))
    else:
        state = RouteState(tuple(Reaction.parse(s) for s in args.reaction), tuple(args.open))
    print(json.dumps({"vf": render_vf(node), "value": evaluate_vf(node, state, world),
                      "components": component_breakdown(node, state, world)}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _planning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--world", required=True, help="world JSON file")
    p.add_argument("--system", choices=SYSTEMS, help="planner variant (default plain)")
    p.add_argument("--llm", help="agent backend: scripted:<path> | rule | http (default rule)")
    p.add_argument("--restriction-db", dest="restriction_db", help="restriction database for staticreg")
    p.add_argument("--i-max", dest="i_max", type=_nonneg_int, help="iteration budget (default 500)")
    p.add_argument("--i-init", dest="i_init", type=_nonneg_int, help="warm-up iterations before delegation (default 20)")
    p.add_argument("--time-limit", dest="time_limit_seconds", type=_nonneg_float, help="seconds (default 7200)")
    p.add_argument("-K", "--k-candidates", dest="k_candidates", type=_pos_int, help="candidates per iteration (default 5)")
    p.add_argument("-B", "--branching", dest="branching", type=_pos_int, help="reactions per expansion (default 10)")
    p.add_argument("--smp-per-occurrence", dest="smp_per_occurrence", action="store_true",
                   help="price a starting material once per use instead of once per route")
    p.add_argument("--config", help="JSON config file")


def _arg_type(conv, minimum):
    def parse(text: str):
        try:
            v = conv(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}")
        return v
    return parse


_nonneg_int = _arg_type(int, 0)
_pos_int = _arg_type(int, 1)
_nonneg_float = _arg_type(float, 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmorf",
        description="Agent-guided multi-objective retrosynthesis planning over synthetic worlds.",
        epilog=PRECEDENCE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one task", epilog=PRECEDENCE,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--task", help="task JSON file")
    p.add_argument("--product", help="plan for this molecule with no constraints")
    p.add_argument("--out", help="append the result here as JSONL (default: stdout)")
    p.add_argument("--append", action="store_true", help="append to --out instead of overwriting")
    _planning_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="plan every task in a manifest", epilog=PRECEDENCE,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--manifest", required=True, help="task manifest JSON")
    p.add_argument("--out", required=True, help="results JSONL")
    p.add_argument("--summary", help="summary JSON (default: <out>.summary.json)")
    p.add_argument("--jobs", type=_pos_int, default=1, help="tasks run concurrently")
    _planning_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="recompute summaries from results JSONL")
    p.add_argument("--results", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--compare", help="second results JSONL for a per-task Pareto comparison")
    p.add_argument("--smp-per-occurrence", dest="smp_per_occurrence", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="enumerate every route up to a depth")
    p.add_argument("--world", required=True)
    p.add_argument("--product", required=True)
    p.add_argument("--max-depth", dest="max_depth", type=_pos_int, default=4)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("vf", help="parse or evaluate a value function")
    vf_sub = p.add_subparsers(dest="vf_command", required=True)
    q = vf_sub.add_parser("parse", help="print the canonical form")
    q.add_argument("expression")
    q.set_defaults(func=cmd_vf)
    q = vf_sub.add_parser("eval", help="evaluate on a route and show each component")
    q.add_argument("expression")
    q.add_argument("--world", required=True)
    q.add_argument("--route", help="route JSON {product, reactions}; open molecules are derived")
    q.add_argument("--reaction", action="append", default=[], help="reaction 'a.b>>c' (repeatable)")
    q.add_argument("--open", nargs="*", default=[], help="open molecules")
    q.set_defaults(func=cmd_vf)
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: --help exits 0, usage errors exit 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, MmorfError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"mmorf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
