import itertools
import json
import shutil
import threading
from pathlib import Path

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmorf import data_path
from mmorf.chemworld import Reaction, load_world
from mmorf.errors import BudgetExceeded, HttpError, InvalidRoute, MalformedEntry, NotFound, ParseError, SchemaViolation
from mmorf.evalbench.baselines import pareto10
from mmorf.evalbench.feasibility import feasibility_check, llm_feasibility_check
from mmorf.evalbench.ghs import fetch_ghs_remote, parse_pug_view, read_cache
from mmorf.evalbench.jsonl import JsonlWriter, read_jsonl, without_timing
from mmorf.evalbench.metrics import compute_summary, summary_from_counts
from mmorf.evalbench.oracle import brute_force_routes, min_route_length
from mmorf.evalbench.reports import (
    CYCLIC,
    DUPLICATE_PRODUCER,
    EMPTY,
    INFEASIBLE,
    ORPHAN,
    UNPURCHASABLE_LEAF,
    build_report,
    check_constraints,
    dominates,
    dominates_vec,
    pareto_front,
    validate_route,
)
from mmorf.evalbench.restriction_db import load_restriction_db, staticreg_restrictions
from mmorf.evalbench.tasks import Constraint, load_benchmark, task_from_dict
from mmorf.restrictions import NO_DEPTH_LIMIT
from mmorf.routes import Route

from conftest import make_task

FIXTURES = Path(__file__).parent / "fixtures"
R = Reaction.parse
PH_ACID = Route("ph-acid", (R("bu-li.ph-cl>>ph-acid"),))


# reports -------------------------------------------------------------------

def test_ester_report(tiny, ester_route):
    rep = build_report(ester_route, tiny)
    # max carc over {ac-ester .3, ac-acid .1, me-oh .2}; GHS union {H225}; 10 + 5 purchase
    assert rep.objectives() == (0.3, 0, 1, 15.0, 1)
    assert rep.ghs_codes == {"H225"}


def test_ph_acid_report(tiny):
    # bu-li is a pyrophoric reference; H315 H351 H250 H314 are distinct
    assert build_report(PH_ACID, tiny).objectives() == (0.8, 1, 4, 5.0, 1)


def test_report_json_round_trip(tiny, ester_route):
    from mmorf.evalbench.reports import RouteReport

    rep = build_report(ester_route, tiny)
    assert RouteReport.from_json(json.loads(rep.render())) == rep


def test_smp_reuse(tmp_path):
    world_json = {
        "molecules": {},
        "building_blocks": {"a-x": 7.0, "b-y": 1.0},
        "reactions": [
            {"product": "c-z", "reactants": ["a-x", "b-y"], "plausibility": 0.9},
            {"product": "d-w", "reactants": ["a-x", "c-z"], "plausibility": 0.9},
        ],
    }
    p = tmp_path / "w.json"
    p.write_text(json.dumps(world_json))
    world = load_world(p)
    route = Route("d-w", (R("a-x.c-z>>d-w"), R("a-x.b-y>>c-z")))
    assert build_report(route, world).smp == 8.0
    assert build_report(route, world, smp_per_occurrence=True).smp == 15.0


def test_validate_route_reasons(tiny, ester_route):
    assert validate_route(ester_route, tiny).valid
    assert validate_route(None, tiny).reasons == (EMPTY,)
    assert validate_route(Route("ac-ester", ()), tiny).reasons == (EMPTY,)

    dup = Route("ac-ester", (R("ac-acid.me-oh>>ac-ester"), R("me-oh.ph-cl>>ac-acid"), R("bu-li>>ac-acid")))
    assert DUPLICATE_PRODUCER in validate_route(dup, tiny).reasons

    cyc = Route("ac-ester", (R("ac-acid.me-oh>>ac-ester"), R("ac-ester>>ac-acid")))
    assert CYCLIC in validate_route(cyc, tiny).reasons

    orphan = Route("ac-ester", (R("ac-acid.me-oh>>ac-ester"), R("bu-li.ph-cl>>ph-acid")))
    assert ORPHAN in validate_route(orphan, tiny).reasons

    leaf = Route("ac-ester", (R("ph-acid.me-oh>>ac-ester"),))
    reasons = validate_route(leaf, tiny).reasons
    assert UNPURCHASABLE_LEAF in reasons and INFEASIBLE in reasons


def test_template_reaction_is_feasible(tiny):
    # esterification on a molecule with no explicit rule is still in the top 5
    assert feasibility_check(R("bu-acid.me-oh>>bu-ester"), tiny)


def test_build_report_rejects_structural_failures(tiny):
    with pytest.raises(InvalidRoute):
        build_report(Route("ac-ester", (R("ph-acid.me-oh>>ac-ester"),)), tiny)


def test_check_constraints(tiny, ester_route):
    c, p, u = Constraint("carcinogen"), Constraint("pyrophoric"), Constraint("user", ("bu-li",))
    res = check_constraints(PH_ACID, [c, p, u], tiny)
    assert not res.satisfied
    assert res.violations == {"carcinogen": ("ph-cl",), "pyrophoric": ("bu-li",), "user": ("bu-li",)}
    assert check_constraints(ester_route, [c, p, u], tiny).satisfied
    assert check_constraints(ester_route, [Constraint("user", ("me-oh",))], tiny).violations["user"] == ("me-oh",)


# Pareto --------------------------------------------------------------------

def test_dominance_examples():
    assert dominates_vec((1, 1, 1, 1, 1), (1, 1, 1, 1, 2))
    assert not dominates_vec((1, 1, 1, 1, 1), (1, 1, 1, 1, 1))
    assert not dominates_vec((0, 2, 0, 0, 0), (1, 1, 0, 0, 0))


def test_dominates_on_reports(tiny, ester_route):
    assert not dominates(build_report(ester_route, tiny), build_report(PH_ACID, tiny))
    assert not dominates(build_report(PH_ACID, tiny), build_report(ester_route, tiny))


def test_pareto_examples():
    assert pareto_front([(3, 3, 3, 3, 3)]) == [0]
    assert pareto_front([(2, 2, 2, 2, 2), (1, 1, 1, 1, 1), (3, 3, 3, 3, 3)]) == [1]
    assert pareto_front([(1, 2, 0, 0, 0), (1, 2, 0, 0, 0), (2, 1, 0, 0, 0)]) == [0, 1, 2]
    assert pareto_front([]) == []


def _pairwise_front(vecs):
    return [i for i, v in enumerate(vecs) if not any(dominates_vec(w, v) for w in vecs)]


@settings(max_examples=200)
@given(st.lists(st.tuples(*[st.integers(0, 3)] * 5), max_size=30))
def test_pareto_matches_pairwise(vecs):
    assert pareto_front(vecs) == _pairwise_front(vecs)


# metrics -------------------------------------------------------------------

def test_single_task_summary(tiny, ester_route):
    s = compute_summary([(ester_route, ())], tiny)
    assert (s.pr, s.vr, s.sr, s.p_minus_s) == (100.0, 100.0, 100.0, 0.0)
    assert s.averages["smp"] == 15.0


def test_mixed_summary_hand_tally(tiny, ester_route):
    results = [
        (ester_route, ()),                                          # present, valid, success
        (PH_ACID, (Constraint("carcinogen"),)),                     # present, valid, violates
        (Route("ac-ester", (R("bu-li.ph-cl>>ac-ester"),)), ()),     # present, infeasible
        (None, ()),                                                 # absent
    ]
    s = compute_summary(results, tiny)
    assert (s.present_count, s.valid_count, s.success_count) == (3, 2, 1)
    assert (s.pr, s.vr, s.sr, s.p_minus_s) == (75.0, 50.0, 25.0, 50.0)
    assert s.averages == pytest.approx({"carc": 0.55, "pyro": 0.5, "ghs": 2.5, "smp": 10.0, "rl": 1.0})


def test_p_minus_s_from_counts():
    s = summary_from_counts(111, 71, 60, 54)
    assert round(s.p_minus_s, 1) == 15.3
    assert s.p_minus_s == pytest.approx(1700 / 111)
    with pytest.raises(ValueError):
        summary_from_counts(10, 3, 4, 1)


def test_empty_summary_has_no_averages(tiny):
    s = compute_summary([], tiny)
    assert s.pr == 0.0 and s.averages["carc"] is None


# tasks ---------------------------------------------------------------------

def test_scmo_manifest_has_107_tasks():
    tasks = load_benchmark(data_path("scmo_manifest.json"))
    assert len(tasks) == 107
    assert {t.mode for t in tasks} == {"scmo"} and all(not t.constraints for t in tasks)


def test_fixture_tasks():
    tasks = load_benchmark(data_path("tasks.fixture.json"))
    assert len(tasks) == 3
    cu = tasks[1]
    assert [c.type for c in cu.constraints] == ["carcinogen", "user"]
    assert "Hard constraints: avoid carcinogenic substances; avoid bu-li." in cu.context_text()


@pytest.mark.parametrize("bad", [
    {"id": "t", "product": "a-b", "constraints": [{"type": "X"}]},
    {"id": "t", "product": "a-b", "constraints": [{"type": "user"}]},
    {"id": "t", "product": "a-b", "mode": "scmo", "constraints": [{"type": "carcinogen"}]},
    {"id": "t", "product": "A B"},
    {"id": "", "product": "a-b"},
    {"id": "t", "product": "a-b", "colour": "red"},
])
def test_task_schema_violations(bad):
    with pytest.raises(SchemaViolation):
        task_from_dict(bad)


def test_duplicate_ids_rejected(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps([{"id": "a", "product": "x-y"}] * 2))
    with pytest.raises(SchemaViolation):
        load_benchmark(p)


# restriction db ------------------------------------------------------------

def test_staticreg_matches(tiny):
    db = load_restriction_db(data_path("restrictions.db.json"))
    ester = staticreg_restrictions(db, "ac-ester")
    assert ester.molecules == {"ph-cl"} and ester.depth_limit == 3
    none = staticreg_restrictions(db, "zz-top")
    assert none.is_empty() and none.depth_limit == NO_DEPTH_LIMIT
    ph = staticreg_restrictions(db, "ph-acid")
    assert ph.specific_reactions == {"bu-li.ph-cl>>ph-acid"} and ph.reaction_patterns == {"*-li"}


def test_staticreg_most_permissive_depth():
    db = [
        {"apply_when": ["$X-ester"], "depth_limit": 3},
        {"apply_when": ["ac-*"], "depth_limit": -1},
    ]
    assert staticreg_restrictions(db, "ac-ester").depth_limit == NO_DEPTH_LIMIT
    db[1]["depth_limit"] = 5
    assert staticreg_restrictions(db, "ac-ester").depth_limit == 5


def test_malformed_entry_names_index():
    with pytest.raises(MalformedEntry) as err:
        staticreg_restrictions([{"apply_when": ["a"]}, {"apply_when": ["a"], "depth_limit": -2}], "a")
    assert err.value.index == 1


# oracle --------------------------------------------------------------------

def test_oracle_examples(tiny):
    routes = brute_force_routes(tiny, "ac-ester", 2)
    assert [r.smiles for r in routes] == [["ac-acid.me-oh>>ac-ester"]]
    assert brute_force_routes(tiny, "zz-nothing", 3) == []
    assert min_route_length(routes) == 1 and min_route_length([]) is None
    with pytest.raises(ValueError):
        brute_force_routes(tiny, "ac-ester", 0)


def test_oracle_node_cap(lattice_worlds):
    world, targets = lattice_worlds[0]
    with pytest.raises(BudgetExceeded):
        brute_force_routes(world, targets[0], 4, node_cap=3)


def test_three_routes_world():
    world = load_world(data_path("three_routes.world.json"))
    assert len(brute_force_routes(world, "p3-target", 4)) == 3


# feasibility ---------------------------------------------------------------

def test_feasibility_top_k():
    world = load_world(data_path("feasibility.world.json"))
    assert feasibility_check(R("fz-r1.me-oh>>fz-ester"), world)
    # explicit rules rank above the 0.5 template, which lands sixth
    assert not feasibility_check(R("fz-acid.me-oh>>fz-ester"), world)
    assert feasibility_check(R("fz-acid.me-oh>>fz-ester"), world, top_k=6)
    assert not feasibility_check(R("x>>y"), world)


def test_llm_feasibility_stub(tiny):
    with pytest.raises(NotImplementedError):
        llm_feasibility_check(R("x>>y"), tiny)
    assert llm_feasibility_check(R("x>>y"), tiny, judge=lambda r, w: True)


# baselines -----------------------------------------------------------------

def test_pareto10_three_routes():
    world = load_world(data_path("three_routes.world.json"))
    res = pareto10(make_task("p3-target"), world)
    oracle = {tuple(sorted(r.smiles)) for r in brute_force_routes(world, "p3-target", 4)}
    assert {tuple(sorted(r.smiles)) for r in res.routes} == oracle
    assert res.front == _pairwise_front([r.objectives() for r in res.reports])
    assert set(res.averages) == {"carc", "pyro", "ghs_count", "smp", "rl"}


def test_pareto10_unsolvable(tiny):
    res = pareto10(make_task("zz-nothing"), tiny)
    assert res.routes == [] and res.front == [] and res.averages == {}


# GHS -----------------------------------------------------------------------

def _cache(tmp_path):
    dst = tmp_path / "ghs.json"
    shutil.copy(FIXTURES / "ghs_cache.json", dst)
    return dst


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_parse_pug_view_cassette():
    payload = json.loads((FIXTURES / "pug_view_887.json").read_text())
    assert parse_pug_view(payload) == {"H225", "H301", "H311", "H331", "H370"}
    with pytest.raises(ParseError):
        parse_pug_view({"Fault": {}})


def test_fetch_replays_cassette_and_caches(tmp_path):
    cache = _cache(tmp_path)
    body = (FIXTURES / "pug_view_887.json").read_text()
    seen = []

    def handler(request):
        seen.append(request.url)
        return httpx.Response(200, text=body, headers={"content-type": "application/json"})

    codes = fetch_ghs_remote("887", cache, client=_client(handler))
    assert codes == {"H225", "H301", "H311", "H331", "H370"}
    assert "/compound/887/JSON" in str(seen[0]) and seen[0].params["heading"] == "GHS Classification"
    assert read_cache(cache)["887"] == sorted(codes) and read_cache(cache)["702"] == ["H225", "H319"]
    assert fetch_ghs_remote("887", cache, client=_client(handler)) == codes
    assert len(seen) == 1


def test_cache_hit_never_touches_network(tmp_path):
    def handler(request):
        raise AssertionError("network used")

    assert fetch_ghs_remote("702", _cache(tmp_path), client=_client(handler)) == {"H225", "H319"}


def test_fetch_errors(tmp_path):
    cache = _cache(tmp_path)
    with pytest.raises(NotFound):
        fetch_ghs_remote("999999", cache, client=_client(lambda r: httpx.Response(404)))
    with pytest.raises(NotFound):
        fetch_ghs_remote("methanol", cache, client=_client(lambda r: httpx.Response(200)))
    with pytest.raises(HttpError) as err:
        fetch_ghs_remote("5", cache, client=_client(lambda r: httpx.Response(500, text="oops")))
    assert err.value.status == 500

    def refuse(request):
        raise httpx.ConnectError("down")

    with pytest.raises(HttpError):
        fetch_ghs_remote("5", cache, client=_client(refuse))


def test_concurrent_cache_writers(tmp_path):
    cache = _cache(tmp_path)
    body = (FIXTURES / "pug_view_887.json").read_text()
    client = _client(lambda r: httpx.Response(200, text=body))
    threads = [threading.Thread(target=fetch_ghs_remote, args=(str(cid), cache, client)) for cid in range(10, 18)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert set(read_cache(cache)) == {"702"} | {str(c) for c in range(10, 18)}


@pytest.mark.network
def test_live_pubchem(tmp_path):
    assert "H225" in fetch_ghs_remote("887", tmp_path / "live.json")


# jsonl ---------------------------------------------------------------------

def test_jsonl_round_trip(tmp_path):
    path = tmp_path / "out" / "r.jsonl"
    records = [{"b": 1, "a": [1, 2], "timing": {"wall": 0.1}}, {"x": None}]
    with JsonlWriter(path) as w:
        for rec in records:
            w.write(rec)
    assert read_jsonl(path) == records
    assert path.read_text().splitlines()[0] == '{"a":[1,2],"b":1,"timing":{"wall":0.1}}'
    assert without_timing(records[0]) == {"b": 1, "a": [1, 2]}
    with JsonlWriter(path, append=True) as w:
        w.write({"c": 3})
    assert len(read_jsonl(path)) == 3


def test_jsonl_parse_error_has_line(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text('{"a": 1}\n{oops\n')
    with pytest.raises(ParseError, match=":2:"):
        read_jsonl(path)
