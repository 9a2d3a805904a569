import json

import httpx
import pytest
from hypothesis import given

from mmorf.agents.actions import (
    COORDINATOR_ACTIONS,
    NAVIGATOR_ACTIONS,
    REGULATOR_ACTIONS,
    Action,
    format_reply,
    parse_action,
    render_action,
)
from mmorf.agents.llm import (
    NAVIGATOR_RULE_VF,
    HttpBackend,
    RuleBackend,
    ScenarioEntry,
    ScriptedBackend,
    llm_complete,
    load_scenario,
    make_backend,
)
from mmorf.agents.prompts import render_prompt, system_prompt
from mmorf.agents.sessions import (
    VERIFIER_FALLBACK_REASON,
    AgentConfig,
    CandidateView,
    PlanningView,
    Transcript,
    coordinator_delegate,
    navigator_session,
    regulator_session,
    verify_route,
)
from mmorf.chemworld import Reaction
from mmorf.errors import (
    DisallowedTool,
    HttpError,
    LlmError,
    LlmTimeout,
    MalformedArguments,
    MissingPlaceholder,
    NoActionFound,
    ScenarioExhausted,
    SchemaViolation,
    UnknownTemplate,
    UnknownTool,
)
from mmorf.evalbench.reports import build_report
from mmorf.restrictions import RestrictionSet
from mmorf.routes import Route
from mmorf.vfdsl import DEFAULT_VF, parse_vf, render_vf

from conftest import reply
from strategies import actions

R = Reaction.parse


def scripted(*pairs):
    return ScriptedBackend([ScenarioEntry(role, text) for role, text in pairs])


def view_for(world, product="ph-acid", instruction="Avoid carcinogens."):
    cands = [
        CandidateView("c1", (R("bu-li.ph-cl>>ph-acid"),), ()),
        CandidateView("c2", (), (product,)),
    ]
    return PlanningView(product, world, cands, DEFAULT_VF, RestrictionSet(), instruction)


# action grammar ------------------------------------------------------------

def test_parse_action_examples():
    assert parse_action("Thought: ok\nAction: `Finalize()`<PAUSE>") == Action("Finalize")
    assert parse_action("Action: `DepthLimit(-1)`") == Action("DepthLimit", (-1,))
    with pytest.raises(UnknownTool):
        parse_action("Action: `LaunchRocket()`")
    with pytest.raises(NoActionFound):
        parse_action("I think we are done.")
    with pytest.raises(MalformedArguments):
        parse_action("Action: `ExpandDefault(0)`")
    with pytest.raises(MalformedArguments):
        parse_action("Action: `Reject()`")
    with pytest.raises(DisallowedTool):
        parse_action("Action: `Finalize()`", COORDINATOR_ACTIONS)


def test_parse_uses_last_action_and_tolerates_backticks_in_strings():
    text = "Action: `Finalize()`\nThought: wait\nAction: `Reject('avoid `ph-cl` please')`<PAUSE>"
    assert parse_action(text) == Action("Reject", ("avoid `ph-cl` please",))


def test_expand_accepts_bare_integer_id():
    assert parse_action("Action: `Expand(3)`") == Action("Expand", ("3",))


@given(actions)
def test_action_round_trip(action):
    assert parse_action(format_reply(action, "because")) == action
    assert parse_action(f"Action: `{render_action(action)}`") == action


# prompts -------------------------------------------------------------------

def _verifier_ctx(n):
    return {
        "PRODUCT": "ac-ester",
        "ROUTE_REPORT": "{}",
        "TASK_INSTRUCTIONS": "be safe",
        "NUM_REJECTED_ROUTES": n,
        "REJECTED_ROUTES": [(i, f"report-{i}") for i in range(1, n + 1)],
        "REMAINING_RETRO_ITERATIONS": 7,
    }


def test_verifier_prompt_without_rejections():
    text = render_prompt("verifier", _verifier_ctx(0))
    assert "Previously rejected routes" not in text
    assert "only 7 steps remain" in text


def test_verifier_prompt_shows_last_three():
    text = render_prompt("verifier", _verifier_ctx(5))
    assert [f"report-{i}" in text for i in range(1, 6)] == [False, False, True, True, True]
    assert "(2 earlier rejected routes omitted for brevity)" in text


def test_missing_placeholder_and_unknown_template():
    ctx = _verifier_ctx(0)
    del ctx["PRODUCT"]
    with pytest.raises(MissingPlaceholder) as err:
        render_prompt("verifier", ctx)
    assert err.value.args[0] == "PRODUCT"
    with pytest.raises(UnknownTemplate):
        render_prompt("oracle", {})


def test_system_prompts_exist():
    for role in ("coordinator", "navigator", "regulator", "verifier"):
        assert "Action:" in system_prompt(role)


# backends ------------------------------------------------------------------

def test_scripted_backend_in_order_and_exhaustion():
    b = scripted(("verifier", "one"))
    assert llm_complete(b, "verifier", "sys", "prompt") == "one"
    with pytest.raises(ScenarioExhausted):
        llm_complete(b, "verifier", "sys", "prompt")


def test_scripted_match_and_fresh():
    b = ScriptedBackend([ScenarioEntry("verifier", "a", match="ph-cl"), ScenarioEntry("verifier", "b")])
    assert b.complete("verifier", "", "no match here") == "b"
    assert b.complete("verifier", "", "uses ph-cl") == "a"
    assert b.fresh().remaining == 2


def test_load_scenario_validates(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps([{"role": "wizard", "response": "x"}]))
    with pytest.raises(SchemaViolation):
        load_scenario(p)


def test_make_backend(tmp_path, monkeypatch):
    assert isinstance(make_backend("rule"), RuleBackend)
    with pytest.raises(LlmError):
        make_backend("carrier-pigeon")
    monkeypatch.delenv("MMORF_LLM_BASE_URL", raising=False)
    with pytest.raises(LlmError):
        make_backend("http")
    monkeypatch.setenv("MMORF_LLM_BASE_URL", "http://llm.local/v1")
    monkeypatch.setenv("MMORF_LLM_MODEL", "m")
    assert make_backend("http").model == "m"


def _http(handler, **kw):
    sleeps = []
    backend = HttpBackend("http://llm.local/v1", "m", api_key="k", transport=httpx.MockTransport(handler),
                          sleep=sleeps.append, **kw)
    return backend, sleeps


def test_http_backend_success():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "hi"}}]})

    backend, _ = _http(handler)
    assert backend.complete("verifier", "sys", "user") == "hi"
    assert seen["auth"] == "Bearer k"
    assert [m["role"] for m in seen["body"]["messages"]] == ["system", "user"]


def test_http_backend_retries_then_fails():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503, text="busy")

    backend, sleeps = _http(handler, retries=2, backoff=0.5)
    with pytest.raises(HttpError) as err:
        backend.complete("verifier", "s", "u")
    assert err.value.status == 503 and len(calls) == 3 and sleeps == [0.5, 1.0]


def test_http_backend_unreachable_and_timeout():
    def refuse(request):
        raise httpx.ConnectError("refused")

    backend, _ = _http(refuse)
    with pytest.raises(HttpError):
        backend.complete("verifier", "s", "u")

    def slow(request):
        raise httpx.ReadTimeout("slow")

    backend, _ = _http(slow, retries=0)
    with pytest.raises(LlmTimeout):
        backend.complete("verifier", "s", "u")


def test_http_client_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    backend, _ = _http(handler)
    with pytest.raises(HttpError):
        backend.complete("verifier", "s", "u")
    assert len(calls) == 1


# rule policies -------------------------------------------------------------

def _verify_with_rule(world, route, history=(), constraints_line="Hard constraints: avoid carcinogenic substances."):
    report = build_report(route, world)
    return verify_route(report, list(history), 10, RuleBackend(), route.product, "Plan it.\n" + constraints_line)


def test_rule_verifier(tiny, ester_route):
    bad = Route("ph-acid", (R("bu-li.ph-cl>>ph-acid"),))
    v = _verify_with_rule(tiny, bad)
    assert v.decision == "reject" and "ph-cl" in v.text
    assert _verify_with_rule(tiny, ester_route).decision == "accept_proposed"
    better = build_report(ester_route, tiny)
    worse_route = Route("ac-ester", (R("ac-acid.me-oh>>ac-ester"),))
    assert _verify_with_rule(tiny, worse_route, [better]).decision == "accept_proposed"


def test_rule_backend_is_pure():
    prompt = "The current value function is: `Synth()`."
    assert RuleBackend().complete("navigator", "", prompt) == RuleBackend().complete("navigator", "", prompt)
    assert NAVIGATOR_RULE_VF in RuleBackend().complete("navigator", "", prompt)


def test_rule_coordinator_sequence(tiny):
    view = view_for(tiny)
    ranked = [(c, 0.0) for c in view.candidates]
    done = []
    for _ in range(3):
        done.append(render_action(coordinator_delegate(view, ranked, done, RuleBackend())))
    assert [a.split("(")[0] for a in done] == ["Pruning", "ValueFn", "ExpandDefault"]
    assert done[0] == "Pruning('Avoid carcinogens.')"


def test_rule_regulator_restricts_flagged_molecules(tiny):
    view = view_for(tiny)
    delta = regulator_session(view, view.candidates[:1], "The route uses a carcinogen.", RuleBackend())
    assert delta.add_molecules == {"ph-cl"}
    assert delta.depth_limit is None


# sessions ------------------------------------------------------------------

def test_navigator_set_then_finalize(tiny):
    b = scripted(("navigator", reply('SetValueFunction("Synth() - 5*Pyro()")')), ("navigator", reply("Finalize()")))
    vf = navigator_session(view_for(tiny), "avoid pyrophorics", b)
    assert vf == parse_vf("Synth() - 5*Pyro()")


def test_navigator_turn_cap(tiny):
    texts = ["Synth()", "Depth()", "BBPrice()", "Pyro()"]
    b = scripted(*[("navigator", reply(f'SetValueFunction("{t}")')) for t in texts])
    events = []
    vf = navigator_session(view_for(tiny), "x", b, emit=events.append)
    assert render_vf(vf) == "BBPrice()"
    assert max(e["turn"] for e in events if e["event"] == "agent_turn") == 3
    assert b.remaining == 1


def test_navigator_invalid_vf_keeps_incoming(tiny):
    b = scripted(("navigator", reply('SetValueFunction("Magic()")')), ("navigator", reply("Finalize()")))
    events = []
    assert navigator_session(view_for(tiny), "x", b, emit=events.append) == DEFAULT_VF
    assert any(e["event"] == "invalid_vf" for e in events)


def test_navigator_reranks_in_next_prompt(tiny):
    transcript = Transcript()
    b = scripted(("navigator", reply('SetValueFunction("Depth()")')), ("navigator", reply("Finalize()")))
    navigator_session(view_for(tiny), "x", b, transcript=transcript)
    second = transcript.entries[1]["prompt"]
    assert "The current value function is: `Depth()`" in second
    assert second.index('"id": "c1"') < second.index('"id": "c2"')


def test_navigator_parse_failure_falls_back(tiny):
    b = scripted(*[("navigator", "no idea")] * 6)
    events = []
    assert navigator_session(view_for(tiny), "x", b, emit=events.append) == DEFAULT_VF
    assert [e["error"] is not None for e in events] == [True, True, True]
    assert b.remaining == 0


def test_regulator_examples(tiny):
    view = view_for(tiny)
    b = scripted(("regulator", reply("RestrictMolecules('ph-cl')")), ("regulator", reply("Finalize()")))
    assert regulator_session(view, view.candidates, "x", b).add_molecules == {"ph-cl"}

    events = []
    b = scripted(("regulator", reply("UnrestrictMolecules('bu-li')")), ("regulator", reply("Finalize()")))
    delta = regulator_session(view, view.candidates, "x", b, emit=events.append)
    assert delta.is_empty() and any(e["event"] == "warning" for e in events)

    b = scripted(("regulator", reply("DepthLimit(2)")), ("regulator", reply("DepthLimit(-1)")),
                 ("regulator", reply("Finalize()")))
    assert regulator_session(view, view.candidates, "x", b).is_empty()


def test_regulator_shows_pruned_routes(tiny):
    view = view_for(tiny)
    transcript = Transcript()
    b = scripted(("regulator", reply("RestrictMolecules('ph-cl')")), ("regulator", reply("Finalize()")))
    regulator_session(view, view.candidates, "x", b, transcript=transcript)
    second = transcript.entries[1]["prompt"]
    assert "1. pruned" in second and "Original user Context: x" in second


def test_regulator_turn_cap_and_fallback(tiny):
    view = view_for(tiny)
    b = scripted(*[("regulator", reply(f"RestrictMolecules('m{i}')")) for i in range(4)])
    assert regulator_session(view, view.candidates, "x", b).add_molecules == {"m0", "m1", "m2"}
    b = scripted(*[("regulator", "garbage")] * 6)
    assert regulator_session(view, view.candidates, "x", b).is_empty()


def test_verifier_examples(tiny, ester_route):
    report = build_report(ester_route, tiny)
    v = verify_route(report, [], 5, scripted(("verifier", reply("Reject('too expensive')"))), "ac-ester", "")
    assert (v.decision, v.text) == ("reject", "too expensive")
    v = verify_route(report, [report] * 3, 5, scripted(("verifier", reply("AcceptPrevious(2, 'best so far')"))),
                     "ac-ester", "")
    assert (v.decision, v.previous_id) == ("accept_previous", 2)


def test_verifier_out_of_range_retries_then_falls_back(tiny, ester_route):
    report = build_report(ester_route, tiny)
    b = scripted(("verifier", reply("AcceptPrevious(9, 'old')")), ("verifier", reply("AcceptPrevious(9, 'old')")))
    transcript = Transcript()
    v = verify_route(report, [report], 5, b, "ac-ester", "", transcript=transcript)
    assert v.decision == "accept_proposed" and v.text == VERIFIER_FALLBACK_REASON and v.fallback
    assert len(transcript.entries) == 2
    assert "could not be used" in transcript.entries[1]["prompt"]


def test_verifier_retry_recovers(tiny, ester_route):
    report = build_report(ester_route, tiny)
    b = scripted(("verifier", "hmm"), ("verifier", reply("Reject('no')")))
    assert verify_route(report, [], 5, b, "ac-ester", "").decision == "reject"


def test_coordinator_examples(tiny):
    view = view_for(tiny)
    ranked = [(c, 0.0) for c in view.candidates]
    b = scripted(("coordinator", reply("ExpandDefault(10)")))
    assert coordinator_delegate(view, ranked, [], b) == Action("ExpandDefault", (10,))
    b = scripted(("coordinator", "nothing"), ("coordinator", reply("Finalize()")))
    assert coordinator_delegate(view, ranked, [], b) == Action("ExpandDefault", (1,))


def test_pruning_instructions_reach_regulator_verbatim(case_world):
    from mmorf.planner import SearchConfig, run
    from conftest import make_task

    instructions = "avoid carcinogens"
    b = ScriptedBackend([
        ScenarioEntry("coordinator", reply(f"Pruning('{instructions}')")),
        ScenarioEntry("regulator", reply("Finalize()")),
    ] + [ScenarioEntry("coordinator", reply("ExpandDefault(100)"))]
      + [ScenarioEntry("verifier", reply("AcceptProposed('fine')"))])
    r = run(make_task("tx-core"), case_world, SearchConfig(system="masil", i_init=1, i_max=50), backend=b)
    reg = [e for e in r.transcript if e["role"] == "regulator"]
    assert reg and f"Original user Context: {instructions}" not in reg[0]["prompt"]  # turn 1 shows no instruction
    assert r.status == "solved"


def test_agent_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(turn_limit=0)


def test_allowed_sets_are_disjoint_where_expected():
    assert "Finalize" in NAVIGATOR_ACTIONS and "Finalize" in REGULATOR_ACTIONS
    assert not (COORDINATOR_ACTIONS & REGULATOR_ACTIONS)
