"""Language-model backends: scripted replay, deterministic rules, and HTTP.

Every backend answers ``complete(role, system, prompt) -> str``.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from mmorf.agents.actions import Action, format_reply
from mmorf.errors import HttpError, LlmError, LlmTimeout, ParseError, ScenarioExhausted, SchemaViolation

log = logging.getLogger(__name__)

ROLES = ("navigator", "regulator", "verifier", "coordinator")


class LlmBackend(Protocol):
    def complete(self, role: str, system: str, prompt: str) -> str: ...


def llm_complete(backend: LlmBackend, role: str, system_text: str, prompt_text: str) -> str:
    return backend.complete(role, system_text, prompt_text)


# ---------------------------------------------------------------------------
# scripted
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioEntry:
    role: str
    response: str
    match: str | None = None


class ScriptedBackend:
    """Replays a scenario: the first unused entry whose role and ``match`` fit wins."""

    def __init__(self, entries: list[ScenarioEntry]):
        self.entries = list(entries)
        self.used = [False] * len(self.entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(load_scenario(path))

    def fresh(self) -> "ScriptedBackend":
        return ScriptedBackend(self.entries)

    def complete(self, role: str, system: str, prompt: str) -> str:
        for i, e in enumerate(self.entries):
            if self.used[i] or e.role != role:
                continue
            if e.match is not None and e.match not in prompt:
                continue
            self.used[i] = True
            return e.response
        raise ScenarioExhausted(f"no scenario entry left for role {role!r}")

    @property
    def remaining(self) -> int:
        return self.used.count(False)


def load_scenario(path: str | Path) -> list[ScenarioEntry]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaViolation("scenario must be a list")
    out = []
    for i, d in enumerate(data):
        p = f"$[{i}]"
        if not isinstance(d, dict) or set(d) - {"role", "match", "response"}:
            raise SchemaViolation("entry must be an object with role/match/response", p)
        if d.get("role") not in ROLES:
            raise SchemaViolation(f"role must be one of {ROLES}", f"{p}.role")
        if not isinstance(d.get("response"), str):
            raise SchemaViolation("response must be a string", f"{p}.response")
        m = d.get("match")
        if m is not None and not isinstance(m, str):
            raise SchemaViolation("match must be a string", f"{p}.match")
        out.append(ScenarioEntry(d["role"], d["response"], m))
    return out


# ---------------------------------------------------------------------------
# rule policies
# ---------------------------------------------------------------------------

NAVIGATOR_RULE_VF = "Synth() - 10*Pyro() - 10*FastCarc() - 0.01*BBPrice()"
COORDINATOR_RULE_EXPAND = 50

_CONSTRAINT_LINE = re.compile(r"^Hard constraints: (.*)$", re.M)


def _reports_after(prompt: str, label: str) -> list[tuple[int | None, dict[str, Any]]]:
    out = []
    for line in prompt.splitlines():
        s = line.strip()
        if label and label not in s:
            continue
        brace = s.find("{")
        if brace < 0:
            continue
        try:
            obj = json.loads(s[brace:])
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict) or "rl" not in obj or not isinstance(obj.get("molecules"), dict):
            continue
        m = re.search(r"Rejected Route (\d+):", s)
        out.append((int(m.group(1)) if m else None, obj))
    return out


def _hard_constraints(prompt: str) -> list[tuple[str, tuple[str, ...]]]:
    out: list[tuple[str, tuple[str, ...]]] = []
    m = _CONSTRAINT_LINE.search(prompt)
    if not m:
        return out
    for clause in m.group(1).rstrip(".").split(";"):
        clause = clause.strip()
        if clause == "avoid carcinogenic substances":
            out.append(("carcinogen", ()))
        elif clause == "avoid pyrophoric substances":
            out.append(("pyrophoric", ()))
        elif clause.startswith("avoid "):
            out.append(("user", tuple(x.strip() for x in clause[6:].split(","))))
    return out


def _visible_violations(report: dict[str, Any], constraints) -> list[str]:
    mols = report.get("molecules", {})
    bad: dict[str, None] = {}
    for kind, named in constraints:
        for mol, prof in mols.items():
            if kind == "carcinogen" and prof.get("carc_alert"):
                bad[mol] = None
            elif kind == "pyrophoric" and prof.get("pyrophoric"):
                bad[mol] = None
            elif kind == "user" and mol in named:
                bad[mol] = None
    return list(bad)


def _objectives(r: dict[str, Any]) -> tuple:
    return (r["carc"], r["pyro"], r["ghs_count"], r["smp"], r["rl"])


def _rule_verifier(prompt: str) -> Action:
    constraints = _hard_constraints(prompt)
    proposed = [r for i, r in _reports_after(prompt, "Proposed Route:")]
    if not proposed:
        return Action("AcceptProposed", ("no report to judge",))
    report = proposed[0]
    bad = _visible_violations(report, constraints)
    if bad:
        return Action("Reject", (f"The route uses {', '.join(bad)}, which violates the hard constraints. Avoid {', '.join(bad)}.",))
    rejected = [(i, r) for i, r in _reports_after(prompt, "Rejected Route") if i is not None]
    usable = [(i, r) for i, r in rejected if not _visible_violations(r, constraints)]
    if not usable:
        return Action("AcceptProposed", ("satisfies the hard constraints",))
    best_idx, best = min(usable, key=lambda t: (_objectives(t[1]), t[0]))
    mine, theirs = _objectives(report), _objectives(best)
    if all(a <= b for a, b in zip(mine, theirs)):
        return Action("AcceptProposed", (f"satisfies the hard constraints and is no worse than rejected route {best_idx}",))
    return Action("Reject", (f"Rejected route {best_idx} is better on at least one objective.",))


def _rule_regulator(prompt: str) -> Action:
    restr_match = re.search(r"The current pruning restrictions are:\s+`(\{.*?\})`", prompt, re.S)
    current = json.loads(restr_match.group(1)) if restr_match else {}
    if "Original user Context:" not in prompt:
        # first turn carries no instructions, so only restate the depth limit
        return Action("DepthLimit", (int(current.get("depth_limit", -1)),))
    context = prompt.split("Original user Context:", 1)[1].split("The current pruning restrictions are:", 1)[0]
    reports = [r for _, r in _reports_after(prompt, "")]
    product_m = re.search(r"synthesized is `([^`]*)`", prompt)
    product = product_m.group(1) if product_m else ""
    already = set(current.get("molecules", []))
    words = set(re.findall(r"[a-z0-9]+(?:-[a-z0-9]+)*", context))
    flag_carc = "carcinogen" in context
    flag_pyro = "pyrophoric" in context
    wanted: dict[str, None] = {}
    for r in reports:
        for mol, prof in r.get("molecules", {}).items():
            if mol == product or mol in already:
                continue
            if mol in words or (flag_carc and prof.get("carc_alert")) or (flag_pyro and prof.get("pyrophoric")):
                wanted[mol] = None
    if wanted:
        return Action("RestrictMolecules", tuple(sorted(wanted)))
    return Action("Finalize", ())


def _rule_navigator(prompt: str) -> Action:
    if f"The current value function is: `{NAVIGATOR_RULE_VF}`" in prompt:
        return Action("Finalize", ())
    return Action("SetValueFunction", (NAVIGATOR_RULE_VF,))


def _rule_coordinator(prompt: str) -> Action:
    ctx = prompt.split("additional context for planning:", 1)[-1]
    ctx = re.split(r"\nPrevious planning decisions|\n\nThe current pruning restrictions", ctx)[0].strip()
    ctx = ctx or "Improve the routes on all safety and cost objectives."
    history = prompt.split("Previous planning decisions made by the coordinator:", 1)
    past = history[1] if len(history) > 1 else ""
    if " - Pruning(" not in past:
        return Action("Pruning", (ctx,))
    if " - ValueFn(" not in past:
        return Action("ValueFn", (ctx,))
    return Action("ExpandDefault", (COORDINATOR_RULE_EXPAND,))


RULE_POLICIES: dict[str, Callable[[str], Action]] = {
    "verifier": _rule_verifier,
    "regulator": _rule_regulator,
    "navigator": _rule_navigator,
    "coordinator": _rule_coordinator,
}


class RuleBackend:
    """Deterministic policies; the reply depends on the prompt text only."""

    def complete(self, role: str, system: str, prompt: str) -> str:
        policy = RULE_POLICIES.get(role)
        if policy is None:
            raise LlmError(f"rule backend has no policy for role {role!r}")
        return format_reply(policy(prompt), thought=f"rule policy for {role}")

    def fresh(self) -> "RuleBackend":
        return self


# ---------------------------------------------------------------------------
# http
# ---------------------------------------------------------------------------

@dataclass
class HttpBackend:
    """OpenAI-compatible chat-completions client."""

    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 1.0
    temperature: float = 0.0
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    _local: threading.local = field(default_factory=threading.local, repr=False)

    @classmethod
    def from_env(cls, **overrides: Any) -> "HttpBackend":
        base = overrides.pop("base_url", None) or os.environ.get("MMORF_LLM_BASE_URL")
        model = overrides.pop("model", None) or os.environ.get("MMORF_LLM_MODEL")
        if not base or not model:
            raise LlmError("http backend needs MMORF_LLM_BASE_URL and MMORF_LLM_MODEL")
        key = overrides.pop("api_key", None) or os.environ.get("MMORF_LLM_API_KEY")
        return cls(base_url=base, model=model, api_key=key, **overrides)

    def fresh(self) -> "HttpBackend":
        return self

    def _client(self) -> httpx.Client:
        # one client per thread keeps connections independent across tasks
        client = getattr(self._local, "client", None)
        if client is None:
            client = httpx.Client(timeout=self.timeout, transport=self.transport)
            self._local.client = client
        return client

    def complete(self, role: str, system: str, prompt: str) -> str:
        url = self.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
        }
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client().post(url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = LlmTimeout(f"no reply from {url} within {self.timeout}s")
                log.warning("llm timeout (attempt %d): %s", attempt + 1, exc)
                continue
            except httpx.HTTPError as exc:
                last = HttpError(None, str(exc))
                log.warning("llm transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = HttpError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                raise HttpError(resp.status_code, resp.text)
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise HttpError(resp.status_code, f"unexpected response shape: {resp.text}") from exc
        assert last is not None
        raise last


def make_backend(spec: str, **http_options: Any) -> LlmBackend:
    """``scripted:<path>`` | ``rule`` | ``http``."""
    if spec == "rule":
        return RuleBackend()
    if spec.startswith("scripted:"):
        return ScriptedBackend.from_file(spec.split(":", 1)[1])
    if spec == "http":
        return HttpBackend.from_env(**http_options)
    raise LlmError(f"unknown llm backend {spec!r}; use scripted:<path>, rule or http")
