"""Agents that steer the planner: prompts, action grammar, LLM backends and sessions."""

from mmorf.agents.actions import Action, parse_action, render_action
from mmorf.agents.llm import HttpBackend, RuleBackend, ScriptedBackend, llm_complete, make_backend
from mmorf.agents.prompts import render_prompt, system_prompt
from mmorf.agents.sessions import (
    AgentConfig,
    CandidateView,
    PlanningView,
    Transcript,
    Verdict,
    coordinator_delegate,
    navigator_session,
    regulator_session,
    verify_route,
)

__all__ = [
    "Action",
    "AgentConfig",
    "CandidateView",
    "HttpBackend",
    "PlanningView",
    "RuleBackend",
    "ScriptedBackend",
    "Transcript",
    "Verdict",
    "coordinator_delegate",
    "llm_complete",
    "make_backend",
    "navigator_session",
    "parse_action",
    "regulator_session",
    "render_action",
    "render_prompt",
    "system_prompt",
]
