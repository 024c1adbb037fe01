import asyncio
import json

import pytest
from hypothesis import HealthCheck, given, settings

from specagent.backends import ScriptedBackend
from specagent.backends.builders import ScenarioBuilder, critic_distribution, scripted_response
from specagent.core import Action, GenerationMode, Provenance, Role, render_action
from specagent.demo import ANSWER, BASE_MS, CRITIC_MS, LLM_DRAFT_MS, PLAN, QUESTION, SLM_MS, TOOL_MS, ten_step_fixtures_yaml, ten_step_scenario
from specagent.errors import BackendUnavailable, TraceParseError
from specagent.orchestrator import (
    Job,
    RunConfig,
    arun_many,
    parse_trace,
    run_baseline,
    run_task,
    serialize_trace,
)
from specagent.tools import FixtureToolBackend, ToolExecutor, load_fixtures
from specagent.verification import levenshtein

from conftest import run
from strategies import trajectories


def _setup(**scenario_kw):
    backend = ScriptedBackend(ten_step_scenario(**scenario_kw))
    fixtures = FixtureToolBackend(load_fixtures(ten_step_fixtures_yaml()))
    return backend, ToolExecutor(fixtures), fixtures


def test_end_to_end_two_rejections():
    backend, tools, _ = _setup()
    report = run_task(QUESTION, RunConfig(), backend, tools)
    assert report.status == "finished"
    assert report.step_count == 10
    assert report.fallback_count == 2 and report.accept_count == 8
    assert report.intervention_rate == 0.2
    assert backend.count(Role.LLM, GenerationMode.WITH_REASONING) == 2
    assert report.trajectory.final_answer == ANSWER
    fallbacks = [i for i, s in enumerate(report.trajectory.steps) if s.provenance is Provenance.FALLBACK]
    assert fallbacks == [4, 8]


def test_executed_actions_follow_plan_and_selection():
    backend, tools, _ = _setup()
    steps = run_task(QUESTION, RunConfig(), backend, tools).trajectory.steps
    assert steps[1].provenance is Provenance.SYSTEM1_DRAFT  # short-reasoning visit
    assert steps[7].provenance is Provenance.SYSTEM2_DRAFT  # 600 reasoning words > 512
    assert steps[0].provenance is Provenance.SYSTEM2_DRAFT
    for i in (4, 8):
        assert steps[i].action == PLAN[i].base
        assert steps[i].verdict is not None and not steps[i].verdict.accepted


def test_final_answer_matches_baseline():
    backend, tools, _ = _setup()
    speculative = run_task(QUESTION, RunConfig(), backend, tools)
    backend2, tools2, _ = _setup()
    base = run_baseline(QUESTION, RunConfig(), backend2, tools2)
    assert speculative.trajectory.final_answer == base.trajectory.final_answer == ANSWER
    assert all(s.provenance is Provenance.BASE for s in base.trajectory.steps)
    assert backend2.count(Role.LLM, GenerationMode.WITH_REASONING) == 10
    assert backend2.count(Role.SLM) == 0 and backend2.count(Role.CRITIC) == 0


def test_wall_clock_composition():
    backend, tools, _ = _setup()
    speculative = run_task(QUESTION, RunConfig(), backend, tools)
    base = run_baseline(QUESTION, RunConfig(), *_setup()[:2])
    draft = max(SLM_MS, LLM_DRAFT_MS)
    accepted_tool_steps, rejected = 7, 2  # the final Finish has no tool cost
    expected = accepted_tool_steps * (draft + CRITIC_MS + TOOL_MS) + (draft + CRITIC_MS)
    expected += rejected * (draft + CRITIC_MS + BASE_MS + TOOL_MS)
    assert speculative.wall_ms == expected == 73_000
    assert base.wall_ms == 9 * (BASE_MS + TOOL_MS) + BASE_MS == 118_000
    assert speculative.wall_ms < base.wall_ms


def test_all_rejected_when_critic_says_no():
    backend, tools, _ = _setup(reject_steps=range(10), p_reject=1e-9)
    report = run_task(QUESTION, RunConfig(), backend, tools)
    assert report.intervention_rate == 1.0
    assert backend.count(Role.LLM, GenerationMode.WITH_REASONING) == 10
    assert report.trajectory.final_answer == ANSWER


def test_tau_moves_the_decision():
    # critic odds at accepted steps are ln 9 ~ 2.197
    backend, tools, _ = _setup()
    report = run_task(QUESTION, RunConfig(tau=2.3), backend, tools)
    assert report.intervention_rate == 1.0


def test_prefetch_discards_rejected_tool_calls():
    backend, tools, fixtures = _setup()
    report = run_task(QUESTION, RunConfig(prefetch=True), backend, tools)
    steps = report.trajectory.steps
    discarded = [i for i, s in enumerate(steps) if s.discarded_action is not None]
    assert discarded == [4, 8]
    assert report.trajectory.final_answer == ANSWER
    # accepted steps overlap the critic with the tool call
    assert steps[0].timing.wall_step_ms == max(SLM_MS, LLM_DRAFT_MS) + max(CRITIC_MS, TOOL_MS)
    assert report.wall_ms < run_task(QUESTION, RunConfig(), *_setup()[:2]).wall_ms
    # the looping drafts repeat earlier searches, so their prefetches are cache hits
    assert [steps[i].discarded_action for i in discarded] == [PLAN[4].slm, PLAN[8].slm]
    assert tools.hits == 2 and len(fixtures.calls) == 9


def test_always_accept_and_always_reject():
    backend, tools, _ = _setup()
    acc = run_task(QUESTION, RunConfig(verifier_policy="always_accept"), backend, tools)
    assert acc.fallback_count == 0
    assert backend.count(Role.CRITIC) == 0 and backend.count(Role.LLM, GenerationMode.WITH_REASONING) == 0
    backend, tools, _ = _setup()
    rej = run_task(QUESTION, RunConfig(verifier_policy="always_reject"), backend, tools)
    assert rej.intervention_rate == 1.0
    assert rej.trajectory.final_answer == ANSWER


def test_critic_failure_counts_as_rejection():
    script = ten_step_scenario()
    entries = {k: v for k, v in script.entries.items() if not (k[0] is Role.CRITIC and k[1] == 2)}
    backend = ScriptedBackend(type(script)(entries, script.question, script.task_id))
    report = run_task(QUESTION, RunConfig(), backend, _setup()[1])
    assert report.trajectory.steps[2].provenance is Provenance.FALLBACK
    assert report.trajectory.steps[2].verdict.policy == "critic_error"


def test_both_drafts_failing_falls_back():
    b = ScenarioBuilder(QUESTION)
    b.llm_reasoning(0, scripted_response(Action.finish("x"), "think", latency_ms=10))
    report = run_task(QUESTION, RunConfig(), ScriptedBackend(b.build()), _setup()[1])
    s = report.trajectory.steps[0]
    assert s.provenance is Provenance.FALLBACK and s.verdict.policy == "no_draft"
    assert report.trajectory.final_answer == "x"


def test_step_budget():
    backend, tools, _ = _setup()
    report = run_task(QUESTION, RunConfig(max_steps=3), backend, tools)
    assert report.status == "step_budget_exhausted"
    assert report.trajectory.final_answer is None and report.step_count == 3


@pytest.mark.parametrize("policy, limit", [("exact", 0), ("edit_distance", 5), ("edit_distance", 1000)])
def test_matching_policies(policy, limit):
    backend, tools, _ = _setup()
    report = run_task(QUESTION, RunConfig(verifier_policy=policy, edit_limit=limit), backend, tools)
    assert backend.count(Role.CRITIC) == 0
    assert backend.count(Role.LLM, GenerationMode.WITH_REASONING) == report.step_count
    for i, s in enumerate(report.trajectory.steps):
        base = render_action(PLAN[i].base)
        if s.provenance is Provenance.FALLBACK:
            assert s.action == PLAN[i].base
            assert -s.verdict.score > limit
        else:
            assert -s.verdict.score <= limit
            assert s.verdict.score == -float(levenshtein(render_action(s.action), base))
    if limit == 1000:
        assert report.fallback_count == 0
    assert report.trajectory.final_answer == ANSWER


def test_exact_matching_is_never_faster_than_base():
    backend, tools, _ = _setup()
    report = run_task(QUESTION, RunConfig(verifier_policy="exact"), backend, tools)
    for s in report.trajectory.steps:
        assert s.timing.wall_step_ms >= s.timing.fallback_reasoning_ms


def test_runs_are_byte_identical():
    cfg = RunConfig(seed=3)
    a = serialize_trace(run_task(QUESTION, cfg, *_setup()[:2], task_id="t").trajectory)
    b = serialize_trace(run_task(QUESTION, cfg, *_setup()[:2], task_id="t").trajectory)
    assert a == b


def test_trace_round_trip_of_real_run():
    traj = run_task(QUESTION, RunConfig(prefetch=True), *_setup()[:2]).trajectory
    text = serialize_trace(traj)
    assert parse_trace(text) == traj
    header = json.loads(text.splitlines()[0])
    assert header["record"] == "header" and header["step_count"] == 10


@settings(max_examples=100, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
@given(trajectories())
def test_trace_round_trip_generated(traj):
    text = serialize_trace(traj)
    assert parse_trace(text) == traj
    assert serialize_trace(parse_trace(text)) == text


def test_trace_errors_point_at_records():
    traj = run_task(QUESTION, RunConfig(), *_setup()[:2]).trajectory
    lines = serialize_trace(traj).splitlines()
    with pytest.raises(TraceParseError) as info:
        parse_trace("\n".join(lines[1:]))
    assert info.value.record == 0 and "header" in str(info.value)
    with pytest.raises(TraceParseError) as info:
        parse_trace("\n".join(lines[:3] + ["{not json"]))
    assert info.value.record == 3
    with pytest.raises(TraceParseError):
        parse_trace("")
    with pytest.raises(TraceParseError):
        parse_trace("\n".join(lines[:5]))  # step_count mismatch


def test_arun_many_keeps_order():
    jobs = [Job(QUESTION, *_setup()[:2], task_id=f"t{i}") for i in range(4)]
    reports = asyncio.run(arun_many(jobs, RunConfig(), parallel=2))
    assert [r.trajectory.task_id for r in reports] == ["t0", "t1", "t2", "t3"]
    assert all(r.intervention_rate == 0.2 for r in reports)
    with pytest.raises(ValueError):
        asyncio.run(arun_many(jobs, RunConfig(), parallel=0))


def test_config_validation_and_digest():
    with pytest.raises(ValueError):
        RunConfig(verifier_policy="vibes")
    with pytest.raises(ValueError):
        RunConfig(seed=2**64)
    assert RunConfig().digest() == RunConfig().digest() != RunConfig(tau=1.0).digest()


def test_missing_base_response_is_unavailable():
    b = ScenarioBuilder(QUESTION)
    b.slm(0, scripted_response(Action.search("q"), latency_ms=1))
    b.critic(0, critic_distribution(0.1, 0.9))
    with pytest.raises(BackendUnavailable):
        run_task(QUESTION, RunConfig(), ScriptedBackend(b.build()), _setup()[1])
