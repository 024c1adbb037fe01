"""The speculate-verify ReAct loop, the full-reasoning baseline, and trace I/O.

Step latency is composed from the latencies each component reports, following
the concurrency structure of the step: the two drafts overlap, verification
follows selection, and (with prefetch) the draft's tool call overlaps
verification. Scripted components report scripted latencies, so timings of a
scripted run are exact and replayable.
"""

from __future__ import annotations

import asyncio
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .backends.base import Backend, BackendResponse, DecodingParams
from .context import AgentState, render_agent_prompt
from .core import (
    Action,
    ActionKind,
    DraftRecord,
    DraftSource,
    GenerationMode,
    Observation,
    Provenance,
    ReasoningTrace,
    Role,
    Step,
    TimingBreakdown,
    Trajectory,
    Verdict,
    render_action,
)
from .errors import BackendError, BackendUnavailable, BothDraftsFailed, TraceParseError
from .speculation import (
    Draft,
    DraftPair,
    SelectionPolicy,
    draft_pair,
    select_draft,
    split_response,
)
from .tools import ToolExecutor
from .verification import (
    DEFAULT_EPSILON,
    EditDistance,
    Exact,
    VariantSets,
    match_verdict,
    semantic_verify,
)

logger = logging.getLogger(__name__)

TRACE_VERSION = 1
POLICIES = ("semantic", "exact", "edit_distance", "always_accept", "always_reject")


@dataclass(frozen=True)
class RunConfig:
    tau: float = 0.0
    tau_think: int = 512
    max_steps: int = 30
    verifier_policy: str = "semantic"
    edit_limit: int = 0
    prefetch: bool = False
    seed: int = 0
    window: int = 8
    observation_cap: int = 8192
    max_tokens: int = 2048
    temperature: Optional[float] = None
    judge_k: int = 20
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.tau_think <= 0:
            raise ValueError("tau_think must be positive")
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.verifier_policy not in POLICIES:
            raise ValueError(f"verifier_policy must be one of {POLICIES}")
        if self.edit_limit < 0:
            raise ValueError("edit_limit must be non-negative")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def decoding(self) -> DecodingParams:
        return DecodingParams(max_tokens=self.max_tokens, temperature=self.temperature, seed=self.seed)


@dataclass(frozen=True)
class RunReport:
    trajectory: Trajectory
    accept_count: int
    fallback_count: int
    step_count: int
    intervention_rate: float
    wall_ms: int
    status: str = "finished"  # or "step_budget_exhausted"

    @classmethod
    def from_trajectory(cls, trajectory: Trajectory) -> "RunReport":
        steps = trajectory.steps
        fallbacks = sum(1 for s in steps if s.provenance is Provenance.FALLBACK)
        accepts = sum(1 for s in steps if s.provenance in (Provenance.SYSTEM2_DRAFT, Provenance.SYSTEM1_DRAFT))
        return cls(
            trajectory=trajectory,
            accept_count=accepts,
            fallback_count=fallbacks,
            step_count=len(steps),
            intervention_rate=fallbacks / len(steps) if steps else 0.0,
            wall_ms=sum(s.timing.wall_step_ms for s in steps),
            status="finished" if trajectory.finished else "step_budget_exhausted",
        )


def default_task_id(question: str) -> str:
    return "task-" + hashlib.sha256(question.encode()).hexdigest()[:10]


# -- step execution --------------------------------------------------------------


def _provenance_of(draft: Draft) -> Provenance:
    return Provenance.SYSTEM2_DRAFT if draft.source is DraftSource.SYSTEM2 else Provenance.SYSTEM1_DRAFT


async def _full_reasoning(
    backend: Backend, state: AgentState, config: RunConfig
) -> tuple[Action, Optional[ReasoningTrace], tuple[float, ...], BackendResponse]:
    try:
        raw = await backend.generate(
            Role.LLM, render_agent_prompt(state), GenerationMode.WITH_REASONING, config.decoding(), step=state.step_index
        )
        action, reasoning, lps = split_response(raw, keep_reasoning=True)
    except BackendError as exc:
        raise BackendUnavailable(f"base model failed at step {state.step_index}: {exc}") from exc
    return action, reasoning, lps, raw


def _constant_verdict(accept: bool, policy: str) -> Verdict:
    return Verdict(None, None, 0.0, accept, -math.inf if accept else math.inf, policy)


NO_DRAFT_VERDICT = Verdict(None, None, -math.inf, False, math.inf, "no_draft")


async def _verify(backend, state, draft: Draft, config: RunConfig) -> tuple[Verdict, int]:
    policy = config.verifier_policy
    if policy == "always_accept":
        return _constant_verdict(True, policy), 0
    if policy == "always_reject":
        return _constant_verdict(False, policy), 0
    try:
        return await semantic_verify(
            backend,
            state,
            draft.reasoning,
            draft.action,
            config.tau,
            step=state.step_index,
            window=config.window,
            k=config.judge_k,
            epsilon=config.epsilon,
        )
    except BackendError as exc:
        logger.warning("critic failed at step %d, treating draft as rejected: %s", state.step_index, exc)
        return Verdict(None, None, -math.inf, False, math.inf, "critic_error"), 0


async def step(state: AgentState, config: RunConfig, backend: Backend, tools: ToolExecutor) -> Step:
    """Draft, select, verify, then execute the draft or fall back to full reasoning."""
    if state.entries and state.entries[-1].action_text.startswith(ActionKind.FINISH.value + "{"):
        raise ValueError("cannot step past a Finish action")
    if config.verifier_policy in ("exact", "edit_distance"):
        return await _matching_step(state, config, backend, tools)

    selected: Optional[Draft] = None
    try:
        pair = await draft_pair(backend, state, config.decoding())
        selected = select_draft(pair, SelectionPolicy(config.tau_think))
    except BothDraftsFailed as exc:
        pair = exc.pair
    records = pair.records()
    slm_ms, llm_ms = records[0].latency_ms, records[1].latency_ms

    if selected is None:
        verdict, verify_ms = NO_DRAFT_VERDICT, 0
        prefetch = None
    else:
        prefetch = None
        if config.prefetch:
            prefetch = asyncio.ensure_future(tools.observe(selected.action))
            await asyncio.sleep(0)  # let the prefetch start before the critic call
        verdict, verify_ms = await _verify(backend, state, selected, config)

    if verdict.accepted:
        obs = await prefetch if prefetch is not None else await tools.observe(selected.action)
        overlap = max(verify_ms, obs.latency) if prefetch is not None else verify_ms + obs.latency
        timing = TimingBreakdown(slm_ms, llm_ms, verify_ms, obs.latency, 0, pair.wall_ms + overlap)
        return Step(
            action=selected.action,
            observation=obs,
            provenance=_provenance_of(selected),
            timing=timing,
            reasoning=selected.reasoning,
            verdict=verdict,
            action_logprobs=selected.action_logprobs,
            drafts=records,
        )

    discarded = None
    if prefetch is not None:
        if not prefetch.done():
            prefetch.cancel()
        discarded = selected.action
    action, reasoning, lps, raw = await _full_reasoning(backend, state, config)
    obs = await tools.observe(action)
    timing = TimingBreakdown(
        slm_ms,
        llm_ms,
        verify_ms,
        obs.latency,
        raw.latency_ms,
        pair.wall_ms + verify_ms + raw.latency_ms + obs.latency,
    )
    return Step(
        action=action,
        observation=obs,
        provenance=Provenance.FALLBACK,
        timing=timing,
        reasoning=reasoning,
        verdict=verdict,
        action_logprobs=lps,
        drafts=records,
        discarded_action=discarded,
    )


async def _matching_step(state: AgentState, config: RunConfig, backend: Backend, tools: ToolExecutor) -> Step:
    """Prior-work paradigm: execute the draft while the base model reasons, then compare actions."""
    policy = Exact() if config.verifier_policy == "exact" else EditDistance(config.edit_limit)

    async def drafted():
        try:
            pair = await draft_pair(backend, state, config.decoding())
        except BothDraftsFailed as exc:
            return exc.pair, None, None
        selected = select_draft(pair, SelectionPolicy(config.tau_think))
        return pair, selected, await tools.observe(selected.action)

    (pair, selected, draft_obs), base = await asyncio.gather(drafted(), _full_reasoning(backend, state, config))
    base_action, base_reasoning, base_lps, raw = base
    records = pair.records()
    slm_ms, llm_ms = records[0].latency_ms, records[1].latency_ms

    if selected is None:
        obs = await tools.observe(base_action)
        timing = TimingBreakdown(
            slm_ms, llm_ms, 0, obs.latency, raw.latency_ms, max(pair.wall_ms, raw.latency_ms) + obs.latency
        )
        return Step(base_action, obs, Provenance.FALLBACK, timing, base_reasoning, NO_DRAFT_VERDICT, base_lps, records)

    verdict = match_verdict(selected.action, base_action, policy)
    speculative_ms = max(pair.wall_ms + draft_obs.latency, raw.latency_ms)
    if verdict.accepted:
        timing = TimingBreakdown(slm_ms, llm_ms, 0, draft_obs.latency, raw.latency_ms, speculative_ms)
        return Step(
            selected.action,
            draft_obs,
            _provenance_of(selected),
            timing,
            selected.reasoning,
            verdict,
            selected.action_logprobs,
            records,
        )
    obs = await tools.observe(base_action)
    timing = TimingBreakdown(
        slm_ms, llm_ms, 0, draft_obs.latency + obs.latency, raw.latency_ms, speculative_ms + obs.latency
    )
    return Step(
        base_action,
        obs,
        Provenance.FALLBACK,
        timing,
        base_reasoning,
        verdict,
        base_lps,
        records,
        discarded_action=selected.action,
    )


async def baseline_step(state: AgentState, config: RunConfig, backend: Backend, tools: ToolExecutor) -> Step:
    action, reasoning, lps, raw = await _full_reasoning(backend, state, config)
    obs = await tools.observe(action)
    timing = TimingBreakdown(0, 0, 0, obs.latency, raw.latency_ms, raw.latency_ms + obs.latency)
    return Step(action, obs, Provenance.BASE, timing, reasoning, None, lps)


# -- loops -------------------------------------------------------------------------


def _advance(state: AgentState, s: Step) -> AgentState:
    reasoning = s.reasoning.text if s.reasoning is not None else None
    return state.append(render_action(s.action), s.observation.payload, reasoning)


async def _loop(stepper, question, config, backend, tools, task_id) -> RunReport:
    if not question:
        raise ValueError("question must be non-empty")
    state = AgentState(question, observation_cap=config.observation_cap)
    steps: list[Step] = []
    for _ in range(config.max_steps):
        s = await stepper(state, config, backend, tools)
        steps.append(s)
        if s.action.kind is ActionKind.FINISH:
            break
        state = _advance(state, s)
    final = steps[-1].action.answer if steps and steps[-1].action.kind is ActionKind.FINISH else None
    traj = Trajectory(task_id or default_task_id(question), question, tuple(steps), final, config.digest())
    report = RunReport.from_trajectory(traj)
    if report.status != "finished":
        logger.warning("task %s hit max_steps=%d without finishing", traj.task_id, config.max_steps)
    return report


async def arun_task(question: str, config: RunConfig, backend: Backend, tools: ToolExecutor, task_id: Optional[str] = None) -> RunReport:
    return await _loop(step, question, config, backend, tools, task_id)


async def arun_baseline(question: str, config: RunConfig, backend: Backend, tools: ToolExecutor, task_id: Optional[str] = None) -> RunReport:
    return await _loop(baseline_step, question, config, backend, tools, task_id)


def run_task(question: str, config: RunConfig, backend: Backend, tools: ToolExecutor, task_id: Optional[str] = None) -> RunReport:
    return asyncio.run(arun_task(question, config, backend, tools, task_id))


def run_baseline(question: str, config: RunConfig, backend: Backend, tools: ToolExecutor, task_id: Optional[str] = None) -> RunReport:
    return asyncio.run(arun_baseline(question, config, backend, tools, task_id))


@dataclass(frozen=True)
class Job:
    question: str
    backend: Backend
    tools: ToolExecutor
    task_id: Optional[str] = None


async def arun_many(jobs: Iterable[Job], config: RunConfig, parallel: int = 1, baseline: bool = False) -> list[RunReport]:
    """Run independent tasks with at most ``parallel`` in flight; results keep job order."""
    if parallel < 1:
        raise ValueError("parallel must be >= 1")
    gate = asyncio.Semaphore(parallel)
    runner = arun_baseline if baseline else arun_task

    async def one(job: Job) -> RunReport:
        async with gate:
            return await runner(job.question, config, job.backend, job.tools, job.task_id)

    return list(await asyncio.gather(*(one(j) for j in jobs)))


# -- trace format ------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _reasoning_to_dict(r: Optional[ReasoningTrace]):
    if r is None:
        return None
    return {"text": r.text, "token_count": r.token_count, "token_logprobs": list(r.token_logprobs)}


def _verdict_to_dict(v: Optional[Verdict]):
    if v is None:
        return None
    return {
        "p_acc": v.p_acc,
        "p_rej": v.p_rej,
        "score": v.score,
        "accepted": v.accepted,
        "threshold": v.threshold,
        "policy": v.policy,
    }


def _draft_to_dict(d: DraftRecord) -> dict:
    return {
        "source": d.source.value,
        "action": d.action.to_dict() if d.action is not None else None,
        "reasoning_tokens": d.reasoning_tokens,
        "action_logprobs": list(d.action_logprobs),
        "latency_ms": d.latency_ms,
        "error": d.error,
    }


def step_to_dict(s: Step, index: int) -> dict:
    return {
        "record": "step",
        "index": index,
        "action": s.action.to_dict(),
        "observation": {"kind": s.observation.kind.value, "payload": s.observation.payload, "latency": s.observation.latency},
        "provenance": s.provenance.value,
        "reasoning": _reasoning_to_dict(s.reasoning),
        "verdict": _verdict_to_dict(s.verdict),
        "timing": s.timing.to_dict(),
        "action_logprobs": list(s.action_logprobs),
        "drafts": [_draft_to_dict(d) for d in s.drafts],
        "discarded_action": s.discarded_action.to_dict() if s.discarded_action is not None else None,
    }


def serialize_trace(trajectory: Trajectory) -> str:
    """One JSON header line then one line per step; keys sorted, so output is byte-stable."""
    header = {
        "record": "header",
        "version": TRACE_VERSION,
        "task_id": trajectory.task_id,
        "question": trajectory.question,
        "config_digest": trajectory.config_digest,
        "final_answer": trajectory.final_answer,
        "step_count": len(trajectory.steps),
    }
    lines = [_dumps(header)] + [_dumps(step_to_dict(s, i)) for i, s in enumerate(trajectory.steps)]
    return "\n".join(lines) + "\n"


def _step_from_dict(d: dict) -> Step:
    obs = d["observation"]
    r = d["reasoning"]
    v = d["verdict"]
    return Step(
        action=Action.from_dict(d["action"]),
        observation=Observation(obs["kind"], obs["payload"], obs["latency"]),
        provenance=Provenance(d["provenance"]),
        timing=TimingBreakdown(**d["timing"]),
        reasoning=ReasoningTrace(r["text"], r["token_count"], tuple(r["token_logprobs"])) if r is not None else None,
        verdict=Verdict(v["p_acc"], v["p_rej"], v["score"], v["accepted"], v["threshold"], v["policy"]) if v is not None else None,
        action_logprobs=tuple(d["action_logprobs"]),
        drafts=tuple(
            DraftRecord(
                x["source"],
                Action.from_dict(x["action"]) if x["action"] is not None else None,
                x["reasoning_tokens"],
                tuple(x["action_logprobs"]),
                x["latency_ms"],
                x["error"],
            )
            for x in d["drafts"]
        ),
        discarded_action=Action.from_dict(d["discarded_action"]) if d["discarded_action"] is not None else None,
    )


def parse_trace(text: str) -> Trajectory:
    # split on "\n" only: str.splitlines would also break on U+0085/U+2028 inside JSON strings
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise TraceParseError("empty trace, header missing", 0)
    records = []
    for i, line in enumerate(lines):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON: {exc}", i) from None
    header = records[0]
    if not isinstance(header, dict) or header.get("record") != "header":
        raise TraceParseError("header missing", 0)
    if header.get("version") != TRACE_VERSION:
        raise TraceParseError(f"unsupported trace version {header.get('version')!r}", 0)
    steps = []
    for i, rec in enumerate(records[1:], 1):
        if not isinstance(rec, dict) or rec.get("record") != "step":
            raise TraceParseError("expected a step record", i)
        if rec.get("index") != i - 1:
            raise TraceParseError(f"step index {rec.get('index')!r} out of order", i)
        try:
            steps.append(_step_from_dict(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceParseError(f"bad step record: {exc!r}", i) from None
    if header.get("step_count", len(steps)) != len(steps):
        raise TraceParseError(f"header announces {header['step_count']} steps, found {len(steps)}", 0)
    try:
        return Trajectory(
            header["task_id"], header["question"], tuple(steps), header.get("final_answer"), header.get("config_digest", "")
        )
    except (KeyError, ValueError) as exc:
        raise TraceParseError(f"bad trajectory: {exc!r}", 0) from None
