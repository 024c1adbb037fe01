"""Heterogeneous drafting and action-aware draft selection.

Each step issues two drafts concurrently:

* System 2: the small model, allowed to reason before acting.
* System 1: the large model, asked for an action with no reasoning.

Selection routes on the small model's action kind: Search keeps the small-model
draft, Visit takes the large-model draft unless the small model reasoned for
more than ``tau_think`` tokens. Finish and OtherTool keep the small-model draft.
"""

from __future__ import annotations

import asyncio
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .backends.base import Backend, BackendResponse, DecodingParams
from .context import AgentState, render_agent_prompt
from .core import Action, ActionKind, DraftRecord, DraftSource, GenerationMode, ReasoningTrace, Role, parse_action
from .errors import BackendError, BothDraftsFailed, MalformedResponse

DEFAULT_TAU_THINK = 512

_THINK_TAGS = re.compile(r"</?think>")


@dataclass(frozen=True)
class Draft:
    source: DraftSource
    action: Action
    raw: BackendResponse
    reasoning: Optional[ReasoningTrace] = None
    action_logprobs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.source is DraftSource.SYSTEM1 and self.reasoning is not None:
            raise ValueError("System 1 drafts carry no reasoning")

    @property
    def latency_ms(self) -> int:
        return self.raw.latency_ms

    def record(self) -> DraftRecord:
        return DraftRecord(
            self.source, self.action, reasoning_length(self), self.action_logprobs, self.raw.latency_ms
        )


@dataclass(frozen=True)
class DraftFailure:
    source: DraftSource
    error: str
    latency_ms: int = 0

    def record(self) -> DraftRecord:
        return DraftRecord(self.source, None, 0, (), self.latency_ms, self.error)


DraftOutcome = Union[Draft, DraftFailure]


@dataclass(frozen=True)
class DraftPair:
    system2: DraftOutcome
    system1: DraftOutcome

    @property
    def wall_ms(self) -> int:
        """Both drafts run concurrently, so the pair costs the slower side."""
        return max(self.system2.latency_ms, self.system1.latency_ms)

    def records(self) -> tuple[DraftRecord, DraftRecord]:
        return self.system2.record(), self.system1.record()


@dataclass(frozen=True)
class SelectionPolicy:
    tau_think: int = DEFAULT_TAU_THINK

    def __post_init__(self):
        if self.tau_think <= 0:
            raise ValueError("tau_think must be positive")


def _token_spans(tokens) -> list[tuple[int, int]]:
    spans, pos = [], 0
    for tok in tokens:
        spans.append((pos, pos + len(tok)))
        pos += len(tok)
    return spans


def split_response(raw: BackendResponse, keep_reasoning: bool) -> tuple[Action, Optional[ReasoningTrace], tuple[float, ...]]:
    """Locate the action line in ``raw.text`` and split reasoning from action.

    The action is the last line that parses under the action grammar. Anything
    before it is reasoning (``<think>`` tags stripped). When the token list
    reproduces the text exactly, tokens are assigned to reasoning or action by
    their start offset; otherwise the reasoning length falls back to a
    whitespace word count and no action logprobs are reported.
    """
    text = raw.text
    lines = text.splitlines(keepends=True)
    offsets, pos = [], 0
    for line in lines:
        offsets.append(pos)
        pos += len(line)
    action = None
    for idx in range(len(lines) - 1, -1, -1):
        candidate = _THINK_TAGS.sub("", lines[idx]).strip()
        if not candidate:
            continue
        try:
            action = parse_action(candidate)
        except ValueError:
            continue
        line_start, line_end = offsets[idx], offsets[idx] + len(lines[idx])
        break
    if action is None:
        raise MalformedResponse(f"no parsable action in response: {text[-200:]!r}")

    reasoning_text = _THINK_TAGS.sub("", text[:line_start]).strip()
    aligned = bool(raw.tokens) and "".join(raw.tokens) == text
    action_lps: tuple[float, ...] = ()
    r_tokens: list[int] = []
    if aligned:
        for i, (start, _end) in enumerate(_token_spans(raw.tokens)):
            if start < line_start:
                r_tokens.append(i)
            elif start < line_end and raw.token_logprobs:
                action_lps += (raw.token_logprobs[i],)
    elif raw.token_logprobs and not reasoning_text:
        # tokens cover only the action (e.g. reasoning channel reported separately)
        action_lps = raw.token_logprobs

    reasoning = None
    if keep_reasoning and reasoning_text:
        if aligned:
            lps = tuple(raw.token_logprobs[i] for i in r_tokens) if raw.token_logprobs else ()
            reasoning = ReasoningTrace(reasoning_text, len(r_tokens), lps)
        else:
            reasoning = ReasoningTrace(reasoning_text, len(reasoning_text.split()))
    return action, reasoning, action_lps


def parse_draft(source: DraftSource, raw: BackendResponse) -> Draft:
    action, reasoning, lps = split_response(raw, keep_reasoning=source is DraftSource.SYSTEM2)
    return Draft(source, action, raw, reasoning, lps)


async def _one_draft(
    backend: Backend, source: DraftSource, prompt: str, params: DecodingParams, step: int
) -> DraftOutcome:
    if source is DraftSource.SYSTEM2:
        role, mode = Role.SLM, GenerationMode.WITH_REASONING
    else:
        role, mode = Role.LLM, GenerationMode.ACTION_ONLY
    raw = None
    try:
        raw = await backend.generate(role, prompt, mode, params, step=step)
        return parse_draft(source, raw)
    except (BackendError, ValueError) as exc:
        return DraftFailure(source, f"{type(exc).__name__}: {exc}", raw.latency_ms if raw is not None else 0)


async def draft_pair(
    backend: Backend,
    state: AgentState,
    params: DecodingParams,
    *,
    step: Optional[int] = None,
    slm_params: Optional[DecodingParams] = None,
) -> DraftPair:
    """Issue both drafts concurrently; each side fails independently.

    Raises :class:`BothDraftsFailed` (carrying the pair) when neither side
    yields an action.
    """
    prompt = render_agent_prompt(state)
    if not prompt:
        raise ValueError("state renders to an empty prompt")
    step = state.step_index if step is None else step
    s2, s1 = await asyncio.gather(
        _one_draft(backend, DraftSource.SYSTEM2, prompt, slm_params or params, step),
        _one_draft(backend, DraftSource.SYSTEM1, prompt, params, step),
    )
    pair = DraftPair(s2, s1)
    if isinstance(s2, DraftFailure) and isinstance(s1, DraftFailure):
        err = BothDraftsFailed(f"system2: {s2.error}; system1: {s1.error}")
        err.pair = pair
        raise err
    return pair


def reasoning_length(draft: Draft) -> int:
    return draft.reasoning.token_count if draft.reasoning is not None else 0


def select_draft(pair: DraftPair, policy: SelectionPolicy) -> Draft:
    s2, s1 = pair.system2, pair.system1
    if isinstance(s2, DraftFailure) and isinstance(s1, DraftFailure):
        raise BothDraftsFailed("no draft to select")
    if isinstance(s2, DraftFailure):
        return s1
    if isinstance(s1, DraftFailure):
        return s2
    if s2.action.kind is ActionKind.VISIT and reasoning_length(s2) <= policy.tau_think:
        return s1
    return s2
