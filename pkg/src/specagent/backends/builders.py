"""Helpers for writing scenario scripts by hand or from generator scripts."""

from __future__ import annotations

import math
import re
from typing import Optional, Sequence, Union

from ..core import Action, GenerationMode, Role, render_action
from .base import BackendResponse, NextTokenDistribution
from .scenario import ScenarioScript

_PIECES = re.compile(r"\s*\S+|\s+")


def tokenize(text: str) -> tuple[str, ...]:
    """Whitespace-attached word pieces whose concatenation is exactly ``text``."""
    return tuple(_PIECES.findall(text))


def scripted_response(
    action: Union[Action, str],
    reasoning: Optional[str] = None,
    *,
    latency_ms: int = 0,
    reasoning_logprob: float = -0.5,
    action_logprob: Union[float, Sequence[float]] = -0.1,
    with_logprobs: bool = True,
) -> BackendResponse:
    """A response whose token list reproduces the text, so reasoning and action
    tokens can be told apart. ``action_logprob`` may be a per-token sequence."""
    action_text = render_action(action) if isinstance(action, Action) else action
    head = f"<think>{reasoning}</think>\n" if reasoning else ""
    head_tokens = tokenize(head)
    action_tokens = tokenize(action_text)
    tokens = head_tokens + action_tokens
    if not with_logprobs:
        return BackendResponse(head + action_text, tokens, (), latency_ms=latency_ms)
    if isinstance(action_logprob, (int, float)):
        a_lps = (float(action_logprob),) * len(action_tokens)
    else:
        a_lps = tuple(float(x) for x in action_logprob)
        if len(a_lps) != len(action_tokens):
            raise ValueError(f"need {len(action_tokens)} action logprobs, got {len(a_lps)}")
    lps = (float(reasoning_logprob),) * len(head_tokens) + a_lps
    return BackendResponse(head + action_text, tokens, lps, latency_ms=latency_ms)


def critic_distribution(p_yes: float, p_no: float, k: int = 20, latency_ms: int = 0) -> NextTokenDistribution:
    """Top-k distribution with the given Yes/No mass; the remainder is spread
    evenly over ``k - 2`` filler tokens."""
    if k < 2 or p_yes <= 0 or p_no <= 0 or p_yes + p_no > 1 + 1e-12:
        raise ValueError("need k >= 2 and positive p_yes, p_no summing to at most 1")
    filler = max((1.0 - p_yes - p_no) / (k - 2), 1e-12) if k > 2 else 0.0
    pairs = [("Yes", math.log(p_yes)), ("No", math.log(p_no))]
    pairs += [(f"<f{i:02d}>", math.log(filler)) for i in range(k - 2)]
    return NextTokenDistribution.from_pairs(pairs, latency_ms)


class ScenarioBuilder:
    def __init__(self, question: Optional[str] = None, task_id: Optional[str] = None):
        self.question = question
        self.task_id = task_id
        self.entries: dict = {}

    def _put(self, key, value):
        if key in self.entries:
            raise ValueError(f"duplicate scripted key {key}")
        self.entries[key] = value
        return self

    def slm(self, step: int, response: BackendResponse) -> "ScenarioBuilder":
        return self._put((Role.SLM, step, GenerationMode.WITH_REASONING), response)

    def llm_action_only(self, step: int, response: BackendResponse) -> "ScenarioBuilder":
        return self._put((Role.LLM, step, GenerationMode.ACTION_ONLY), response)

    def llm_reasoning(self, step: int, response: BackendResponse) -> "ScenarioBuilder":
        return self._put((Role.LLM, step, GenerationMode.WITH_REASONING), response)

    def critic(self, step: int, dist: NextTokenDistribution) -> "ScenarioBuilder":
        return self._put((Role.CRITIC, step, None), dist)

    def build(self) -> ScenarioScript:
        return ScenarioScript(dict(self.entries), self.question, self.task_id)
