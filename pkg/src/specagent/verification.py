"""Critic-based semantic verification plus the matching baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Union

from .backends.base import Backend, NextTokenDistribution
from .context import AgentState, render_steps
from .core import Action, ReasoningTrace, Role, Verdict, render_action

AUDIT_TEMPLATE_VERSION = 1
DEFAULT_EPSILON = 1e-9
DEFAULT_WINDOW = 8


def audit_template() -> str:
    text = resources.files("specagent.data").joinpath(f"audit_prompt_v{AUDIT_TEMPLATE_VERSION}.txt").read_text("utf-8")
    return text.rstrip("\n")


@dataclass(frozen=True)
class VariantSets:
    """Surface forms counted as Yes / No after strip + casefold."""

    affirmative: frozenset = frozenset({"yes"})
    negative: frozenset = frozenset({"no"})

    def __post_init__(self):
        aff = frozenset(t.strip().casefold() for t in self.affirmative)
        neg = frozenset(t.strip().casefold() for t in self.negative)
        if not aff or not neg:
            raise ValueError("variant sets must be non-empty")
        if aff & neg:
            raise ValueError(f"variant sets overlap on {sorted(aff & neg)}")
        object.__setattr__(self, "affirmative", aff)
        object.__setattr__(self, "negative", neg)


def build_audit_prompt(
    state: AgentState,
    reasoning: Optional[ReasoningTrace],
    action: Action,
    window: int = DEFAULT_WINDOW,
) -> str:
    if window <= 0:
        raise ValueError("window must be positive")
    recent = state.entries[-window:]
    first = len(state.entries) - len(recent)
    parts = [audit_template(), f"User's Goal: {state.question}"]
    parts.append("Recent steps (context):\n" + (render_steps(recent, start=first) if recent else "(none yet)"))
    if reasoning is not None and reasoning.text.strip():
        parts.append("Draft reasoning:\n" + reasoning.text.strip())
    parts.append("Proposed action:\n" + render_action(action))
    return "\n\n".join(parts)


def aggregate_yes_no(
    dist: NextTokenDistribution,
    variants: VariantSets = VariantSets(),
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[float, float]:
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    acc = [math.exp(lp) for tok, lp in dist.entries if tok.strip().casefold() in variants.affirmative]
    rej = [math.exp(lp) for tok, lp in dist.entries if tok.strip().casefold() in variants.negative]
    return max(epsilon, math.fsum(acc)), max(epsilon, math.fsum(rej))


def verifier_score(p_acc: float, p_rej: float) -> float:
    """Log-odds of acceptance, ``ln p_acc - ln p_rej``."""
    if not (p_acc > 0 and p_rej > 0):
        raise ValueError(f"probabilities must be positive, got ({p_acc}, {p_rej})")
    return math.log(p_acc) - math.log(p_rej)


def decide(score: float, tau: float) -> bool:
    return score >= tau


async def semantic_verify(
    backend: Backend,
    state: AgentState,
    reasoning: Optional[ReasoningTrace],
    action: Action,
    tau: float,
    *,
    step: int = 0,
    window: int = DEFAULT_WINDOW,
    k: int = 20,
    variants: VariantSets = VariantSets(),
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[Verdict, int]:
    """Ask the critic, returning the verdict and the critic call latency."""
    prompt = build_audit_prompt(state, reasoning, action, window)
    dist = await backend.judge_next_token(Role.CRITIC, prompt, k, step=step)
    p_acc, p_rej = aggregate_yes_no(dist, variants, epsilon)
    score = verifier_score(p_acc, p_rej)
    return Verdict(p_acc, p_rej, score, decide(score, tau), tau, "semantic"), dist.latency_ms


# -- matching baselines ----------------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance, two-row DP."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class Exact:
    pass


@dataclass(frozen=True)
class EditDistance:
    limit: int

    def __post_init__(self):
        if self.limit < 0:
            raise ValueError("limit must be non-negative")


MatchPolicy = Union[Exact, EditDistance]


def action_distance(draft: Action, reference: Action) -> int:
    return levenshtein(render_action(draft), render_action(reference))


def match_verify(draft: Action, reference: Action, policy: MatchPolicy) -> bool:
    if isinstance(policy, Exact):
        return render_action(draft) == render_action(reference)
    return action_distance(draft, reference) <= policy.limit


def match_verdict(draft: Action, reference: Action, policy: MatchPolicy) -> Verdict:
    """Verdict for a matching policy: score is the negated edit distance."""
    limit = 0 if isinstance(policy, Exact) else policy.limit
    name = "exact" if isinstance(policy, Exact) else f"edit_distance({limit})"
    score = -float(action_distance(draft, reference))
    return Verdict(None, None, score, match_verify(draft, reference, policy), -float(limit), name)
