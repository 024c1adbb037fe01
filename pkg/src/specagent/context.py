"""Accumulated agent context and the prompts rendered from it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .tools import truncate

AGENT_INSTRUCTIONS = """You are a deep research agent. Answer the user's question by alternating reasoning and tool use.
Think inside <think>...</think> when reasoning is allowed, then emit exactly one action on its own line:
  search{query="..."}
  visit{url="...",instruction="..."}
  finish{answer="..."}
  tool{name="...",args={key="value"}}
Escape backslashes and double quotes inside values with a backslash."""


@dataclass(frozen=True)
class ContextEntry:
    action_text: str
    observation: str
    reasoning: Optional[str] = None


@dataclass(frozen=True)
class AgentState:
    """Immutable snapshot of what the agent has seen so far."""

    question: str
    entries: tuple[ContextEntry, ...] = ()
    observation_cap: int = 8192

    @property
    def step_index(self) -> int:
        return len(self.entries)

    def append(self, action_text: str, observation: str, reasoning: Optional[str] = None) -> "AgentState":
        entry = ContextEntry(action_text, truncate(observation, self.observation_cap), reasoning)
        return AgentState(self.question, self.entries + (entry,), self.observation_cap)


def render_steps(entries, start: int = 0) -> str:
    blocks = []
    for offset, e in enumerate(entries):
        lines = [f"### Step {start + offset + 1}"]
        if e.reasoning:
            lines.append(f"Reasoning: {e.reasoning}")
        lines.append(f"Action: {e.action_text}")
        lines.append(f"Observation: {e.observation}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def render_agent_prompt(state: AgentState) -> str:
    parts = [AGENT_INSTRUCTIONS, f"Question: {state.question}"]
    if state.entries:
        parts.append("History:\n" + render_steps(state.entries))
    parts.append(f"Now produce step {state.step_index + 1}.")
    return "\n\n".join(parts)
