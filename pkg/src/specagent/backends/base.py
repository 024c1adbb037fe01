"""Backend contract shared by the scripted and HTTP implementations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol, Sequence

from ..core import GenerationMode, Role


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


MASS_SLACK = 1e-3


@dataclass(frozen=True)
class DecodingParams:
    max_tokens: int = 2048
    temperature: Optional[float] = None
    top_p: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")


@dataclass(frozen=True)
class BackendResponse:
    text: str
    tokens: tuple[str, ...] = ()
    token_logprobs: tuple[float, ...] = ()
    finish_reason: FinishReason = FinishReason.STOP
    latency_ms: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "token_logprobs", tuple(float(x) for x in self.token_logprobs))
        object.__setattr__(self, "finish_reason", FinishReason(self.finish_reason))
        if self.token_logprobs and len(self.tokens) != len(self.token_logprobs):
            raise ValueError("tokens and token_logprobs must have equal length")
        if any(lp > 0 for lp in self.token_logprobs):
            raise ValueError("log-probabilities must be <= 0")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


@dataclass(frozen=True)
class NextTokenDistribution:
    """Top-k next-token candidates, sorted by descending log-probability."""

    entries: tuple[tuple[str, float], ...]
    latency_ms: int = 0

    def __post_init__(self):
        entries = tuple((str(t), float(lp)) for t, lp in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValueError("distribution needs at least one entry")
        lps = [lp for _, lp in entries]
        if any(lp > 0 for lp in lps):
            raise ValueError("log-probabilities must be <= 0")
        if any(a < b for a, b in zip(lps, lps[1:])):
            raise ValueError("entries must be sorted by non-increasing logprob")
        # reported logprobs are rounded, so allow a little slack above 1
        if math.fsum(math.exp(lp) for lp in lps) > 1 + MASS_SLACK:
            raise ValueError("probability mass exceeds 1")

    @property
    def k(self) -> int:
        return len(self.entries)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, float]], latency_ms: int = 0) -> "NextTokenDistribution":
        """Build from unsorted pairs; ties keep their input order."""
        return cls(tuple(sorted(pairs, key=lambda e: -e[1])), latency_ms)


class Backend(Protocol):
    """What the orchestrator needs from a model provider.

    ``step`` identifies the agent step a call belongs to. Live endpoints ignore
    it; the scripted backend uses it as part of its lookup key.
    """

    async def generate(
        self,
        role: Role,
        context: str,
        mode: GenerationMode,
        params: DecodingParams,
        *,
        step: int = 0,
    ) -> BackendResponse: ...

    async def judge_next_token(
        self, role: Role, prompt: str, k: int = 20, *, step: int = 0
    ) -> NextTokenDistribution: ...


def check_judge_k(k: int) -> None:
    if k < 20:
        raise ValueError(f"judge_next_token needs k >= 20, got {k}")
