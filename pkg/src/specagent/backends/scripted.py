from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

from ..core import GenerationMode, Role
from ..errors import InsufficientTopK, MalformedResponse
from .base import BackendResponse, DecodingParams, NextTokenDistribution, check_judge_k
from .scenario import ScenarioScript


@dataclass(frozen=True)
class CallRecord:
    role: Role
    step: int
    mode: Optional[GenerationMode]
    kind: str  # "generate" | "judge"


class ScriptedBackend:
    """Deterministic backend that replays a :class:`ScenarioScript`.

    Every call is looked up by ``(role, step, mode)``; a missing entry raises
    :class:`MalformedResponse`. All calls are appended to ``calls`` so tests can
    assert on exactly which model work happened.
    """

    def __init__(self, script: ScenarioScript):
        self.script = script
        self.calls: list[CallRecord] = []
        self._lock = threading.Lock()

    def _record(self, rec: CallRecord) -> None:
        with self._lock:
            self.calls.append(rec)

    def count(self, role: Role, mode: Optional[GenerationMode] = None, kind: Optional[str] = None) -> int:
        with self._lock:
            return sum(
                1
                for c in self.calls
                if c.role is Role(role) and (mode is None or c.mode is GenerationMode(mode)) and (kind is None or c.kind == kind)
            )

    async def generate(
        self,
        role: Role,
        context: str,
        mode: GenerationMode,
        params: DecodingParams,
        *,
        step: int = 0,
    ) -> BackendResponse:
        if not context:
            raise ValueError("context must be non-empty")
        role, mode = Role(role), GenerationMode(mode)
        self._record(CallRecord(role, step, mode, "generate"))
        value = self.script.lookup(role, step, mode)
        if not isinstance(value, BackendResponse):
            raise MalformedResponse(f"no scripted response for ({role.value}, {step}, {mode.value})")
        return value

    async def judge_next_token(
        self, role: Role, prompt: str, k: int = 20, *, step: int = 0
    ) -> NextTokenDistribution:
        check_judge_k(k)
        role = Role(role)
        self._record(CallRecord(role, step, None, "judge"))
        value = self.script.lookup(role, step, None)
        if value is None:
            value = self.script.lookup(role, step, GenerationMode.ACTION_ONLY)
        if not isinstance(value, NextTokenDistribution):
            raise MalformedResponse(f"no scripted distribution for ({role.value}, {step})")
        if value.k < k:
            raise InsufficientTopK(k, value.k)
        return NextTokenDistribution(value.entries[:k], value.latency_ms)
