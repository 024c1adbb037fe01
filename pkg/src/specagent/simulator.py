"""Discrete-event latency model of the speculate-verify step.

Phases per step (milliseconds): small-model draft ``r_slm`` and large-model
action-only draft ``g_llm`` run concurrently, critic pass ``v`` follows, then
either the draft's tool call ``e_tool`` (accept) or full base-model reasoning
``r_base`` followed by the tool call (reject). With prefetch, the accepted
draft's tool call overlaps the critic pass. The baseline step is
``r_base + e_tool``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonConstantDistribution


@dataclass(frozen=True)
class Latency:
    kind: str  # "constant" | "exponential"
    mean: float

    def __post_init__(self):
        if self.kind not in ("constant", "exponential"):
            raise ValueError(f"unknown latency family {self.kind!r}")
        if self.mean < 0:
            raise ValueError("latency mean must be >= 0")

    @classmethod
    def constant(cls, ms: float) -> "Latency":
        return cls("constant", float(ms))

    @classmethod
    def exponential(cls, mean_ms: float) -> "Latency":
        return cls("exponential", float(mean_ms))

    @classmethod
    def parse(cls, value) -> "Latency":
        """Accept a bare number (constant) or ``{"kind": ..., "mean": ...}``."""
        if isinstance(value, Latency):
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return cls.constant(value)
        if isinstance(value, dict):
            return cls(str(value.get("kind", "constant")), float(value["mean"]))
        raise ValueError(f"cannot read a latency from {value!r}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant" or self.mean == 0:
            return self.mean
        return float(rng.exponential(self.mean))


@dataclass(frozen=True)
class SimParams:
    r_base: Latency
    r_slm: Latency
    g_llm: Latency
    v: Latency
    e_tool: Latency
    accept_prob: float
    steps: int = 1000
    seed: int = 0
    prefetch: bool = False

    def __post_init__(self):
        for name in ("r_base", "r_slm", "g_llm", "v", "e_tool"):
            object.__setattr__(self, name, Latency.parse(getattr(self, name)))
        if not 0 <= self.accept_prob <= 1:
            raise ValueError("accept_prob must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        return cls(**d)


@dataclass(frozen=True)
class SimReport:
    mean_step_ms: float
    total_ms: float
    baseline_total_ms: float
    speedup: float
    step_samples: tuple[float, ...] = field(repr=False, default=())
    accepted_steps: int = 0

    def to_csv(self) -> str:
        return (
            "metric,value\n"
            f"mean_step_ms,{self.mean_step_ms:.3f}\n"
            f"total_ms,{self.total_ms:.3f}\n"
            f"baseline_total_ms,{self.baseline_total_ms:.3f}\n"
            f"baseline_mean_step_ms,{self.baseline_total_ms / max(1, len(self.step_samples)):.3f}\n"
            f"accept_rate,{self.accepted_steps / max(1, len(self.step_samples)):.3f}\n"
            f"speedup,{self.speedup:.3f}\n"
        )


def expected_step_latency(params: SimParams) -> float:
    """Closed-form expected step latency; constant latencies only."""
    lat = [params.r_base, params.r_slm, params.g_llm, params.v, params.e_tool]
    if any(x.kind != "constant" for x in lat):
        raise NonConstantDistribution("closed form requires constant latencies")
    r_base, r_slm, g_llm, v, e_tool = (x.mean for x in lat)
    draft = max(r_slm, g_llm)
    accept = draft + (max(v, e_tool) if params.prefetch else v + e_tool)
    reject = draft + v + r_base + e_tool
    # one multiplication avoids the rounding in (1 - p)
    return reject + params.accept_prob * (accept - reject)


def expected_baseline_step_latency(params: SimParams) -> float:
    if params.r_base.kind != "constant" or params.e_tool.kind != "constant":
        raise NonConstantDistribution("closed form requires constant latencies")
    return params.r_base.mean + params.e_tool.mean


class EventLoop:
    """Minimal discrete-event scheduler on a float millisecond clock."""

    def __init__(self):
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self._cancelled: set[int] = set()

    def schedule(self, delay: float, callback: Callable[[], None]) -> int:
        token = next(self._seq)
        heapq.heappush(self._queue, (self.now + delay, token, callback))
        return token

    def cancel(self, token: int) -> None:
        self._cancelled.add(token)

    def run(self) -> None:
        while self._queue:
            when, token, callback = heapq.heappop(self._queue)
            if token in self._cancelled:
                continue
            self.now = when
            callback()


def _speculative_step(loop: EventLoop, d: dict, accept: bool, prefetch: bool, on_done: Callable[[], None]) -> None:
    pending = {"drafts": 2}
    state = {"verified": False, "tool_done": False, "prefetch_token": None}

    def finish_tool():
        on_done()

    def prefetch_done():
        state["tool_done"] = True
        if state["verified"]:
            on_done()

    def verified():
        state["verified"] = True
        if accept:
            if prefetch:
                if state["tool_done"]:
                    on_done()
            else:
                loop.schedule(d["e_tool"], finish_tool)
        else:
            if state["prefetch_token"] is not None:
                loop.cancel(state["prefetch_token"])
            loop.schedule(d["r_base"], lambda: loop.schedule(d["e_tool"], finish_tool))

    def draft_done():
        pending["drafts"] -= 1
        if pending["drafts"] == 0:
            loop.schedule(d["v"], verified)
            if prefetch:
                state["prefetch_token"] = loop.schedule(d["e_tool"], prefetch_done)

    loop.schedule(d["r_slm"], draft_done)
    loop.schedule(d["g_llm"], draft_done)


def simulate(params: SimParams) -> SimReport:
    """Seeded simulation of ``params.steps`` sequential agent steps.

    Acceptance is stratified: exactly ``round(accept_prob * steps)`` steps
    accept, chosen by a seeded random ranking of the steps. Constant-latency
    runs therefore reproduce :func:`expected_step_latency` exactly whenever
    ``accept_prob * steps`` is an integer, and raising ``accept_prob`` only
    ever adds accepted steps. Every phase latency is drawn for every step
    whichever path is taken, so runs that differ only in ``accept_prob`` share
    their latency draws. The baseline uses its own stream.
    """
    seeds = np.random.SeedSequence(params.seed).spawn(3)
    rng, base_rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
    n_accept = int(math.floor(params.accept_prob * params.steps + 0.5))
    ranking = np.random.default_rng(seeds[2]).permutation(params.steps)
    accept_mask = np.zeros(params.steps, dtype=bool)
    accept_mask[ranking[:n_accept]] = True
    loop = EventLoop()
    samples: list[float] = []
    accepted = 0

    step_start = [0.0]
    remaining = [params.steps]

    def start_next():
        nonlocal accepted
        d = {
            "r_slm": params.r_slm.sample(rng),
            "g_llm": params.g_llm.sample(rng),
            "v": params.v.sample(rng),
            "e_tool": params.e_tool.sample(rng),
            "r_base": params.r_base.sample(rng),
        }
        accept = bool(accept_mask[len(samples)])
        accepted += accept
        step_start[0] = loop.now
        _speculative_step(loop, d, accept, params.prefetch, step_done)

    def step_done():
        samples.append(loop.now - step_start[0])
        remaining[0] -= 1
        if remaining[0] > 0:
            start_next()

    start_next()
    loop.run()
    total = loop.now

    baseline = 0.0
    for _ in range(params.steps):
        baseline += params.r_base.sample(base_rng) + params.e_tool.sample(base_rng)

    speedup = baseline / total if total > 0 else float("inf")
    return SimReport(total / params.steps, total, baseline, speedup, tuple(samples), accepted)
