"""Offline metrics over traces.

All percentiles use the nearest-rank method: the q-th percentile of n sorted
values is the value at 1-based position ``ceil(q * n)`` (at least 1).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import ActionKind, DraftSource, Provenance, Trajectory
from .errors import EmptyInput, InsufficientData, LengthMismatch, ZeroVector


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def nearest_rank(values: Sequence[float], q: float) -> float:
    if not values:
        raise EmptyInput("percentile of an empty sample")
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    ordered = sorted(values)
    # round() guards against q*n landing a hair above an integer
    rank = max(1, math.ceil(round(q * len(ordered), 9)))
    return ordered[rank - 1]


# -- entropy proxy -----------------------------------------------------------------


def token_entropy_proxy(logprobs: Sequence[float]) -> float:
    """Mean negated token log-probability of a realized action."""
    if len(logprobs) == 0:
        raise EmptyInput("entropy proxy needs at least one token")
    if any(lp > 0 for lp in logprobs):
        raise ValueError("log-probabilities must be <= 0")
    return math.fsum(-lp for lp in logprobs) / len(logprobs)


@dataclass(frozen=True)
class ActionSample:
    kind: ActionKind
    with_reasoning: bool
    logprobs: tuple[float, ...]


def action_samples(trajectories: Iterable[Trajectory]) -> list[ActionSample]:
    """Every realized action with token logprobs.

    Both drafts of each step are included (System 2 counts as with-reasoning,
    System 1 as without); fallback and baseline actions count as with-reasoning.
    Executed draft actions are not counted twice.
    """
    out = []
    for traj in trajectories:
        for s in traj.steps:
            for d in s.drafts:
                if d.action is not None and d.action_logprobs:
                    out.append(ActionSample(d.action.kind, d.source is DraftSource.SYSTEM2, d.action_logprobs))
            if s.provenance in (Provenance.FALLBACK, Provenance.BASE) and s.action_logprobs:
                out.append(ActionSample(s.action.kind, True, s.action_logprobs))
    return out


@dataclass(frozen=True)
class GroupStats:
    count: int
    mean: float
    q1: float
    median: float
    q3: float


@dataclass(frozen=True)
class EntropyReport:
    """Entropy-proxy distributions per (action kind, reasoning mode).

    ``search_exceeds_visit`` compares mean proxies of the no-reasoning Search and
    Visit groups; it is ``None`` when either group is absent.
    """

    groups: dict
    search_exceeds_visit: Optional[bool]

    def to_csv(self) -> str:
        rows = []
        for (kind, mode), g in sorted(self.groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            rows.append([kind, mode, g.count, repr(g.mean), repr(g.q1), repr(g.median), repr(g.q3)])
        return _csv(["action_kind", "reasoning", "count", "mean_proxy", "q1", "median", "q3"], rows)


def entropy_report(
    samples: Iterable[ActionSample],
    grouping: str = "kind_mode",
    required: Iterable[tuple[str, str]] = (),
) -> EntropyReport:
    """Group entropy proxies.

    ``grouping`` is ``"kind_mode"`` (keys like ``("search", "without")``) or
    ``"kind"`` (keys like ``("search", "all")``). Groups listed in ``required``
    that have no samples raise :class:`InsufficientData`.
    """
    if grouping not in ("kind_mode", "kind"):
        raise ValueError("grouping must be 'kind_mode' or 'kind'")
    buckets: dict = {}
    for s in samples:
        mode = ("with" if s.with_reasoning else "without") if grouping == "kind_mode" else "all"
        buckets.setdefault((s.kind.value, mode), []).append(token_entropy_proxy(s.logprobs))
    if not buckets:
        raise InsufficientData("no action samples with logprobs")
    for key in required:
        if key not in buckets:
            raise InsufficientData(f"no samples for group {key}")
    groups = {
        key: GroupStats(
            len(vals),
            math.fsum(vals) / len(vals),
            nearest_rank(vals, 0.25),
            nearest_rank(vals, 0.5),
            nearest_rank(vals, 0.75),
        )
        for key, vals in buckets.items()
    }
    no_reason = "without" if grouping == "kind_mode" else "all"
    search, visit = groups.get(("search", no_reason)), groups.get(("visit", no_reason))
    verdict = None if search is None or visit is None else search.mean > visit.mean
    return EntropyReport(groups, verdict)


# -- alignment metrics ---------------------------------------------------------------


_TOKEN = re.compile(r"\w+", re.UNICODE)


class HashedBagOfTokens:
    """Deterministic token-count embedding over a hashed vocabulary."""

    def __init__(self, dim: int = 1 << 18):
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def __call__(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for tok in _TOKEN.findall(text.casefold()):
            vec[self._bucket(tok)] += 1.0
        return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    return max(-1.0, min(1.0, float(np.dot(u, v)) / (nu * nv)))


def alignment_cosine(text_a: str, text_b: str, embedder: Callable[[str], np.ndarray] = HashedBagOfTokens()) -> float:
    u, v = np.asarray(embedder(text_a), dtype=float), np.asarray(embedder(text_b), dtype=float)
    if u.shape != v.shape:
        raise ValueError("embedder returned vectors of different dimension")
    return cosine(u, v)


def url_hit_rate(selected: Sequence[str], oracle: Sequence[str]) -> float:
    if len(selected) != len(oracle):
        raise LengthMismatch(f"{len(selected)} selections vs {len(oracle)} oracle urls")
    if not selected:
        raise EmptyInput("no url pairs")
    return sum(a == b for a, b in zip(selected, oracle)) / len(selected)


# -- verifier-score aggregates ----------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryScoreAggregate:
    mean: float
    p25: float
    n: int


def trajectory_aggregates(scores: Sequence[float]) -> TrajectoryScoreAggregate:
    if len(scores) == 0:
        raise EmptyInput("no scores to aggregate")
    return TrajectoryScoreAggregate(math.fsum(scores) / len(scores), nearest_rank(scores, 0.25), len(scores))


def trajectory_scores(trajectory: Trajectory) -> list[float]:
    """Critic scores of every semantically verified step."""
    return [
        s.verdict.score
        for s in trajectory.steps
        if s.verdict is not None and s.verdict.policy == "semantic" and math.isfinite(s.verdict.score)
    ]


# -- threshold profiling -------------------------------------------------------------------


def intervention_rate_at(scores: Sequence[float], tau: float) -> float:
    """Fraction of scores that would fall back (strictly below ``tau``)."""
    if not scores:
        raise EmptyInput("no scores")
    return sum(1 for s in scores if s < tau) / len(scores)


def profile_threshold(dev_records: Sequence, target_rate: float) -> float:
    """Largest threshold whose fallback fraction on the dev set stays within ``target_rate``.

    ``dev_records`` holds ``(score, label)`` pairs (bare scores are accepted too).
    Candidates are the observed scores; with ``m = floor(target_rate * n)``
    fallbacks allowed, the answer is the ``(m+1)``-th smallest score, so at most
    ``m`` records sit strictly below it and the next distinct score would push
    the count past ``m``.
    """
    scores = sorted(float(r[0]) if isinstance(r, (tuple, list)) else float(r) for r in dev_records)
    if len(scores) < 10:
        raise InsufficientData(f"threshold profiling needs >= 10 records, got {len(scores)}")
    if not 0 <= target_rate < 1:
        raise ValueError("target_rate must lie in [0, 1)")
    allowed = math.floor(round(target_rate * len(scores), 9))
    return scores[allowed]


def threshold_sweep(dev_records: Sequence[tuple[float, bool]], taus: Sequence[float]) -> str:
    """CSV of intervention rate and accepted-bad-step rate per candidate threshold.

    Labels are ``True`` for steps judged acceptable.
    """
    scores = [float(s) for s, _ in dev_records]
    bad = [float(s) for s, ok in dev_records if not ok]
    rows = []
    for tau in taus:
        accepted_bad = sum(1 for s in bad if s >= tau) / len(bad) if bad else 0.0
        rows.append([repr(float(tau)), repr(intervention_rate_at(scores, tau)), repr(accepted_bad)])
    return _csv(["tau", "intervention_rate", "accepted_bad_rate"], rows)


# -- latency ----------------------------------------------------------------------------------

PHASES = ("draft_slm_ms", "draft_llm_ms", "verify_ms", "tool_ms", "fallback_reasoning_ms", "wall_step_ms")


@dataclass(frozen=True)
class LatencyBreakdown:
    rows: tuple[dict, ...]
    totals: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        body = [[r["step"], r["provenance"], r["action"]] + [r[p] for p in PHASES] for r in self.rows]
        body.append(["total", "", ""] + [self.totals[p] for p in PHASES])
        return _csv(["step", "provenance", "action"] + list(PHASES), body)


def latency_breakdown(trajectory: Trajectory) -> LatencyBreakdown:
    rows = []
    for i, s in enumerate(trajectory.steps):
        row = {"step": i, "provenance": s.provenance.value, "action": s.action.kind.value}
        row.update(s.timing.to_dict())
        rows.append(row)
    totals = {p: sum(r[p] for r in rows) for p in PHASES}
    return LatencyBreakdown(tuple(rows), totals)
