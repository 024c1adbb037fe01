"""Domain types shared by every module, plus the canonical action grammar.

Actions render to a single line such as::

    search{query="paris population"}
    visit{url="https://a.org",instruction="find the date"}
    finish{answer="42"}
    tool{name="python",args={code="1+1",timeout="5"}}

Values are double-quoted with ``\\`` and ``"`` backslash-escaped. Whitespace in
field values is collapsed at construction time, so two actions are equal
exactly when their renderings are equal.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional


class ActionKind(str, Enum):
    SEARCH = "search"
    VISIT = "visit"
    FINISH = "finish"
    OTHER_TOOL = "tool"


class Role(str, Enum):
    SLM = "slm"
    LLM = "llm"
    CRITIC = "critic"


class GenerationMode(str, Enum):
    WITH_REASONING = "with_reasoning"
    ACTION_ONLY = "action_only"


class Provenance(str, Enum):
    SYSTEM2_DRAFT = "system2_draft"
    SYSTEM1_DRAFT = "system1_draft"
    FALLBACK = "fallback"
    BASE = "base"  # full-reasoning baseline runs only


class DraftSource(str, Enum):
    SYSTEM2 = "system2"  # small model, with reasoning
    SYSTEM1 = "system1"  # large model, action only


class ObservationKind(str, Enum):
    SEARCH_RESULTS = "search_results"
    EXTRACTION = "extraction"
    ANSWER_ECHO = "answer_echo"
    TOOL_OUTPUT = "tool_output"
    TOOL_ERROR = "tool_error"


_IDENT = re.compile(r"[A-Za-z0-9_.\-]+")


def _norm(value: str) -> str:
    return " ".join(str(value).split())


# -- actions -------------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    """Tagged union over the four action variants.

    Build instances with the ``search``/``visit``/``finish``/``tool``
    constructors rather than calling the class directly.
    """

    kind: ActionKind
    query: Optional[str] = None
    url: Optional[str] = None
    instruction: Optional[str] = None
    answer: Optional[str] = None
    tool_name: Optional[str] = None
    args: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        kind = ActionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("query", "url", "instruction", "answer", "tool_name"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _norm(value))
        args = tuple(sorted((_norm(k), _norm(v)) for k, v in self.args))
        if len({k for k, _ in args}) != len(args):
            raise ValueError("duplicate OtherTool argument key")
        object.__setattr__(self, "args", args)

        required = {
            ActionKind.SEARCH: ("query",),
            ActionKind.VISIT: ("url", "instruction"),
            ActionKind.FINISH: ("answer",),
            ActionKind.OTHER_TOOL: ("tool_name",),
        }[kind]
        for name in ("query", "url", "instruction", "answer", "tool_name"):
            value = getattr(self, name)
            if name in required:
                if not value:
                    raise ValueError(f"{kind.value} action needs a non-empty {name}")
            elif value is not None:
                raise ValueError(f"{kind.value} action cannot carry {name}")
        if kind is not ActionKind.OTHER_TOOL and args:
            raise ValueError(f"{kind.value} action cannot carry args")
        if any(not _IDENT.fullmatch(k) for k, _ in args):
            raise ValueError("OtherTool argument keys must match [A-Za-z0-9_.-]+")

    @classmethod
    def search(cls, query: str) -> "Action":
        return cls(ActionKind.SEARCH, query=query)

    @classmethod
    def visit(cls, url: str, instruction: str) -> "Action":
        return cls(ActionKind.VISIT, url=url, instruction=instruction)

    @classmethod
    def finish(cls, answer: str) -> "Action":
        return cls(ActionKind.FINISH, answer=answer)

    @classmethod
    def tool(cls, name: str, args: dict[str, str] | None = None) -> "Action":
        return cls(ActionKind.OTHER_TOOL, tool_name=name, args=tuple((args or {}).items()))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.kind is ActionKind.SEARCH:
            d["query"] = self.query
        elif self.kind is ActionKind.VISIT:
            d["url"] = self.url
            d["instruction"] = self.instruction
        elif self.kind is ActionKind.FINISH:
            d["answer"] = self.answer
        else:
            d["tool_name"] = self.tool_name
            d["args"] = dict(self.args)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        kind = ActionKind(d["kind"])
        if kind is ActionKind.SEARCH:
            return cls.search(d["query"])
        if kind is ActionKind.VISIT:
            return cls.visit(d["url"], d["instruction"])
        if kind is ActionKind.FINISH:
            return cls.finish(d["answer"])
        return cls.tool(d["tool_name"], d.get("args") or {})


def action_kind(action: Action) -> ActionKind:
    return action.kind


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_action(action: Action) -> str:
    """Canonical one-line rendering; see the module docstring for the grammar."""
    kind = action.kind
    if kind is ActionKind.SEARCH:
        body = f"query={_quote(action.query)}"
    elif kind is ActionKind.VISIT:
        body = f"url={_quote(action.url)},instruction={_quote(action.instruction)}"
    elif kind is ActionKind.FINISH:
        body = f"answer={_quote(action.answer)}"
    else:
        inner = ",".join(f"{k}={_quote(v)}" for k, v in action.args)
        body = f"name={_quote(action.tool_name)},args={{{inner}}}"
    return f"{kind.value}{{{body}}}"


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise ValueError(f"expected {ch!r} at position {self.pos} in {self.text!r}")
        self.pos += 1

    def ident(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] in "_-."):
            self.pos += 1
        if start == self.pos:
            raise ValueError(f"expected identifier at position {start} in {self.text!r}")
        return self.text[start:self.pos]

    def string(self) -> str:
        self.expect('"')
        out = []
        while True:
            ch = self.peek()
            if ch == "":
                raise ValueError(f"unterminated string in {self.text!r}")
            self.pos += 1
            if ch == "\\":
                nxt = self.peek()
                if nxt not in ('"', "\\"):
                    raise ValueError(f"bad escape at position {self.pos} in {self.text!r}")
                out.append(nxt)
                self.pos += 1
            elif ch == '"':
                return "".join(out)
            else:
                out.append(ch)

    def fields(self) -> dict:
        """``{k="v",k2={...}}`` with the braces consumed."""
        self.expect("{")
        out: dict = {}
        if self.peek() == "}":
            self.pos += 1
            return out
        while True:
            key = self.ident()
            self.expect("=")
            value = self.fields() if self.peek() == "{" else self.string()
            if key in out:
                raise ValueError(f"duplicate field {key!r}")
            out[key] = value
            if self.peek() == ",":
                self.pos += 1
                continue
            self.expect("}")
            return out


_FIELDS = {
    ActionKind.SEARCH: {"query"},
    ActionKind.VISIT: {"url", "instruction"},
    ActionKind.FINISH: {"answer"},
    ActionKind.OTHER_TOOL: {"name", "args"},
}


def parse_action(text: str) -> Action:
    """Inverse of :func:`render_action`. Raises ``ValueError`` on any deviation."""
    r = _Reader(text.strip())
    kind = ActionKind(r.ident())
    fields = r.fields()
    if r.pos != len(r.text):
        raise ValueError(f"trailing text after action: {r.text[r.pos:]!r}")
    allowed = _FIELDS[kind]
    if not set(fields) <= allowed or (kind is not ActionKind.OTHER_TOOL and set(fields) != allowed):
        raise ValueError(f"{kind.value} action has fields {sorted(fields)}")
    for key, value in fields.items():
        if (key == "args") != isinstance(value, dict):
            raise ValueError(f"field {key!r} has the wrong shape")
    if kind is ActionKind.SEARCH:
        return Action.search(fields["query"])
    if kind is ActionKind.VISIT:
        return Action.visit(fields["url"], fields["instruction"])
    if kind is ActionKind.FINISH:
        return Action.finish(fields["answer"])
    if "name" not in fields:
        raise ValueError("tool action needs a name")
    args = fields.get("args", {})
    if any(isinstance(v, dict) for v in args.values()):
        raise ValueError("tool args must be flat")
    return Action.tool(fields["name"], args)


# -- traces, observations, timing -----------------------------------------------


@dataclass(frozen=True)
class ReasoningTrace:
    text: str
    token_count: int
    token_logprobs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "token_logprobs", tuple(float(x) for x in self.token_logprobs))
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")
        if self.token_logprobs and len(self.token_logprobs) != self.token_count:
            raise ValueError("token_count must match the number of logprobs")
        if any(lp > 0 for lp in self.token_logprobs):
            raise ValueError("log-probabilities must be <= 0")


@dataclass(frozen=True)
class Observation:
    kind: ObservationKind
    payload: str
    latency: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ObservationKind(self.kind))
        if self.latency < 0:
            raise ValueError("observation latency must be >= 0")


@dataclass(frozen=True)
class TimingBreakdown:
    """Per-step latency decomposition in integral milliseconds."""

    draft_slm_ms: int = 0
    draft_llm_ms: int = 0
    verify_ms: int = 0
    tool_ms: int = 0
    fallback_reasoning_ms: int = 0
    wall_step_ms: int = 0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{name} must be an int, got {value!r}")
            if value < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.wall_step_ms < self.tool_ms:
            raise ValueError("wall_step_ms must be >= tool_ms")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class Verdict:
    """Outcome of verifying one draft.

    ``p_acc``/``p_rej`` are only set by the critic-based verifier. Matching and
    constant policies express themselves through ``score``/``threshold`` so the
    rule ``accepted == (score >= threshold)`` holds for every verdict.
    """

    p_acc: Optional[float]
    p_rej: Optional[float]
    score: float
    accepted: bool
    threshold: float
    policy: str = "semantic"

    def __post_init__(self):
        if self.accepted != (self.score >= self.threshold):
            raise ValueError("verdict must accept exactly when score >= threshold")
        for p in (self.p_acc, self.p_rej):
            if p is not None and not (0.0 < p <= 1.0):
                raise ValueError(f"probability {p} outside (0, 1]")
        if self.p_acc is not None and self.p_rej is not None:
            if self.score != math.log(self.p_acc) - math.log(self.p_rej):
                raise ValueError("score must equal ln(p_acc) - ln(p_rej)")


@dataclass(frozen=True)
class DraftRecord:
    """What one drafting pathway produced at a step, kept for offline analysis."""

    source: DraftSource
    action: Optional[Action] = None
    reasoning_tokens: int = 0
    action_logprobs: tuple[float, ...] = ()
    latency_ms: int = 0
    error: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "source", DraftSource(self.source))
        object.__setattr__(self, "action_logprobs", tuple(float(x) for x in self.action_logprobs))


@dataclass(frozen=True)
class Step:
    action: Action
    observation: Observation
    provenance: Provenance
    timing: TimingBreakdown
    reasoning: Optional[ReasoningTrace] = None
    verdict: Optional[Verdict] = None
    action_logprobs: tuple[float, ...] = ()
    drafts: tuple[DraftRecord, ...] = ()
    discarded_action: Optional[Action] = None

    def __post_init__(self):
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "action_logprobs", tuple(float(x) for x in self.action_logprobs))
        object.__setattr__(self, "drafts", tuple(self.drafts))
        if self.provenance is Provenance.BASE:
            if self.verdict is not None:
                raise ValueError("baseline steps are never verified")
        elif self.provenance is Provenance.FALLBACK:
            if self.verdict is None or self.verdict.accepted:
                raise ValueError("a fallback step needs a rejecting verdict")
        elif self.verdict is not None and not self.verdict.accepted:
            raise ValueError("a draft step cannot carry a rejecting verdict")


@dataclass(frozen=True)
class Trajectory:
    task_id: str
    question: str
    steps: tuple[Step, ...] = ()
    final_answer: Optional[str] = None
    config_digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        finishes = [i for i, s in enumerate(self.steps) if s.action.kind is ActionKind.FINISH]
        if len(finishes) > 1 or (finishes and finishes[0] != len(self.steps) - 1):
            raise ValueError("a Finish step may only appear once, as the last step")

    @property
    def finished(self) -> bool:
        return bool(self.steps) and self.steps[-1].action.kind is ActionKind.FINISH
