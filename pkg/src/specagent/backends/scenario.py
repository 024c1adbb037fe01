"""Scenario documents: scripted backend responses keyed by (role, step, mode).

Schema (YAML), version 1::

    version: 1
    task_id: demo            # optional
    question: "..."          # optional, used by the CLI
    entries:
      - role: slm            # slm | llm | critic
        step: 0
        mode: with_reasoning # with_reasoning | action_only; omitted for critic
        text: "<think>...</think>\\nsearch{query=\\"...\\"}"
        tokens: [...]        # optional
        logprobs: [...]      # optional, same length as tokens
        latency_ms: 3000
      - role: critic
        step: 0
        topk: [[Yes, -0.105], [No, -2.303], ...]
        latency_ms: 500
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import yaml

from ..core import GenerationMode, Role
from ..errors import DuplicateKey, ParseError
from .base import BackendResponse, NextTokenDistribution

SCENARIO_VERSION = 1

_TOP_FIELDS = {"version", "task_id", "question", "entries"}
_ENTRY_FIELDS = {"role", "step", "mode", "text", "tokens", "logprobs", "latency_ms", "topk"}

ScriptKey = tuple[Role, int, Optional[GenerationMode]]
Scripted = Union[BackendResponse, NextTokenDistribution]


@dataclass(frozen=True)
class ScenarioScript:
    entries: dict = field(default_factory=dict)  # ScriptKey -> BackendResponse | NextTokenDistribution
    question: Optional[str] = None
    task_id: Optional[str] = None

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, role: Role, step: int, mode: Optional[GenerationMode]) -> Optional[Scripted]:
        return self.entries.get((Role(role), step, mode))


class _Loader(yaml.SafeLoader):
    """SafeLoader that also rejects duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise DuplicateKey(f"duplicate field {key!r}", mark.line + 1, mark.column + 1)
        seen.add(key)
    return loader.construct_mapping(node, deep=deep)


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def parse_yaml_document(document: str) -> tuple[object, yaml.Node]:
    """Parse YAML returning both the data and the node tree (for line numbers)."""
    try:
        node = yaml.compose(document, Loader=_Loader)
        data = yaml.load(document, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(f"invalid YAML: {exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from None
    return data, node


def _line_of(node: Optional[yaml.Node]) -> tuple[Optional[int], Optional[int]]:
    if node is None:
        return None, None
    return node.start_mark.line + 1, node.start_mark.column + 1


def _entry_nodes(root: Optional[yaml.Node]) -> list:
    if not isinstance(root, yaml.MappingNode):
        return []
    for k, v in root.value:
        if k.value == "entries" and isinstance(v, yaml.SequenceNode):
            return v.value
    return []


def _entry_to_script(raw: dict, node) -> tuple[ScriptKey, Scripted]:
    def fail(msg):
        raise ParseError(msg, *_line_of(node))

    if not isinstance(raw, dict):
        fail("entry must be a mapping")
    unknown = set(raw) - _ENTRY_FIELDS
    if unknown:
        fail(f"unknown entry fields {sorted(unknown)}")
    try:
        role = Role(raw["role"])
    except (KeyError, ValueError):
        fail(f"entry needs role in {[r.value for r in Role]}")
    step = raw.get("step")
    if not isinstance(step, int) or isinstance(step, bool) or step < 0:
        fail("entry needs a non-negative integer step")
    latency = raw.get("latency_ms", 0)
    if not isinstance(latency, int) or isinstance(latency, bool) or latency < 0:
        fail("latency_ms must be a non-negative integer")

    if role is Role.CRITIC:
        if "topk" not in raw:
            fail("critic entries need topk")
        extra = {"text", "tokens", "logprobs"} & set(raw)
        if extra:
            fail(f"critic entries cannot carry {sorted(extra)}")
        mode = GenerationMode(raw["mode"]) if raw.get("mode") is not None else None
        try:
            pairs = [(str(t), float(lp)) for t, lp in raw["topk"]]
            value: Scripted = NextTokenDistribution.from_pairs(pairs, latency)
        except (TypeError, ValueError) as exc:
            fail(f"bad topk: {exc}")
        return (role, step, mode), value

    if "topk" in raw:
        fail("only critic entries may carry topk")
    try:
        mode = GenerationMode(raw["mode"])
    except (KeyError, ValueError):
        fail(f"entry needs mode in {[m.value for m in GenerationMode]}")
    if not isinstance(raw.get("text"), str):
        fail("entry needs text")
    try:
        value = BackendResponse(
            text=raw["text"],
            tokens=tuple(str(t) for t in raw.get("tokens") or ()),
            token_logprobs=tuple(raw.get("logprobs") or ()),
            latency_ms=latency,
        )
    except (TypeError, ValueError) as exc:
        fail(f"bad response: {exc}")
    return (role, step, mode), value


def load_scenario(document: str) -> ScenarioScript:
    data, root = parse_yaml_document(document)
    if not isinstance(data, dict):
        raise ParseError("scenario must be a mapping", 1, 1)
    unknown = set(data) - _TOP_FIELDS
    if unknown:
        raise ParseError(f"unknown top-level fields {sorted(unknown)}", 1, 1)
    if data.get("version") != SCENARIO_VERSION:
        raise ParseError(f"unsupported scenario version {data.get('version')!r}", 1, 1)
    raw_entries = data.get("entries") or []
    if not isinstance(raw_entries, list):
        raise ParseError("entries must be a list", 1, 1)
    nodes = _entry_nodes(root)
    entries: dict = {}
    for i, raw in enumerate(raw_entries):
        node = nodes[i] if i < len(nodes) else None
        key, value = _entry_to_script(raw, node)
        if key in entries:
            mode = key[2].value if key[2] else "-"
            raise DuplicateKey(f"duplicate entry ({key[0].value}, {key[1]}, {mode})", *_line_of(node))
        entries[key] = value
    question = data.get("question")
    task_id = data.get("task_id")
    return ScenarioScript(
        entries=entries,
        question=str(question) if question is not None else None,
        task_id=str(task_id) if task_id is not None else None,
    )


def dump_scenario(script: ScenarioScript) -> str:
    """Inverse of :func:`load_scenario`, used by the fixture generators."""
    entries = []
    for (role, step, mode), value in sorted(
        script.entries.items(), key=lambda kv: (kv[0][1], kv[0][0].value, kv[0][2].value if kv[0][2] else "")
    ):
        e: dict = {"role": role.value, "step": step}
        if mode is not None:
            e["mode"] = mode.value
        if isinstance(value, NextTokenDistribution):
            e["topk"] = [[t, lp] for t, lp in value.entries]
        else:
            e["text"] = value.text
            if value.tokens:
                e["tokens"] = list(value.tokens)
            if value.token_logprobs:
                e["logprobs"] = list(value.token_logprobs)
        e["latency_ms"] = value.latency_ms
        entries.append(e)
    doc: dict = {"version": SCENARIO_VERSION}
    if script.task_id is not None:
        doc["task_id"] = script.task_id
    if script.question is not None:
        doc["question"] = script.question
    doc["entries"] = entries
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True, width=1000)
