"""Speculative draft-verify execution for tool-using research agents."""

from .core import (
    Action,
    ActionKind,
    DraftRecord,
    DraftSource,
    GenerationMode,
    Observation,
    ObservationKind,
    Provenance,
    ReasoningTrace,
    Role,
    Step,
    TimingBreakdown,
    Trajectory,
    Verdict,
    action_kind,
    parse_action,
    render_action,
)
from .orchestrator import RunConfig, RunReport, parse_trace, run_baseline, run_task, serialize_trace

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "DraftRecord",
    "DraftSource",
    "GenerationMode",
    "Observation",
    "ObservationKind",
    "Provenance",
    "ReasoningTrace",
    "Role",
    "RunConfig",
    "RunReport",
    "Step",
    "TimingBreakdown",
    "Trajectory",
    "Verdict",
    "action_kind",
    "parse_action",
    "parse_trace",
    "render_action",
    "run_baseline",
    "run_task",
    "serialize_trace",
]
