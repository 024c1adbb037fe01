from .base import Backend, BackendResponse, DecodingParams, FinishReason, NextTokenDistribution
from .http import ChatCompletionBackend, EndpointConfig
from .scenario import ScenarioScript, dump_scenario, load_scenario
from .scripted import CallRecord, ScriptedBackend

__all__ = [
    "Backend",
    "BackendResponse",
    "CallRecord",
    "ChatCompletionBackend",
    "DecodingParams",
    "EndpointConfig",
    "FinishReason",
    "NextTokenDistribution",
    "ScenarioScript",
    "ScriptedBackend",
    "dump_scenario",
    "load_scenario",
]
