"""Config file loading and bundled-asset name resolution.

A config file is YAML with one section per concern::

    run:        # RunConfig fields
      tau: 0.0
      tau_think: 512
    backends:
      mode: scripted          # or http
      endpoints:              # http mode only
        slm: {base_url: ..., model: ..., api_key_env: SLM_KEY, timeout_ms: 60000}
        llm: {base_url: ..., model: ...}
    tools:
      mode: fixture           # or http
      fixtures: fixtures/ten_step_tools
      max_results: 10
      content_cap: 8192
      cache_size: 1024
      http: {search_url: ..., reader_url: ...}
    simulate:   # SimParams fields
      r_base: 10000
    profile:
      target_rate: 0.2
"""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path
from typing import Optional

from .backends.scenario import parse_yaml_document
from .errors import ParseError
from .orchestrator import RunConfig

SECTIONS = {"run", "backends", "tools", "simulate", "profile"}


def resolve_asset(name: str) -> Path:
    """Find ``name`` on disk, then with ``.yaml``, then among the bundled assets."""
    candidates = [Path(name), Path(name + ".yaml")]
    data = resources.files("specagent.data")
    for rel in (name, name + ".yaml", f"configs/{name}", f"configs/{name}.yaml"):
        candidates.append(Path(str(data.joinpath(rel))))
    for c in candidates:
        if c.is_file():
            return c
    raise FileNotFoundError(f"cannot find {name!r} on disk or among bundled assets")


def read_asset(name: str) -> str:
    return resolve_asset(name).read_text("utf-8")


def load_config(name: Optional[str]) -> dict:
    if name is None:
        return {}
    data, _ = parse_yaml_document(read_asset(name))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError("config must be a mapping", 1, 1)
    unknown = set(data) - SECTIONS
    if unknown:
        raise ParseError(f"unknown config sections {sorted(unknown)}", 1, 1)
    return data


def run_config_from(section: Optional[dict], **overrides) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    section = dict(section or {})
    unknown = set(section) - fields
    if unknown:
        raise ParseError(f"unknown run settings {sorted(unknown)}")
    section.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**section)
