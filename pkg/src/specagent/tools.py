"""Search/Visit execution: fixture and HTTP backends behind an LRU cache.

Fixture file schema (YAML), version 1::

    version: 1
    search:
      - query: capital of France
        latency_ms: 800
        items:
          - {url: "https://en.wikipedia.org/wiki/Paris", title: Paris, snippet: "..."}
    visit:
      - url: https://en.wikipedia.org/wiki/Paris
        latency_ms: 1500
        content: "..."
"""

from __future__ import annotations

import asyncio
import logging
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Protocol
from urllib.parse import urlparse

import httpx

from .backends.scenario import parse_yaml_document
from .clock import Clock, MonotonicClock
from .core import Action, ActionKind, Observation, ObservationKind, render_action
from .errors import NoFixture, ParseError, ToolError, ToolTimeout, ToolWireError

logger = logging.getLogger(__name__)

FIXTURE_VERSION = 1
TRUNCATION_MARKER = "\n[...truncated]"


@dataclass(frozen=True)
class SearchItem:
    url: str
    title: str
    snippet: str

    def __post_init__(self):
        if not self.url:
            raise ValueError("search result url must be non-empty")


@dataclass(frozen=True)
class SearchResults:
    items: tuple[SearchItem, ...]
    query_echo: str

    def render(self) -> str:
        lines = [f"Search results for: {self.query_echo}"]
        for i, item in enumerate(self.items, 1):
            lines.append(f"[{i}] {item.title} ({item.url})")
            if item.snippet:
                lines.append(f"    {item.snippet}")
        if not self.items:
            lines.append("(no results)")
        return "\n".join(lines)


@dataclass(frozen=True)
class Extraction:
    url: str
    instruction_echo: str
    content: str


def truncate(text: str, cap: int) -> str:
    """Clip ``text`` to at most ``cap`` characters, marker included."""
    if len(text) <= cap:
        return text
    if cap <= len(TRUNCATION_MARKER):
        return text[:cap]
    return text[: cap - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


def is_valid_url(url: str) -> bool:
    parsed = urlparse(url)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc) and " " not in url


class ToolBackend(Protocol):
    async def search(self, query: str) -> tuple[SearchResults, int]: ...

    async def visit(self, url: str, instruction: str) -> tuple[Extraction, int]: ...

    async def other(self, action: Action) -> tuple[str, int]: ...


# -- fixture backend ------------------------------------------------------------


@dataclass
class FixtureSet:
    search: dict = field(default_factory=dict)  # query -> (items, latency_ms)
    visit: dict = field(default_factory=dict)  # url -> (content, latency_ms)


def load_fixtures(document: str) -> FixtureSet:
    data, _ = parse_yaml_document(document)
    if not isinstance(data, dict):
        raise ParseError("fixture file must be a mapping", 1, 1)
    unknown = set(data) - {"version", "search", "visit"}
    if unknown:
        raise ParseError(f"unknown top-level fields {sorted(unknown)}", 1, 1)
    if data.get("version") != FIXTURE_VERSION:
        raise ParseError(f"unsupported fixture version {data.get('version')!r}", 1, 1)
    fx = FixtureSet()
    for entry in data.get("search") or []:
        if not isinstance(entry, dict) or set(entry) - {"query", "latency_ms", "items"} or "query" not in entry:
            raise ParseError(f"bad search fixture {entry!r}")
        query = " ".join(str(entry["query"]).split())
        if query in fx.search:
            raise ParseError(f"duplicate search fixture {query!r}")
        items = []
        for it in entry.get("items") or []:
            if not isinstance(it, dict) or set(it) - {"url", "title", "snippet"}:
                raise ParseError(f"bad search item {it!r}")
            items.append(SearchItem(str(it.get("url", "")), str(it.get("title", "")), str(it.get("snippet", ""))))
        fx.search[query] = (tuple(items), int(entry.get("latency_ms", 0)))
    for entry in data.get("visit") or []:
        if not isinstance(entry, dict) or set(entry) - {"url", "latency_ms", "content"} or "url" not in entry:
            raise ParseError(f"bad visit fixture {entry!r}")
        url = str(entry["url"]).strip()
        if url in fx.visit:
            raise ParseError(f"duplicate visit fixture {url!r}")
        fx.visit[url] = (str(entry.get("content", "")), int(entry.get("latency_ms", 0)))
    return fx


class FixtureToolBackend:
    """Pure lookup tables. ``calls`` records every invocation in order."""

    def __init__(self, fixtures: FixtureSet):
        self.fixtures = fixtures
        self.calls: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    def _record(self, kind: str, key: str) -> None:
        with self._lock:
            self.calls.append((kind, key))

    async def search(self, query: str) -> tuple[SearchResults, int]:
        self._record("search", query)
        try:
            items, latency = self.fixtures.search[query]
        except KeyError:
            raise NoFixture(f"no search fixture for {query!r}") from None
        return SearchResults(items, query), latency

    async def visit(self, url: str, instruction: str) -> tuple[Extraction, int]:
        self._record("visit", url)
        try:
            content, latency = self.fixtures.visit[url]
        except KeyError:
            raise NoFixture(f"no visit fixture for {url!r}") from None
        return Extraction(url, instruction, content), latency

    async def other(self, action: Action) -> tuple[str, int]:
        self._record("tool", action.tool_name or "")
        raise NoFixture(f"tool {action.tool_name!r} is not available in fixture mode")


# -- HTTP backend ---------------------------------------------------------------


@dataclass(frozen=True)
class HttpToolConfig:
    """Endpoints for live tools.

    ``search_url`` receives ``GET ?q=<query>`` and must answer
    ``{"results": [{"url", "title", "snippet"}]}``. ``reader_url`` receives
    ``POST {"url", "instruction"}`` and answers ``{"content": "..."}``.
    ``tool_url`` (optional) receives ``POST {"name", "args"}`` and answers
    ``{"output": "..."}``.
    """

    search_url: str
    reader_url: str
    tool_url: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout_ms: int = 60_000


class HttpToolBackend:
    def __init__(self, config: HttpToolConfig, *, client: Optional[httpx.AsyncClient] = None, clock: Optional[Clock] = None):
        self.config = config
        self._client = client
        self.clock = clock or MonotonicClock()

    async def _call(self, method: str, url: str, **kwargs) -> tuple[dict, int]:
        headers = {}
        if self.config.api_key_env and os.environ.get(self.config.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.config.api_key_env]}"
        client = self._client or httpx.AsyncClient()
        start = self.clock.now_ms()
        try:
            resp = await client.request(method, url, headers=headers, timeout=self.config.timeout_ms / 1000, **kwargs)
            if resp.status_code >= 400:
                raise ToolWireError(f"HTTP {resp.status_code} from {url}")
            return resp.json(), max(0, self.clock.now_ms() - start)
        except httpx.TimeoutException:
            raise ToolTimeout(f"{url} timed out") from None
        except (httpx.TransportError, ValueError) as exc:
            raise ToolWireError(f"{url}: {exc}") from None
        finally:
            if self._client is None:
                await client.aclose()

    async def search(self, query: str) -> tuple[SearchResults, int]:
        body, latency = await self._call("GET", self.config.search_url, params={"q": query})
        try:
            items = tuple(
                SearchItem(str(r["url"]), str(r.get("title", "")), str(r.get("snippet", "")))
                for r in body["results"]
                if r.get("url")
            )
        except (KeyError, TypeError) as exc:
            raise ToolWireError(f"unexpected search body: {exc}") from None
        return SearchResults(items, query), latency

    async def visit(self, url: str, instruction: str) -> tuple[Extraction, int]:
        body, latency = await self._call("POST", self.config.reader_url, json={"url": url, "instruction": instruction})
        try:
            content = str(body["content"])
        except (KeyError, TypeError) as exc:
            raise ToolWireError(f"unexpected reader body: {exc}") from None
        return Extraction(url, instruction, content), latency

    async def other(self, action: Action) -> tuple[str, int]:
        if not self.config.tool_url:
            raise ToolError(f"no endpoint configured for tool {action.tool_name!r}")
        body, latency = await self._call(
            "POST", self.config.tool_url, json={"name": action.tool_name, "args": dict(action.args)}
        )
        return str(body.get("output", "")), latency


# -- executor + cache -----------------------------------------------------------


class ToolExecutor:
    """Validates, caches and post-processes tool calls.

    Cache keys are canonical action renderings; hits report zero latency. Only
    successful results are cached.
    """

    def __init__(
        self,
        backend: ToolBackend,
        *,
        max_results: int = 10,
        content_cap: int = 8192,
        cache_size: int = 1024,
    ):
        self.backend = backend
        self.max_results = max_results
        self.content_cap = content_cap
        self.cache_size = cache_size
        self._cache: OrderedDict[str, object] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0

    def _get(self, key: str):
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                self.hits += 1
                return self._cache[key]
            return None

    def _put(self, key: str, value) -> None:
        if self.cache_size <= 0:
            return
        with self._lock:
            self._cache[key] = value
            self._cache.move_to_end(key)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)

    async def execute_search(self, query: str) -> tuple[SearchResults, int]:
        action = Action.search(query)  # raises on empty query
        key = render_action(action)
        cached = self._get(key)
        if cached is not None:
            return cached, 0
        results, latency = await self.backend.search(action.query)
        results = SearchResults(results.items[: self.max_results], results.query_echo)
        self._put(key, results)
        return results, latency

    async def execute_visit(self, url: str, instruction: str) -> tuple[Extraction, int]:
        if not is_valid_url(url):
            raise ValueError(f"not a valid http(s) url: {url!r}")
        action = Action.visit(url, instruction)
        key = render_action(action)
        cached = self._get(key)
        if cached is not None:
            return cached, 0
        ext, latency = await self.backend.visit(action.url, action.instruction)
        ext = Extraction(ext.url, ext.instruction_echo, truncate(ext.content, self.content_cap))
        self._put(key, ext)
        return ext, latency

    async def observe(self, action: Action) -> Observation:
        """Run ``action`` and wrap the outcome; tool failures become ToolError observations."""
        try:
            if action.kind is ActionKind.SEARCH:
                results, latency = await self.execute_search(action.query)
                return Observation(ObservationKind.SEARCH_RESULTS, results.render(), latency)
            if action.kind is ActionKind.VISIT:
                ext, latency = await self.execute_visit(action.url, action.instruction)
                return Observation(ObservationKind.EXTRACTION, ext.content, latency)
            if action.kind is ActionKind.FINISH:
                return Observation(ObservationKind.ANSWER_ECHO, action.answer, 0)
            output, latency = await self.backend.other(action)
            return Observation(ObservationKind.TOOL_OUTPUT, truncate(output, self.content_cap), latency)
        except asyncio.CancelledError:
            raise
        except (ToolError, ValueError) as exc:
            logger.info("tool call %s failed: %s", render_action(action), exc)
            return Observation(ObservationKind.TOOL_ERROR, f"{type(exc).__name__}: {exc}", 0)
