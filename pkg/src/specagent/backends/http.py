"""Client for OpenAI-style ``/chat/completions`` endpoints that return logprobs."""

from __future__ import annotations

import asyncio
import logging
import os
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Optional

import httpx

from ..clock import Clock, MonotonicClock
from ..core import GenerationMode, Role
from ..errors import BackendTimeout, InsufficientTopK, MalformedResponse, WireError
from .base import BackendResponse, DecodingParams, FinishReason, NextTokenDistribution, check_judge_k

logger = logging.getLogger(__name__)

DEFAULT_ACTION_ONLY_DIRECTIVE = (
    "Respond with the next action only, on a single line, using the action grammar. "
    "Do not write any reasoning before the action."
)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: Optional[str] = None
    timeout_ms: int = 120_000
    action_only_directive: str = DEFAULT_ACTION_ONLY_DIRECTIVE
    reasoning_directive: Optional[str] = None
    # Sends chat_template_kwargs.enable_thinking=false in ActionOnly mode.
    suppress_reasoning_channel: bool = True
    max_retries: int = 2
    backoff_ms: int = 250

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        return cls(**d)


def _finish_reason(value) -> FinishReason:
    if value == "stop":
        return FinishReason.STOP
    if value == "length":
        return FinishReason.LENGTH
    return FinishReason.ERROR


class ChatCompletionBackend:
    """Routes each role to an endpoint. ``critic`` falls back to the ``llm`` endpoint."""

    def __init__(
        self,
        endpoints: dict,
        *,
        client: Optional[httpx.AsyncClient] = None,
        clock: Optional[Clock] = None,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
    ):
        self.endpoints = {Role(k): v for k, v in endpoints.items()}
        if Role.CRITIC not in self.endpoints and Role.LLM in self.endpoints:
            self.endpoints[Role.CRITIC] = self.endpoints[Role.LLM]
        self._client = client
        self.clock = clock or MonotonicClock()
        self._sleep = sleep

    def _endpoint(self, role: Role) -> EndpointConfig:
        try:
            return self.endpoints[Role(role)]
        except KeyError:
            raise WireError(f"no endpoint configured for role {Role(role).value}") from None

    async def _post(self, ep: EndpointConfig, body: dict) -> tuple[dict, int]:
        headers = {"Content-Type": "application/json"}
        if ep.api_key_env:
            key = os.environ.get(ep.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        url = ep.base_url.rstrip("/") + "/chat/completions"
        client = self._client or httpx.AsyncClient()
        attempt = 0
        try:
            while True:
                start = self.clock.now_ms()
                try:
                    resp = await client.post(url, json=body, headers=headers, timeout=ep.timeout_ms / 1000)
                    if resp.status_code >= 500 or resp.status_code == 429:
                        raise WireError(f"HTTP {resp.status_code} from {url}")
                    if resp.status_code >= 400:
                        # client errors are not retried
                        raise MalformedResponse(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                    try:
                        payload = resp.json()
                    except ValueError:
                        raise MalformedResponse(f"non-JSON body from {url}") from None
                    return payload, max(0, self.clock.now_ms() - start)
                except (httpx.TimeoutException, WireError, httpx.TransportError) as exc:
                    if attempt >= ep.max_retries:
                        if isinstance(exc, httpx.TimeoutException):
                            raise BackendTimeout(f"{url} timed out after {ep.timeout_ms} ms") from exc
                        if isinstance(exc, WireError):
                            raise
                        raise WireError(f"{url}: {exc}") from exc
                    delay = ep.backoff_ms * (2**attempt)
                    logger.warning("retrying %s in %d ms after %s", url, delay, exc)
                    attempt += 1
                    await self._sleep(delay / 1000)
        finally:
            if self._client is None:
                await client.aclose()

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
        ep = self._endpoint(role)
        mode = GenerationMode(mode)
        messages = []
        if mode is GenerationMode.ACTION_ONLY:
            messages.append({"role": "system", "content": ep.action_only_directive})
        elif ep.reasoning_directive:
            messages.append({"role": "system", "content": ep.reasoning_directive})
        messages.append({"role": "user", "content": context})
        body: dict = {"model": ep.model, "messages": messages, "max_tokens": params.max_tokens, "logprobs": True}
        for name in ("temperature", "top_p", "seed"):
            value = getattr(params, name)
            if value is not None:
                body[name] = value
        if mode is GenerationMode.ACTION_ONLY and ep.suppress_reasoning_channel:
            body["chat_template_kwargs"] = {"enable_thinking": False}

        payload, latency = await self._post(ep, body)
        try:
            choice = payload["choices"][0]
            message = choice["message"]
            content = message.get("content") or ""
            reasoning = message.get("reasoning_content") or message.get("reasoning")
            lp_content = ((choice.get("logprobs") or {}).get("content")) or []
            tokens = tuple(str(item["token"]) for item in lp_content)
            logprobs = tuple(float(item["logprob"]) for item in lp_content)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"unexpected completion body: {exc}") from None
        text = f"<think>{reasoning}</think>\n{content}" if reasoning else content
        try:
            return BackendResponse(
                text=text,
                tokens=tokens,
                token_logprobs=tuple(min(0.0, lp) for lp in logprobs),
                finish_reason=_finish_reason(choice.get("finish_reason")),
                latency_ms=latency,
            )
        except ValueError as exc:
            raise MalformedResponse(str(exc)) from None

    async def judge_next_token(
        self, role: Role, prompt: str, k: int = 20, *, step: int = 0
    ) -> NextTokenDistribution:
        check_judge_k(k)
        ep = self._endpoint(role)
        body = {
            "model": ep.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": True,
            "top_logprobs": k,
        }
        if ep.suppress_reasoning_channel:
            body["chat_template_kwargs"] = {"enable_thinking": False}
        payload, latency = await self._post(ep, body)
        try:
            first = payload["choices"][0]["logprobs"]["content"][0]
            top = [(str(e["token"]), min(0.0, float(e["logprob"]))) for e in first["top_logprobs"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"unexpected logprob body: {exc}") from None
        if len(top) < k:
            raise InsufficientTopK(k, len(top))
        top.sort(key=lambda e: -e[1])
        try:
            return NextTokenDistribution(tuple(top[:k]), latency)
        except ValueError as exc:
            raise MalformedResponse(str(exc)) from None
