"""Completion clients: a deterministic mock and an OpenAI-compatible HTTP client.

The HTTP client speaks the ``/chat/completions`` (or legacy ``/completions``)
JSON protocol, so any conforming endpoint works. The auth token is read
from an environment variable at request time and never logged.
"""

from __future__ import annotations

import abc
import logging
import os
import re
import statistics
import time
from typing import Callable, Mapping

import httpx

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_TOKENS = 8

# reference fine-tuning settings for Flan-T5 rating models; carried as metadata only
FLAN_T5_FINETUNE_SETTINGS = {"learning_rate": 5e-5, "batch_size": 64, "dropout": 0.1, "steps": 50_000}


class ClientError(RuntimeError):
    """The endpoint could not produce a completion after all retries."""


class CompletionClient(abc.ABC):
    def __init__(self, temperature: float = DEFAULT_TEMPERATURE, max_tokens: int = DEFAULT_MAX_TOKENS):
        if temperature < 0:
            raise ValueError("temperature must be >= 0")
        self.temperature = temperature
        self.max_tokens = max_tokens

    @abc.abstractmethod
    def complete(self, prompt: str) -> str:
        ...

    def describe(self) -> dict:
        return {"client": type(self).__name__, "temperature": self.temperature,
                "max_tokens": self.max_tokens}


class MockClient(CompletionClient):
    """Answers prompts with a pure function; used by tests and offline runs."""

    def __init__(self, respond: Callable[[str], str] | str, name: str = "mock", **kwargs):
        super().__init__(**kwargs)
        self._respond = (lambda _prompt: respond) if isinstance(respond, str) else respond
        self.name = name
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        return self._respond(prompt)

    def describe(self) -> dict:
        return {**super().describe(), "mock": self.name}

    @classmethod
    def constant(cls, text: str = "3") -> "MockClient":
        return cls(text, name=f"constant:{text}")

    @classmethod
    def from_mapping(cls, answers: Mapping[str, str], default: str = "") -> "MockClient":
        return cls(lambda prompt: answers.get(prompt, default), name="mapping")

    @classmethod
    def history_mean(cls, history_header: str = "User rating history (oldest first):",
                     fallback: str = "3") -> "MockClient":
        """Reads the target user's history ratings back out of the prompt and answers their mean."""
        line = re.compile(r"^- .*:\s*(\d+(?:\.\d+)?)\s*$")

        def respond(prompt: str) -> str:
            block = prompt.rsplit(history_header, 1)[-1]
            ratings = [float(m.group(1)) for m in map(line.match, block.splitlines()) if m]
            return f"{statistics.fmean(ratings):.2f}" if ratings else fallback

        return cls(respond, name="history_mean")


class OpenAICompatibleClient(CompletionClient):
    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(self, base_url: str, model: str, token_env: str = "OPENAI_API_KEY",
                 api: str = "chat", temperature: float = DEFAULT_TEMPERATURE,
                 max_tokens: int = DEFAULT_MAX_TOKENS, timeout: float = 30.0, max_retries: int = 3,
                 backoff: float = 0.5, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        super().__init__(temperature, max_tokens)
        if api not in ("chat", "completions"):
            raise ValueError("api must be 'chat' or 'completions'")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.token_env = token_env
        self.api = api
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def __repr__(self) -> str:
        return f"OpenAICompatibleClient(base_url={self.base_url!r}, model={self.model!r}, token_env={self.token_env!r})"

    def describe(self) -> dict:
        return {**super().describe(), "base_url": self.base_url, "model": self.model, "api": self.api,
                "token_env": self.token_env}

    def request_body(self, prompt: str) -> dict:
        body = {"model": self.model, "temperature": self.temperature, "max_tokens": self.max_tokens}
        if self.api == "chat":
            body["messages"] = [{"role": "user", "content": prompt}]
        else:
            body["prompt"] = prompt
        return body

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    @staticmethod
    def _extract(payload: dict, api: str) -> str:
        choice = payload["choices"][0]
        if api == "chat":
            return choice["message"]["content"] or ""
        return choice.get("text") or ""

    def complete(self, prompt: str) -> str:
        url = f"{self.base_url}/{'chat/completions' if self.api == 'chat' else 'completions'}"
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._http.post(url, json=self.request_body(prompt), headers=self._headers())
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.warning("request to %s failed (attempt %d): %s", url, attempt + 1, last_error)
                continue
            if resp.status_code in self.RETRY_STATUS:
                last_error = f"HTTP {resp.status_code}"
                log.warning("request to %s returned %d (attempt %d)", url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise ClientError(f"{url}: HTTP {resp.status_code}")
            try:
                return self._extract(resp.json(), self.api)
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ClientError(f"{url}: malformed response ({exc})") from None
        raise ClientError(f"{url}: giving up after {self.max_retries + 1} attempts ({last_error})")

    def close(self) -> None:
        self._http.close()
