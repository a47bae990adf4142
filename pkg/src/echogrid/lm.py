"""Chat-completion backends and tolerant structured-output parsing.

The live backend speaks the OpenAI-compatible /chat/completions wire format
and is configured through LM_API_KEY / LM_BASE_URL / LM_MODEL. No test ever
touches it; the suite runs with networking disabled using the scripted
backends. Parsing is total: any input text yields either a value or a
ParseError, never another exception.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

import requests

logger = logging.getLogger(__name__)

ENV_API_KEY = "LM_API_KEY"
ENV_BASE_URL = "LM_BASE_URL"
ENV_MODEL = "LM_MODEL"

# Request parameters for the two call roles (acting agent vs offline reasoning).
AGENT_TEMPERATURE = 0.0
AGENT_MAX_NEW_TOKENS = 4000
OFFLINE_TEMPERATURE = 0.0
OFFLINE_MAX_NEW_TOKENS = 4000


class ParseError(Exception):
    """Structured parse failure; carries the reason and any missing key."""

    def __init__(self, reason: str, missing_key: Optional[str] = None):
        super().__init__(reason)
        self.reason = reason
        self.missing_key = missing_key


class BackendError(Exception):
    """Live-backend failure after exhausting retries."""

    def __init__(self, message: str, status: Optional[int] = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body[:500]


@dataclass
class LMRequest:
    system_prompt: str
    messages: list[dict[str, str]]  # ordered {"role", "content"} entries
    temperature: float = AGENT_TEMPERATURE
    max_new_tokens: int = AGENT_MAX_NEW_TOKENS

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be > 0")


@runtime_checkable
class LMBackend(Protocol):
    deterministic: bool
    live: bool

    def complete(self, request: LMRequest) -> str: ...


class TokenBucket:
    """Requests-per-minute limiter shared by concurrent episode runners."""

    def __init__(self, requests_per_minute: int):
        self.capacity = requests_per_minute
        self.tokens = float(requests_per_minute)
        self.rate = requests_per_minute / 60.0
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            time.sleep(wait)


@dataclass
class BackendStats:
    calls: int = 0
    retries: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class LiveBackend:
    """OpenAI-compatible chat-completion client with bounded retries."""

    deterministic = False
    live = True

    MAX_ATTEMPTS = 3
    RETRY_STATUSES = {429, 500, 502, 503, 504}

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        timeout: float = 60.0,
        retry_delay: float = 1.0,
        rate_limiter: Optional[TokenBucket] = None,
        mirror_path: Optional[str] = None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "")
        if not self.base_url or not self.api_key or not self.model:
            raise BackendError(
                f"live backend requires {ENV_BASE_URL}, {ENV_API_KEY}, and {ENV_MODEL}"
            )
        self.timeout = timeout
        self.retry_delay = retry_delay
        self.rate_limiter = rate_limiter
        self.mirror_path = mirror_path
        self.stats = BackendStats()
        self._lock = threading.Lock()

    def _mirror(self, payload: dict, response_text: str) -> None:
        if not self.mirror_path:
            return
        record = json.dumps(
            {"request": payload, "response": response_text}, sort_keys=True
        )
        with self._lock:
            with open(self.mirror_path, "a", encoding="utf-8") as fh:
                fh.write(record + "\n")

    def complete(self, request: LMRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "system", "content": request.system_prompt}]
            + request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_status, last_body = None, ""
        for attempt in range(self.MAX_ATTEMPTS):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            if attempt:
                time.sleep(self.retry_delay * (2 ** (attempt - 1)))
                with self._lock:
                    self.stats.retries += 1
                logger.info("retrying chat completion (attempt %d)", attempt + 1)
            with self._lock:
                self.stats.calls += 1
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_status, last_body = None, str(exc)
                continue
            if resp.status_code in self.RETRY_STATUSES:
                last_status, last_body = resp.status_code, resp.text
                continue
            if resp.status_code != 200:
                raise BackendError(
                    f"chat completion failed with HTTP {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text,
                )
            try:
                doc = resp.json()
                content = doc["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise BackendError(
                    "malformed chat completion response", status=200, body=resp.text
                ) from None
            if content is None:
                raise BackendError("empty completion content", status=200, body=resp.text)
            usage = doc.get("usage") or {}
            with self._lock:
                self.stats.prompt_tokens += int(usage.get("prompt_tokens", 0) or 0)
                self.stats.completion_tokens += int(usage.get("completion_tokens", 0) or 0)
            self._mirror(payload, content)
            return content
        raise BackendError(
            f"chat completion failed after {self.MAX_ATTEMPTS} attempts",
            status=last_status,
            body=last_body,
        )


def _first_json_object(text: str):
    """First parseable JSON object in the text (code fences and prose tolerated)."""
    if not isinstance(text, str):
        raise ParseError("input is not text")
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(text, idx)
        except ValueError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(value, dict):
            return value
        idx = text.find("{", idx + 1)
    raise ParseError("no JSON object found in reply")


def _coerce_int(value) -> int:
    if isinstance(value, bool):
        raise ParseError("choice must be an integer, not a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            raise ParseError(f"choice is not a parseable integer: {value!r}") from None
    raise ParseError(f"choice is not a parseable integer: {value!r}")


def _coerce_text(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float, bool)):
        return str(value)
    raise ParseError(f"expected a string value, got {type(value).__name__}")


def parse_choice(text: str) -> tuple[str, int]:
    """Extract ("thought", "choice") from an agent reply."""
    obj = _first_json_object(text)
    if "thought" not in obj:
        raise ParseError("reply is missing key 'thought'", missing_key="thought")
    if "choice" not in obj:
        raise ParseError("reply is missing key 'choice'", missing_key="choice")
    return _coerce_text(obj["thought"]), _coerce_int(obj["choice"])


def parse_json_payload(text: str, required_keys: dict[str, type]) -> dict:
    """Extract declared keys from the first JSON object in the text.

    required_keys maps each key to str (text value) or list (list of text).
    """
    obj = _first_json_object(text)
    out = {}
    for key, kind in required_keys.items():
        if key not in obj:
            raise ParseError(f"reply is missing key {key!r}", missing_key=key)
        value = obj[key]
        if kind is list:
            if not isinstance(value, list):
                raise ParseError(f"key {key!r} must be a list")
            out[key] = [_coerce_text(v) for v in value]
        else:
            out[key] = _coerce_text(value)
    return out


def parse_summary(text: str) -> str:
    """Normalize a summarize reply to canonical JSON text of its object."""
    obj = _first_json_object(text)
    flat = {str(k): _coerce_text(v) for k, v in obj.items()}
    return json.dumps(flat, sort_keys=True, indent=2)
