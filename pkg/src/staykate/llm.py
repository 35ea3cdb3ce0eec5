"""Chat-completion transport (live or replayed) and extraction parsing.

Live calls speak the JSON chat-completions wire protocol over HTTP(S) with
the credential taken from the API_KEY environment variable; every response is
appended verbatim to a JSON-lines cache keyed by a stable request hash.
Replay mode serves responses from that cache only and never touches the
network, which makes recorded experiments bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .corpus import LabelScheme
from .errors import AuthenticationError, ReplayCacheMiss, TransportError, ValidationError

logger = logging.getLogger(__name__)

PARSE_OK = "ok"
PARSE_REPAIRED = "repaired"
PARSE_FAILED = "failed"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatRequest:
    """One chat call; ``request_key`` is a stable content hash."""

    model_name: str
    system: str
    user: str
    temperature: float = 0.0

    @property
    def request_key(self) -> str:
        material = json.dumps(
            {
                "model": self.model_name,
                "system": self.system,
                "user": self.user,
                "temperature": self.temperature,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    raw_text: str
    usage: dict[str, int] = field(default_factory=dict)
    transport: str = "live"


class Transport(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ResponseCache:
    """Append-only JSON-lines response cache.

    Each line is ``{"request_key", "model", "raw_text", "usage", "timestamp"}``.
    On duplicate keys the last entry wins, so re-recording a run simply
    appends fresher responses. Writes are serialized through a lock.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path.is_file():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise ValidationError(
                            f"{self.path.name}:{lineno}: corrupt cache line: {exc}"
                        ) from exc
                    self._entries[record["request_key"]] = record

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, request_key: str) -> bool:
        return request_key in self._entries

    def get(self, request_key: str) -> dict | None:
        return self._entries.get(request_key)

    def keys(self) -> list[str]:
        return list(self._entries)

    def append(self, request_key: str, model: str, raw_text: str, usage: dict[str, int]) -> None:
        record = {
            "request_key": request_key,
            "model": model,
            "raw_text": raw_text,
            "usage": usage,
            "timestamp": time.time(),
        }
        with self._lock:
            self._entries[request_key] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


class ReplayTransport:
    """Serves cached responses byte-identically; performs no network activity."""

    def __init__(self, cache: ResponseCache):
        self.cache = cache

    def complete(self, request: ChatRequest) -> ChatResponse:
        record = self.cache.get(request.request_key)
        if record is None:
            raise ReplayCacheMiss(request.request_key)
        return ChatResponse(
            raw_text=record["raw_text"],
            usage=dict(record.get("usage", {})),
            transport="replay",
        )


class RateLimiter:
    """Minimum-interval limiter shared across concurrent live workers."""

    def __init__(self, min_interval: float = 0.0):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def acquire(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.min_interval
        if wait > 0:
            time.sleep(wait)


class LiveTransport:
    """POSTs chat-completion requests and records responses into the cache.

    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff up to ``max_retries`` times; authentication failures
    are raised immediately.
    """

    def __init__(
        self,
        endpoint: str,
        cache: ResponseCache,
        api_key: str | None = None,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        rate_limiter: RateLimiter | None = None,
        session: requests.Session | None = None,
    ):
        if not endpoint:
            raise ValidationError("live transport requires an endpoint URL")
        key = api_key if api_key is not None else os.environ.get("API_KEY")
        if not key:
            raise ValidationError("live transport requires a credential in the API_KEY environment variable")
        self.endpoint = endpoint
        self.cache = cache
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.rate_limiter = rate_limiter or RateLimiter()
        self._session = session or requests.Session()
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * (2 ** (attempt - 1))
                logger.warning("retrying request %s in %.2fs (%s)", request.request_key[:12], delay, last_error)
                time.sleep(delay)
            self.rate_limiter.acquire()
            try:
                response = self._session.post(
                    self.endpoint, json=payload, headers=self._headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthenticationError(f"endpoint rejected the credential (HTTP {response.status_code})")
            if response.status_code in _RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
                continue
            if response.status_code != 200:
                raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
            raw_text, usage = _parse_wire_response(response)
            self.cache.append(request.request_key, request.model_name, raw_text, usage)
            return ChatResponse(raw_text=raw_text, usage=usage, transport="live")
        raise TransportError(
            f"request {request.request_key[:12]} failed after {self.max_retries} retries: {last_error}"
        )


def _parse_wire_response(response: requests.Response) -> tuple[str, dict[str, int]]:
    try:
        body = response.json()
        raw_text = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat-completion response: {exc}") from exc
    usage = {k: int(v) for k, v in body.get("usage", {}).items() if isinstance(v, (int, float))}
    return raw_text, usage


def complete(request: ChatRequest, transport: Transport) -> ChatResponse:
    """Run one chat completion through the given transport."""
    return transport.complete(request)


@dataclass(frozen=True)
class ExtractionResult:
    """Parsed entity predictions for one sentence.

    ``predicted`` maps entity type to a multiset (list, duplicates preserved)
    of surface strings. A failed parse leaves it empty.
    """

    sentence_id: str
    predicted: dict[str, list[str]]
    parse_status: str


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def parse_extraction(
    response: ChatResponse, scheme: LabelScheme, sentence_id: str = ""
) -> ExtractionResult:
    """Parse the first JSON object out of a model response.

    Models often wrap the JSON in prose or code fences, so the parser scans
    for the first decodable object. Unknown keys are dropped with a warning;
    non-list values are coerced to singleton lists. Coercions mark the result
    ``repaired``; an unparseable response yields ``failed`` with an empty
    prediction. This function is total: every raw_text maps to a result.
    """
    obj = _first_json_object(response.raw_text)
    if obj is None:
        return ExtractionResult(sentence_id=sentence_id, predicted={}, parse_status=PARSE_FAILED)
    repaired = False
    predicted: dict[str, list[str]] = {t: [] for t in scheme.entity_types}
    for key, value in obj.items():
        if key not in predicted:
            logger.warning("sentence %s: dropping unknown entity type %r", sentence_id, key)
            repaired = True
            continue
        if value is None:
            repaired = True
            continue
        if not isinstance(value, list):
            value = [value]
            repaired = True
        surfaces: list[str] = []
        for item in value:
            if not isinstance(item, str):
                item = json.dumps(item, ensure_ascii=False) if isinstance(item, (dict, list)) else str(item)
                repaired = True
            surfaces.append(item)
        predicted[key].extend(surfaces)
    status = PARSE_REPAIRED if repaired else PARSE_OK
    return ExtractionResult(sentence_id=sentence_id, predicted=predicted, parse_status=status)
