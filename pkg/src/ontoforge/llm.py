"""Chat-completion backends: OpenAI-compatible, Ollama, and offline replay."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import httpx

from .prompts import Message

log = logging.getLogger(__name__)

API_KEY_ENV = "ONTOFORGE_OPENAI_KEY"
CHARS_PER_TOKEN = 4
KINDS = ("openai_compatible", "ollama", "replay")


class LlmError(Exception):
    pass


class ConfigError(LlmError):
    pass


class TransportError(LlmError):
    pass


class BadStatus(LlmError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body[:500]}")


class FixtureMiss(LlmError):
    def __init__(self, digest: str, model_id: str = ""):
        self.digest = digest
        super().__init__(f"no replay record for digest {digest} (model {model_id!r})")


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    model_id: str
    endpoint: str = ""
    temperature: float = 0.0
    seed: Optional[int] = None
    timeout: float = 120.0
    max_retries: int = 0
    fixture: Optional[str] = None
    concurrency: int = 1
    requests_per_minute: Optional[float] = None
    warmup: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"backend kind must be one of {KINDS}, got {self.kind!r}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.kind == "replay" and not self.fixture:
            raise ConfigError("replay backend requires a fixture path")
        if self.kind != "replay" and not self.endpoint:
            raise ConfigError(f"{self.kind} backend requires an endpoint")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    model_id: str
    attempt: int = 1
    seed: Optional[int] = None
    estimated: bool = False

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


def _message_dicts(messages: Iterable) -> list[dict]:
    out = []
    for m in messages:
        if isinstance(m, Message):
            out.append(m.as_dict())
        else:
            out.append({"role": m["role"], "content": m["content"]})
    return out


def canonical_request(model_id: str, temperature: float, seed: Optional[int], messages) -> dict:
    return {
        "model": model_id,
        "temperature": float(temperature),
        "seed": seed,
        "messages": _message_dicts(messages),
    }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_digest(request: dict) -> str:
    return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / CHARS_PER_TOKEN)


class Backend:
    """Shared plumbing: concurrency gate, request throttle, warm-up."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._gate = threading.BoundedSemaphore(config.concurrency)
        self._throttle_lock = threading.Lock()
        self._next_slot = 0.0
        self._warmed = not config.warmup

    @contextmanager
    def _slot(self):
        with self._gate:
            rpm = self.config.requests_per_minute
            if rpm:
                with self._throttle_lock:
                    now = time.monotonic()
                    wait = self._next_slot - now
                    self._next_slot = max(now, self._next_slot) + 60.0 / rpm
                if wait > 0:
                    time.sleep(wait)
            yield

    def chat(self, messages: Sequence, seed: Optional[int] = None, attempt: int = 1) -> LlmResponse:
        if not messages:
            raise ValueError("messages must be non-empty")
        seed = self.config.seed if seed is None else seed
        if not self._warmed:
            self._warmed = True
            log.info("discarding warm-up call to %s", self.config.model_id)
            with self._slot():
                self._exchange(messages, seed, attempt)
        with self._slot():
            return self._exchange(messages, seed, attempt)

    def _exchange(self, messages, seed, attempt) -> LlmResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _HttpBackend(Backend):
    path = ""

    def __init__(self, config: BackendConfig, client: Optional[httpx.Client] = None):
        super().__init__(config)
        self._own_client = client is None
        self.client = client or httpx.Client(timeout=config.timeout)

    def headers(self) -> dict:
        return {}

    def body(self, messages, seed) -> dict:
        raise NotImplementedError

    def _post(self, messages, seed) -> tuple[dict, float]:
        url = self.config.endpoint.rstrip("/") + self.path
        payload = self.body(messages, seed)
        start = time.perf_counter()
        try:
            resp = self.client.post(url, json=payload, headers=self.headers(), timeout=self.config.timeout)
        except httpx.HTTPError as exc:
            raise TransportError(f"{url}: {exc}") from exc
        latency = time.perf_counter() - start
        if not 200 <= resp.status_code < 300:
            raise BadStatus(resp.status_code, resp.text)
        try:
            return resp.json(), latency
        except ValueError as exc:
            raise TransportError(f"{url}: response is not JSON") from exc

    def _response(self, messages, text, prompt_tokens, completion_tokens, latency, seed, attempt) -> LlmResponse:
        estimated = prompt_tokens is None or completion_tokens is None
        if estimated:
            log.warning("%s returned no usage counts; estimating at %d chars/token", self.config.model_id, CHARS_PER_TOKEN)
            prompt_tokens = estimate_tokens("".join(m["content"] for m in _message_dicts(messages)))
            completion_tokens = estimate_tokens(text)
        return LlmResponse(text, int(prompt_tokens), int(completion_tokens), latency, self.config.model_id, attempt, seed, estimated)

    def close(self) -> None:
        if self._own_client:
            self.client.close()


class OpenAICompatibleBackend(_HttpBackend):
    path = "/v1/chat/completions"

    def headers(self) -> dict:
        key = os.environ.get(API_KEY_ENV)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def body(self, messages, seed) -> dict:
        body = {
            "model": self.config.model_id,
            "messages": _message_dicts(messages),
            "temperature": self.config.temperature,
        }
        if seed is not None:
            body["seed"] = seed
        return body

    def _exchange(self, messages, seed, attempt) -> LlmResponse:
        data, latency = self._post(messages, seed)
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {canonical_json(data)[:300]}") from exc
        usage = data.get("usage") or {}
        return self._response(messages, text, usage.get("prompt_tokens"), usage.get("completion_tokens"), latency, seed, attempt)


class OllamaBackend(_HttpBackend):
    path = "/api/chat"

    def body(self, messages, seed) -> dict:
        options = {"temperature": self.config.temperature}
        if seed is not None:
            options["seed"] = seed
        return {"model": self.config.model_id, "messages": _message_dicts(messages), "stream": False, "options": options}

    def _exchange(self, messages, seed, attempt) -> LlmResponse:
        data, latency = self._post(messages, seed)
        try:
            text = data["message"]["content"] or ""
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed chat payload: {canonical_json(data)[:300]}") from exc
        return self._response(messages, text, data.get("prompt_eval_count"), data.get("eval_count"), latency, seed, attempt)


class ReplayBackend(Backend):
    """Serves recorded responses keyed by request digest; never touches the network."""

    def __init__(self, config: BackendConfig):
        super().__init__(replace(config, warmup=False))
        self.records = load_fixture(config.fixture)

    def _exchange(self, messages, seed, attempt) -> LlmResponse:
        request = canonical_request(self.config.model_id, self.config.temperature, seed, messages)
        digest = request_digest(request)
        rec = self.records.get(digest)
        if rec is None:
            raise FixtureMiss(digest, self.config.model_id)
        resp = rec["response"]
        return LlmResponse(
            text=resp["text"],
            prompt_tokens=int(resp["prompt_tokens"]),
            completion_tokens=int(resp["completion_tokens"]),
            latency=resp.get("latency_ms", 0) / 1000.0,
            model_id=self.config.model_id,
            attempt=attempt,
            seed=seed,
            estimated=bool(resp.get("estimated", False)),
        )


def load_fixture(path) -> dict:
    records = {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"replay fixture {p} does not exist")
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise ConfigError(f"{p}:{lineno}: not JSON") from exc
            records.setdefault(rec["digest"], rec)
    return records


def fixture_entry(config: BackendConfig, messages, response: LlmResponse, seed: Optional[int] = None) -> dict:
    seed = response.seed if seed is None else seed
    request = canonical_request(config.model_id, config.temperature, seed, messages)
    return {
        "digest": request_digest(request),
        "request": request,
        "response": {
            "text": response.text,
            "prompt_tokens": response.prompt_tokens,
            "completion_tokens": response.completion_tokens,
            "latency_ms": int(round(response.latency * 1000)),
        },
    }


class FixtureRecorder:
    """Appends replay records to a JSON-lines file through one lock."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, config: BackendConfig, messages, response: LlmResponse) -> dict:
        entry = fixture_entry(config, messages, response)
        line = canonical_json(entry) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
        return entry


def record_fixture(path, config: BackendConfig, messages, response: LlmResponse) -> dict:
    return FixtureRecorder(path).record(config, messages, response)


class RecordingBackend(Backend):
    """Wraps a live backend and records every exchange for later replay."""

    def __init__(self, inner: Backend, recorder: FixtureRecorder):
        super().__init__(replace(inner.config, warmup=False, concurrency=max(inner.config.concurrency, 1)))
        self.inner = inner
        self.recorder = recorder

    def chat(self, messages, seed=None, attempt=1) -> LlmResponse:
        resp = self.inner.chat(messages, seed=seed, attempt=attempt)
        self.recorder.record(self.inner.config, messages, resp)
        return resp

    def close(self) -> None:
        self.inner.close()


def make_backend(config: BackendConfig, client: Optional[httpx.Client] = None) -> Backend:
    if config.kind == "replay":
        return ReplayBackend(config)
    if config.kind == "ollama":
        return OllamaBackend(config, client)
    return OpenAICompatibleBackend(config, client)


def chat(config: BackendConfig, messages, client: Optional[httpx.Client] = None) -> LlmResponse:
    backend = make_backend(config, client)
    try:
        return backend.chat(messages)
    finally:
        backend.close()


@dataclass
class RetryOutcome:
    response: LlmResponse
    failures: list = field(default_factory=list)
    valid: bool = True

    @property
    def attempts(self) -> list:
        return [*self.failures, self.response]

    @property
    def prompt_tokens(self) -> int:
        return sum(r.prompt_tokens for r in self.attempts)

    @property
    def completion_tokens(self) -> int:
        return sum(r.completion_tokens for r in self.attempts)

    @property
    def latency(self) -> float:
        return sum(r.latency for r in self.attempts)


def chat_with_retry(
    backend: Backend,
    messages,
    validator: Callable[[str], bool],
    max_retries: Optional[int] = None,
) -> RetryOutcome:
    """Re-ask with seed ``base + attempt_index`` until ``validator`` accepts.

    Running out of retries is not an error: the last response comes back
    with ``valid=False`` and every attempt's usage is kept.
    """
    retries = backend.config.max_retries if max_retries is None else max_retries
    if retries < 0:
        raise ValueError("max_retries must be >= 0")
    base = backend.config.seed
    failures = []
    for index in range(retries + 1):
        seed = base if index == 0 else (base or 0) + index
        resp = backend.chat(messages, seed=seed, attempt=index + 1)
        if validator(resp.text):
            return RetryOutcome(resp, failures, True)
        failures.append(resp)
    last = failures.pop()
    return RetryOutcome(last, failures, False)
