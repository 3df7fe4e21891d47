"""Client for every LLM role (referee, polisher, solver, extractor).

One wire protocol: a chat-completion-style HTTP endpoint (message list in,
text out). Replies are cached on disk keyed by a content hash of the request,
so large runs are resumable and replays are exact. Deterministic stubs ship
here as first-class citizens: the whole pipeline, tests included, runs with no
network access.

Environment variables: EVOLMATH_API_KEY, EVOLMATH_BASE_URL, EVOLMATH_MODEL.
"""

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

ENV_API_KEY = "EVOLMATH_API_KEY"
ENV_BASE_URL = "EVOLMATH_BASE_URL"
ENV_MODEL = "EVOLMATH_MODEL"

ROLES = ("referee", "polisher", "solver", "extractor")


class GatewayError(RuntimeError):
    """A request failed permanently (after retries, or non-retryable)."""


class GatewayConfigError(ValueError):
    """Missing/invalid gateway configuration, raised at startup."""


class TransientGatewayError(GatewayError):
    """Retryable failure: connection trouble, timeouts, 429, 5xx."""


class ScoreParseError(ValueError):
    """The referee reply contained no usable 0-10 score."""


@dataclass
class GatewayConfig:
    base_url: str
    api_key: str
    model_id: str
    max_in_flight: int = 4
    retry_limit: int = 3
    timeout: float = 60.0
    cache_dir: str | None = None
    backoff_base: float = 0.5  # seconds; doubles per retry

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise GatewayConfigError("max_in_flight must be >= 1")
        if self.retry_limit < 0:
            raise GatewayConfigError("retry_limit must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "GatewayConfig":
        missing = [v for v in (ENV_API_KEY, ENV_BASE_URL, ENV_MODEL) if not os.environ.get(v)]
        if missing:
            raise GatewayConfigError(f"missing environment variables: {', '.join(missing)}")
        return cls(
            base_url=os.environ[ENV_BASE_URL].rstrip("/"),
            api_key=os.environ[ENV_API_KEY],
            model_id=os.environ[ENV_MODEL],
            **overrides,
        )


def _http_transport(config: GatewayConfig):
    import requests

    def send(payload: dict) -> str:
        try:
            resp = requests.post(
                f"{config.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {config.api_key}"},
                json=payload,
                timeout=config.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientGatewayError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientGatewayError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()["choices"][0]["message"]["content"]

    return send


class LLMGateway:
    """Thread-safe gateway with an in-flight cap, retries, and a disk cache."""

    def __init__(self, config: GatewayConfig, transport=None):
        self.config = config
        self._transport = transport or _http_transport(config)
        self._limiter = threading.Semaphore(config.max_in_flight)
        self._cache_lock = threading.Lock()
        if config.cache_dir:
            Path(config.cache_dir).mkdir(parents=True, exist_ok=True)

    def _request_key(self, role: str, prompt: str, params: dict) -> str:
        body = json.dumps(
            {"model": self.config.model_id, "role": role, "prompt": prompt, "params": params},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(body.encode("utf-8")).hexdigest()

    def _cache_path(self, key: str) -> Path | None:
        if not self.config.cache_dir:
            return None
        return Path(self.config.cache_dir) / f"{key}.json"

    def _cache_read(self, path: Path | None) -> str | None:
        if path is None or not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["reply"]

    def _cache_write(self, path: Path | None, request: dict, reply: str) -> None:
        if path is None:
            return
        with self._cache_lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(
                json.dumps({"request": request, "reply": reply}, ensure_ascii=False),
                encoding="utf-8",
            )
            os.replace(tmp, path)

    def complete(self, role: str, prompt: str, params: dict | None = None) -> str:
        if role not in ROLES:
            raise GatewayError(f"unknown role {role!r}")
        params = params or {}
        key = self._request_key(role, prompt, params)
        path = self._cache_path(key)
        cached = self._cache_read(path)
        if cached is not None:
            return cached

        payload = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": prompt}],
            **{k: v for k, v in params.items() if k != "item_id"},
        }
        attempts = self.config.retry_limit + 1
        last_exc = None
        with self._limiter:
            for attempt in range(attempts):
                try:
                    reply = self._transport(payload)
                except TransientGatewayError as exc:
                    last_exc = exc
                    if attempt + 1 < attempts:
                        delay = self.config.backoff_base * (2 ** attempt)
                        log.warning("transient gateway failure (%s); retry in %.1fs", exc, delay)
                        if delay > 0:
                            time.sleep(delay)
                    continue
                self._cache_write(path, {"role": role, "prompt": prompt, "params": params}, reply)
                return reply
        raise GatewayError(f"gave up after {attempts} attempts: {last_exc}")


# ---------------------------------------------------------------------------
# Referee score parsing
# ---------------------------------------------------------------------------

_MARKER_RE = re.compile(r"(?:score|difficulty|rating|rated|rate)\s*[:=]?\s*(\d{1,2})\b", re.I)
_STANDALONE_RE = re.compile(r"(?<![\d/.])(\d{1,2})(?!\d)")


def parse_referee_score(reply: str) -> int:
    """First 0-10 integer after a score marker, else the last standalone 0-10."""
    for m in _MARKER_RE.finditer(reply):
        value = int(m.group(1))
        if 0 <= value <= 10:
            return value
    candidates = [int(m.group(1)) for m in _STANDALONE_RE.finditer(reply)]
    candidates = [v for v in candidates if 0 <= v <= 10]
    if candidates:
        return candidates[-1]
    raise ScoreParseError(f"no 0-10 score in reply: {reply[:80]!r}")


# ---------------------------------------------------------------------------
# Stubs (network-free, deterministic)
# ---------------------------------------------------------------------------


class EchoStub:
    """Returns the prompt unchanged; useful as an identity polisher."""

    def __init__(self):
        self.calls = 0

    def complete(self, role, prompt, params=None):
        self.calls += 1
        return prompt


class ConstantRefereeStub:
    """Always awards the same difficulty score."""

    def __init__(self, score: int):
        if not 0 <= score <= 10:
            raise ValueError("score must be within 0..10")
        self.score = score
        self.calls = 0

    def complete(self, role, prompt, params=None):
        self.calls += 1
        return f"Score: {self.score}/10"


class ScriptedStub:
    """Replies drawn from a per-role script; falls back to a default reply."""

    def __init__(self, by_role: dict | None = None, default: str = ""):
        self.by_role = by_role or {}
        self.default = default
        self.calls = 0

    def complete(self, role, prompt, params=None):
        self.calls += 1
        reply = self.by_role.get(role, self.default)
        return reply(prompt, params) if callable(reply) else reply


@dataclass(frozen=True)
class AnswerKey:
    q1: int | None
    final: int
    trap: int | None


def benchmark_answer_key(items) -> dict:
    """item id -> ground truth (and trap) for the solver stubs."""
    return {
        item.id: AnswerKey(q1=item.q1_answer, final=item.final_answer, trap=item.trap_answer)
        for item in items
    }


class _SolverStub:
    """Base for stub solvers that answer from a benchmark's answer key.

    The evaluation harness passes the item id through ``params`` so stubs can
    look up the ground truth; real gateways ignore that key.
    """

    def __init__(self, key: dict):
        self.key = key
        self.calls = 0

    @classmethod
    def from_items(cls, items):
        return cls(benchmark_answer_key(items))

    def _answers(self, entry: AnswerKey) -> tuple:
        raise NotImplementedError

    def complete(self, role, prompt, params=None):
        self.calls += 1
        entry = self.key[(params or {})["item_id"]]
        q1, final = self._answers(entry)
        lines = []
        if q1 is not None:
            lines.append(f"Q1: {q1}")
        lines.append(f"Final: {final}")
        return "\n".join(lines)


class OracleSolverStub(_SolverStub):
    """Solves every problem exactly (upper-bound reference)."""

    def _answers(self, entry):
        return entry.q1, entry.final


class ShortcutSolverStub(_SolverStub):
    """Falls for the trap whenever one exists; otherwise answers correctly."""

    def _answers(self, entry):
        final = entry.trap if entry.trap is not None else entry.final
        return entry.q1, final


class TrapOffsetSolverStub(_SolverStub):
    """Wrong on trap items but never on the trap value itself (trap + 1)."""

    def _answers(self, entry):
        final = entry.trap + 1 if entry.trap is not None else entry.final
        if final == entry.final:
            final += 1  # stay wrong even if trap + 1 collides with the truth
        return entry.q1, final
