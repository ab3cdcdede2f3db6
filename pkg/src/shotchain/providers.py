"""Model backends: response parsers, HTTP clients, scripted provider.

The live chat client speaks the OpenAI chat-completions protocol with
images attached as base64 data URLs. The embedding client POSTs to
/embed_text. The scripted provider replays canned responses from a
rules file so the whole engine runs without any model, and records
every call it serves for test assertions.
"""

from __future__ import annotations

import base64
import enum
import json
import logging
import os
import re
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import jsonschema
import numpy as np
import requests

from .errors import (
    AuthError,
    DimMismatchError,
    InvalidInputError,
    MalformedResponseError,
    ScriptedRuleError,
    TransportError,
    UnparseableAnswerError,
    UnparseableConfidenceError,
    UnparseableDecisionError,
)
from .frames import FramePayload
from .prompts import PromptKind

log = logging.getLogger(__name__)

CHAT_PATH = "/v1/chat/completions"
EMBED_PATH = "/embed_text"

_BACKOFF_BASE = 0.5
_BACKOFF_CAP = 8.0


class GlanceDecision(enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


_DECISION_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_LETTER_RE = re.compile(r"\b([A-E])\b")
_JSON_BLOCK_RE = re.compile(r"\{[^{}]*\}")
_CONFIDENCE_RE = re.compile(r"['\"]?confidence['\"]?\s*:\s*['\"]?([123])['\"]?")


def parse_glance_decision(text: str) -> GlanceDecision:
    """First yes/no token in the first 16 characters decides: yes means
    answer from global frames, no means walk the shots."""
    match = _DECISION_RE.search(text[:16])
    if match is None:
        raise UnparseableDecisionError(f"no yes/no in {text[:40]!r}")
    return (
        GlanceDecision.GLOBAL
        if match.group(1).lower() == "yes"
        else GlanceDecision.LOCAL
    )


def parse_answer_letter(text: str, allowed: tuple[str, ...]) -> str:
    """First standalone letter from the allowed set."""
    if not allowed:
        raise InvalidInputError("allowed letter set is empty")
    for match in _LETTER_RE.finditer(text):
        if match.group(1) in allowed:
            return match.group(1)
    raise UnparseableAnswerError(f"no letter from {allowed} in {text[:60]!r}")


def parse_confidence(text: str) -> int:
    """Confidence level 1..3 from the first brace-delimited object.
    Accepts single or double quotes and bare digits."""
    block = _JSON_BLOCK_RE.search(text)
    if block is None:
        raise UnparseableConfidenceError(f"no confidence object in {text[:60]!r}")
    match = _CONFIDENCE_RE.search(block.group(0))
    if match is None:
        raise UnparseableConfidenceError(f"no level 1..3 in {block.group(0)[:60]!r}")
    return int(match.group(1))


@dataclass(frozen=True, slots=True)
class ChatRequest:
    """One fully rendered model call. ``frame_indices`` names the frames
    backing the prompt even when no pixel payloads are attached, so
    traces and scripted runs can account for frame usage."""

    prompt_text: str
    frame_indices: tuple[int, ...] = ()
    images: tuple[FramePayload, ...] = ()
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        for prev, cur in zip(self.images, self.images[1:]):
            if cur.index < prev.index:
                raise InvalidInputError("images must be in ascending frame order")


@dataclass(frozen=True, slots=True)
class ProviderConfig:
    base_url: str
    model: str = ""
    api_key_env: str | None = None
    timeout: float = 60.0
    retries: int = 2

    def __post_init__(self) -> None:
        if self.retries < 0:
            raise InvalidInputError("retries must be >= 0")
        if self.timeout <= 0:
            raise InvalidInputError("timeout must be positive")


class ChatClient(Protocol):
    wants_images: bool

    def chat(self, kind: PromptKind, round_no: int, request: ChatRequest) -> str: ...


class TextEmbedder(Protocol):
    def embed_text(self, text: str) -> np.ndarray: ...


def _retry_post(
    session: requests.Session,
    url: str,
    payload: dict,
    headers: dict[str, str],
    cfg: ProviderConfig,
    request_id: str,
    sleep: Callable[[float], None],
) -> requests.Response:
    last: TransportError | None = None
    for attempt in range(cfg.retries + 1):
        if attempt:
            sleep(min(_BACKOFF_BASE * 2 ** (attempt - 1), _BACKOFF_CAP))
        try:
            resp = session.post(url, json=payload, headers=headers, timeout=cfg.timeout)
        except requests.RequestException as exc:
            last = TransportError(f"{url}: {exc}", request_id=request_id)
            log.warning("request %s attempt %d failed: %s", request_id, attempt + 1, exc)
            continue
        if resp.status_code in (401, 403):
            raise AuthError(f"{url}: HTTP {resp.status_code}", request_id=request_id)
        if resp.status_code == 429 or resp.status_code >= 500:
            last = TransportError(
                f"{url}: HTTP {resp.status_code}", request_id=request_id
            )
            continue
        if resp.status_code != 200:
            raise MalformedResponseError(
                f"{url}: HTTP {resp.status_code}", request_id=request_id
            )
        return resp
    assert last is not None
    raise last


class HttpChatProvider:
    """OpenAI-compatible chat client with bounded retries."""

    wants_images = True

    def __init__(
        self,
        cfg: ProviderConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._session = session or requests.Session()
        self._sleep = sleep

    def chat(self, kind: PromptKind, round_no: int, request: ChatRequest) -> str:
        request_id = uuid.uuid4().hex[:12]
        content: list[dict] = [{"type": "text", "text": request.prompt_text}]
        for img in request.images:
            data_url = f"data:{img.mime};base64,{base64.b64encode(img.data).decode()}"
            content.append({"type": "image_url", "image_url": {"url": data_url}})
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        url = self.cfg.base_url.rstrip("/") + CHAT_PATH
        resp = _retry_post(
            self._session, url, payload, headers, self.cfg, request_id, self._sleep
        )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"{url}: unexpected completion shape ({exc})", request_id=request_id
            ) from exc


class HttpTextEmbedder:
    """Client for the /embed_text service. Vectors come back
    L2-normalized and are checked against the expected dimension."""

    def __init__(
        self,
        cfg: ProviderConfig,
        expected_dim: int | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.expected_dim = expected_dim
        self._session = session or requests.Session()
        self._sleep = sleep

    def embed_text(self, text: str) -> np.ndarray:
        if not text:
            raise InvalidInputError("cannot embed empty text")
        request_id = uuid.uuid4().hex[:12]
        url = self.cfg.base_url.rstrip("/") + EMBED_PATH
        resp = _retry_post(
            self._session, url, {"texts": [text]}, {}, self.cfg, request_id, self._sleep
        )
        try:
            vec = np.asarray(resp.json()["embeddings"][0], dtype=np.float64)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"{url}: unexpected embedding shape ({exc})", request_id=request_id
            ) from exc
        if vec.ndim != 1 or vec.size == 0:
            raise DimMismatchError(f"{url}: embedding shape {vec.shape}")
        if self.expected_dim is not None and vec.size != self.expected_dim:
            raise DimMismatchError(
                f"{url}: got {vec.size}-dim embedding, expected {self.expected_dim}"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise MalformedResponseError(
                f"{url}: zero embedding", request_id=request_id
            )
        return vec / norm


SCRIPT_SCHEMA: dict = {
    "type": "object",
    "properties": {
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "kind": {
                        "enum": [k.value for k in PromptKind],
                    },
                    "round": {"type": "integer", "minimum": 0},
                    "contains": {"type": "string"},
                    "response": {"type": "string"},
                },
                "required": ["kind", "response"],
                "additionalProperties": False,
            },
        },
        "embeddings": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "text": {"type": "string"},
                    "vector": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 1,
                    },
                },
                "required": ["text", "vector"],
                "additionalProperties": False,
            },
        },
        "default_embedding": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 1,
        },
    },
    "required": ["rules"],
    "additionalProperties": False,
}


@dataclass(frozen=True, slots=True)
class ScriptedCall:
    """One chat call the scripted provider served."""

    kind: PromptKind
    round_no: int
    frame_indices: tuple[int, ...]
    prompt_text: str
    response: str


@dataclass
class ScriptedProvider:
    """Deterministic stand-in for both backends, driven by a rules file.

    A chat request is answered by the first rule matching its kind,
    round (when the rule pins one), and prompt substring (when the rule
    pins one). Embeddings are exact-text lookups with an optional
    default. Anything unmatched raises, so tests fail loudly when the
    orchestrator asks something unexpected.
    """

    rules: list[dict]
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    default_embedding: np.ndarray | None = None
    calls: list[ScriptedCall] = field(default_factory=list)
    embed_calls: list[str] = field(default_factory=list)

    wants_images = False

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_dict(cls, spec: dict) -> "ScriptedProvider":
        try:
            jsonschema.validate(spec, SCRIPT_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise InvalidInputError(f"bad scripted rules: {exc.message}") from exc
        embeddings = {
            entry["text"]: np.asarray(entry["vector"], dtype=np.float64)
            for entry in spec.get("embeddings", [])
        }
        default = spec.get("default_embedding")
        return cls(
            rules=spec["rules"],
            embeddings=embeddings,
            default_embedding=(
                np.asarray(default, dtype=np.float64) if default is not None else None
            ),
        )

    def chat(self, kind: PromptKind, round_no: int, request: ChatRequest) -> str:
        for rule in self.rules:
            if rule["kind"] != kind.value:
                continue
            if "round" in rule and rule["round"] != round_no:
                continue
            if "contains" in rule and rule["contains"] not in request.prompt_text:
                continue
            self.calls.append(
                ScriptedCall(
                    kind=kind,
                    round_no=round_no,
                    frame_indices=request.frame_indices,
                    prompt_text=request.prompt_text,
                    response=rule["response"],
                )
            )
            return rule["response"]
        raise ScriptedRuleError(
            f"no rule for kind={kind.value} round={round_no}", request_id=None
        )

    def embed_text(self, text: str) -> np.ndarray:
        if not text:
            raise InvalidInputError("cannot embed empty text")
        self.embed_calls.append(text)
        vec = self.embeddings.get(text, self.default_embedding)
        if vec is None:
            raise ScriptedRuleError(f"no embedding for {text[:60]!r}", request_id=None)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise InvalidInputError(f"scripted embedding for {text[:40]!r} is zero")
        return vec / norm


@dataclass(frozen=True, slots=True)
class Providers:
    """The two backends the orchestrator needs, bundled."""

    chat: ChatClient
    embedder: TextEmbedder

    @classmethod
    def scripted(cls, provider: ScriptedProvider) -> "Providers":
        return cls(chat=provider, embedder=provider)
