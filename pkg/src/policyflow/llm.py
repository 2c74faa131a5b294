"""Chat-completion gateway: live HTTP or mock backends, disk cache, output parsing."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import BackendError, LabelOutOfVocabulary, MockMiss, ParseFailure

log = logging.getLogger(__name__)

# sentinel for an unknown sender/receiver
BOTTOM = None

DEFAULT_TEMPERATURE = 0.5
DEFAULT_TOP_P = 0.5


@dataclass(frozen=True)
class ChatRequest:
    system_content: str
    user_content: str
    model: str
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    # which agent issued the request; used by mock fixtures, not part of the cache key
    agent: str = ""

    def __post_init__(self):
        if not self.system_content or not self.user_content:
            raise ValueError("system and user content must be non-empty")
        if not (0.0 <= self.temperature <= 1.0 and 0.0 <= self.top_p <= 1.0):
            raise ValueError("temperature and top_p must lie in [0, 1]")

    def messages(self) -> List[dict]:
        return [
            {"role": "system", "content": self.system_content},
            {"role": "user", "content": self.user_content},
        ]


@dataclass(frozen=True)
class ChatResponse:
    text: str
    cached: bool
    backend: str


def cache_key(backend: str, req: ChatRequest) -> str:
    payload = json.dumps(
        [backend, req.model, req.temperature, req.top_p, req.system_content, req.user_content],
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class MockBackend:
    """Replays recorded responses.

    Lookup order: ``<fixtures>/<digest>.txt`` keyed by :func:`cache_key`, then
    the rules of ``<fixtures>/manifest.json``. A rule is an object with a
    ``response`` and optional ``agent``, ``model``, ``system_contains`` and
    ``user_contains`` filters (strings or lists of strings, all must match).
    The first matching rule wins.
    """

    name = "mock"

    def __init__(self, fixtures_dir=None, rules: Optional[Sequence[dict]] = None):
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.rules = list(rules or [])
        if self.fixtures_dir is not None:
            manifest = self.fixtures_dir / "manifest.json"
            if manifest.exists():
                self.rules.extend(json.loads(manifest.read_text(encoding="utf-8")))
        self.calls = 0

    @staticmethod
    def _all_in(needles, haystack: str) -> bool:
        if needles is None:
            return True
        if isinstance(needles, str):
            needles = [needles]
        return all(n in haystack for n in needles)

    def _match(self, rule: dict, req: ChatRequest) -> bool:
        if "agent" in rule and rule["agent"] != req.agent:
            return False
        if "model" in rule and rule["model"] != req.model:
            return False
        return (self._all_in(rule.get("system_contains"), req.system_content)
                and self._all_in(rule.get("user_contains"), req.user_content))

    def __call__(self, req: ChatRequest) -> str:
        self.calls += 1
        if self.fixtures_dir is not None:
            path = self.fixtures_dir / f"{cache_key(self.name, req)}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        for rule in self.rules:
            if self._match(rule, req):
                return rule["response"]
        raise MockMiss(f"no fixture for {req.agent or 'request'}: {req.user_content[:80]!r}")


class LiveBackend:
    """OpenAI-compatible chat-completions client with bounded retries."""

    name = "live"
    RETRY_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})

    def __init__(self, base_url: str, api_key_env: str, *, attempts: int = 3,
                 backoff: float = 1.0, timeout: float = 60.0, transport=None, sleep=time.sleep):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def __call__(self, req: ChatRequest) -> str:
        import httpx

        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.api_key_env} is not set")
        body = {"model": req.model, "messages": req.messages(),
                "temperature": req.temperature, "top_p": req.top_p}
        headers = {"Authorization": f"Bearer {key}"}
        last = None
        for attempt in range(self.attempts):
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
                if resp.status_code in self.RETRY_STATUS:
                    last = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    content = resp.json()["choices"][0]["message"]["content"]
                    if not isinstance(content, str):
                        raise BackendError("backend returned non-text content")
                    return content
            except httpx.HTTPStatusError as exc:
                raise BackendError(f"HTTP {exc.response.status_code}") from exc
            except httpx.TransportError as exc:
                last = str(exc)
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendError(f"unexpected response shape: {exc}") from exc
            if attempt + 1 < self.attempts:
                self._sleep(self.backoff * 2 ** attempt + random.uniform(0, self.backoff))
        raise BackendError(f"giving up after {self.attempts} attempts: {last}")


class Gateway:
    """Routes requests to a backend, bounded in-flight, with an optional disk cache."""

    def __init__(self, backend, cache_dir=None, max_in_flight: int = 4):
        self.backend = backend
        self.backend_name = getattr(backend, "name", type(backend).__name__)
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._write_lock = threading.Lock()

    def _cache_path(self, req: ChatRequest) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{cache_key(self.backend_name, req)}.txt"

    def complete(self, req: ChatRequest) -> ChatResponse:
        path = self._cache_path(req)
        if path is not None and path.exists():
            return ChatResponse(path.read_text(encoding="utf-8"), True, self.backend_name)
        with self._slots:
            text = self.backend(req)
        if path is not None:
            with self._write_lock:
                atomic_write_text(path, text)
        return ChatResponse(text, False, self.backend_name)


# --- structured output ----------------------------------------------------

_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n?(.*?)\n?```$", re.DOTALL)


def strip_fences(text: str) -> str:
    text = text.strip()
    match = _FENCE.match(text)
    if match:
        text = match.group(1).strip()
    return text


def _is_none(text: str) -> bool:
    return text.strip().strip('"').strip("'").strip(".").lower() == "none"


def _load_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    # tolerate prose around a single JSON object
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            return json.loads(text[start:end + 1])
        except json.JSONDecodeError:
            pass
    raise ParseFailure(f"not valid JSON: {text[:120]!r}")


def _entity_list(value, what: str) -> List[Optional[str]]:
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseFailure(f"{what} must be a string or list of strings")
    return [v.strip() for v in value if v.strip()]


@dataclass(frozen=True)
class RawFlow:
    """One extracted flow object before sender/receiver expansion."""

    senders: Tuple[str, ...]
    data_types: Tuple[str, ...]
    receivers: Tuple[str, ...]


def parse_flow_output(text: str) -> List[RawFlow]:
    body = strip_fences(text)
    if _is_none(body):
        return []
    data = _load_json(body)
    if not isinstance(data, dict) or "Output" not in data:
        raise ParseFailure("expected an object with an 'Output' key")
    items = data["Output"]
    if isinstance(items, dict):
        items = [items]
    if not isinstance(items, list):
        raise ParseFailure("'Output' must be a list")
    flows = []
    for item in items:
        if not isinstance(item, dict):
            raise ParseFailure("flow entries must be objects")
        types = _entity_list(item.get("data_type"), "data_type")
        if not types:
            continue
        flows.append(RawFlow(
            tuple(_entity_list(item.get("data_sender"), "data_sender")),
            tuple(types),
            tuple(_entity_list(item.get("data_receiver"), "data_receiver")),
        ))
    return flows


def render_flow_output(flows: Iterable[RawFlow]) -> str:
    """Inverse of :func:`parse_flow_output`; used for fixtures and round trips."""
    flows = list(flows)
    if not flows:
        return "None"
    out = []
    for f in flows:
        sender = f.senders[0] if len(f.senders) == 1 else list(f.senders)
        out.append({"data_sender": sender if f.senders else "",
                    "data_type": list(f.data_types),
                    "data_receiver": list(f.receivers)})
    return json.dumps({"Output": out}, ensure_ascii=False)


_IGNORED_LABEL_KEYS = {"datatype", "inputtext", "dataflow", "reason", "explanation"}


def parse_label_output(text: str, allowed: Iterable[str], key: Optional[str] = None) -> str:
    """Pull the single label out of a classifier answer.

    Matching against ``allowed`` is case-insensitive and the canonical casing
    is returned. ``None`` maps to ``Unspecified`` when that label is allowed.
    """
    allowed = list(allowed)
    if not allowed:
        raise ValueError("allowed labels must be non-empty")
    canon = {a.lower(): a for a in allowed}
    body = strip_fences(text)
    if _is_none(body):
        if "unspecified" in canon:
            return canon["unspecified"]
        raise LabelOutOfVocabulary("None", allowed)

    data = _load_json(body)
    if isinstance(data, dict) and "Output" in data:
        data = data["Output"]
    if isinstance(data, list):
        if not data:
            raise ParseFailure("empty Output list")
        data = data[0]
    if not isinstance(data, dict):
        raise ParseFailure("expected a JSON object with a label field")

    if key is not None:
        if key not in data:
            raise ParseFailure(f"missing label field {key!r}")
        label = data[key]
    else:
        candidates = [v for k, v in data.items() if k.lower() not in _IGNORED_LABEL_KEYS]
        if not candidates:
            raise ParseFailure("no label field found")
        label = candidates[0]
    if not isinstance(label, str):
        raise ParseFailure("label must be a string")
    if _is_none(label):
        if "unspecified" in canon:
            return canon["unspecified"]
        raise LabelOutOfVocabulary(label, allowed)
    found = canon.get(label.strip().lower())
    if found is None:
        raise LabelOutOfVocabulary(label, allowed)
    return found
