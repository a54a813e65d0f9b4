"""Text generation and scoring providers.

Two implementations of the same contract: a deterministic scripted mock for
tests and demos, and a thin HTTP client for completion-style APIs. Token
accounting everywhere uses whitespace pseudo-tokens (see
:func:`agentspec.monitor.count_tokens`); real model tokenizers are
intentionally out of the picture so tests have stable units.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .errors import BackendError, CapabilityError, MockScriptError
from .monitor import count_tokens, truncate_tokens


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    stop_sequences: tuple[str, ...] = ()
    max_tokens: int = 256
    temperature: float = 0.0
    seed: int | None = None


@dataclass(frozen=True)
class Completion:
    text: str
    stop_hit: str | None = None
    finished: bool = False


class Backend(Protocol):
    def complete(self, req: CompletionRequest) -> Completion: ...

    def score(self, context: str, continuation: str) -> list[float]:
        """Per-token log-probabilities of ``continuation`` given ``context``.

        May raise :class:`CapabilityError` when scoring is unsupported.
        """
        ...


def apply_stops(text: str, stops: tuple[str, ...]) -> tuple[str, str | None]:
    """Cut ``text`` at the earliest stop occurrence.

    Ties at the same offset go to the longest stop. The returned prefix
    contains no stop sequence.
    """
    best: tuple[int, int, str] | None = None
    for stop in stops:
        if not stop:
            continue
        at = text.find(stop)
        if at < 0:
            continue
        key = (at, -len(stop), stop)
        if best is None or key < best:
            best = key
    if best is None:
        return text, None
    return text[: best[0]], best[2]


@dataclass
class _Record:
    body: str
    suffix: str | None = None


def _parse_script(text: str, origin: str = "<script>") -> tuple[str, list[_Record]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # the file's final newline is not part of the last record
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines) or not lines[idx].startswith("mode:"):
        raise MockScriptError(f"{origin}: first line must be 'mode: ordered' or 'mode: suffix'", idx + 1)
    mode = lines[idx].split(":", 1)[1].strip()
    if mode not in ("ordered", "suffix"):
        raise MockScriptError(f"{origin}: unknown mode {mode!r}", idx + 1)
    idx += 1
    if idx >= len(lines) or lines[idx].strip() != "---":
        raise MockScriptError(f"{origin}: expected '---' after the mode line", idx + 1)

    records: list[_Record] = []
    chunk: list[str] = []
    starts: list[int] = []
    start_line = idx + 2
    for n, line in enumerate(lines[idx + 1 :], start=idx + 2):
        if line.strip() == "---":
            records.append(_Record("\n".join(chunk)))
            starts.append(start_line)
            chunk = []
            start_line = n + 1
        else:
            chunk.append(line)
    records.append(_Record("\n".join(chunk)))
    starts.append(start_line)

    if mode == "suffix":
        for rec, at in zip(records, starts):
            head, _, rest = rec.body.partition("\n")
            if not head.startswith("suffix:"):
                raise MockScriptError(f"{origin}: suffix record must begin with 'suffix:'", at)
            key = head.split(":", 1)[1].strip().replace("\\n", "\n")
            if not key:
                raise MockScriptError(f"{origin}: empty suffix key", at)
            rec.suffix = key
            rec.body = rest
    return mode, records


class MockBackend:
    """Replays scripted responses; thread-safe and fully deterministic.

    ``ordered`` scripts are consumed one record per ``complete`` call;
    ``suffix`` scripts pick the record whose key is the longest suffix of
    the request prompt. Scoring comes from an optional table keyed by
    ``(context_hash, continuation)`` with a constant per-token fallback.
    """

    def __init__(
        self,
        mode: str = "ordered",
        records: list[_Record] | None = None,
        score_table: dict[tuple[str, str], list[float]] | None = None,
        default_logprob: float = -2.0,
        exhausted_ok: bool = False,
        context_hasher: Callable[[str], str] | None = None,
    ):
        self.mode = mode
        self.records = records or []
        self.score_table = dict(score_table or {})
        self.default_logprob = default_logprob
        self.exhausted_ok = exhausted_ok
        self.context_hasher = context_hasher or (lambda s: hashlib.sha256(s.encode()).hexdigest()[:12])
        self.calls = 0
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def ordered(cls, responses: list[str], **kwargs) -> "MockBackend":
        return cls(mode="ordered", records=[_Record(r) for r in responses], **kwargs)

    @classmethod
    def suffix(cls, table: dict[str, str], **kwargs) -> "MockBackend":
        return cls(mode="suffix", records=[_Record(body, suffix=key) for key, body in table.items()], **kwargs)

    def _next_record(self, prompt: str) -> str | None:
        if self.mode == "ordered":
            if self._cursor >= len(self.records):
                if self.exhausted_ok:
                    return None
                raise BackendError(f"mock script exhausted after {len(self.records)} responses")
            rec = self.records[self._cursor]
            self._cursor += 1
            return rec.body
        best: _Record | None = None
        for rec in self.records:
            if rec.suffix and prompt.endswith(rec.suffix):
                if best is None or len(rec.suffix) > len(best.suffix or ""):
                    best = rec
        if best is None:
            if self.exhausted_ok:
                return None
            raise BackendError("mock script has no record matching the prompt suffix")
        return best.body

    def complete(self, req: CompletionRequest) -> Completion:
        with self._lock:
            self.calls += 1
            raw = self._next_record(req.prompt)
        if raw is None:
            return Completion("", None, finished=True)
        cut, stop = apply_stops(raw, req.stop_sequences)
        if count_tokens(cut) > req.max_tokens:
            return Completion(truncate_tokens(cut, req.max_tokens), None, finished=False)
        if stop is not None:
            return Completion(cut, stop, finished=False)
        return Completion(cut, None, finished=True)

    def score(self, context: str, continuation: str) -> list[float]:
        if not continuation:
            raise BackendError("cannot score an empty continuation")
        key = (self.context_hasher(context), continuation)
        hit = self.score_table.get(key)
        if hit is not None:
            return list(hit)
        n = max(1, count_tokens(continuation))
        return [self.default_logprob] * n


def load_mock_script(path: str | Path, **kwargs) -> MockBackend:
    """Build a :class:`MockBackend` from a ``---``-separated script file."""
    path = Path(path)
    mode, records = _parse_script(path.read_text(encoding="utf-8"), origin=str(path))
    return MockBackend(mode=mode, records=records, **kwargs)


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass
class HttpConfig:
    base_url: str
    api_key: str | None = None
    model: str | None = None
    timeout: float = 60.0

    @classmethod
    def from_env(cls, config_file: str | None = None) -> "HttpConfig":
        """Resolve settings from AGENTSPEC_* variables, then a JSON file.

        Recognized: AGENTSPEC_API_URL, AGENTSPEC_API_KEY, AGENTSPEC_MODEL,
        AGENTSPEC_CONFIG (path to a JSON object with url/api_key/model keys).
        """
        file_cfg: dict = {}
        path = config_file or os.environ.get("AGENTSPEC_CONFIG")
        if path and Path(path).exists():
            file_cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        url = os.environ.get("AGENTSPEC_API_URL") or file_cfg.get("url")
        if not url:
            raise BackendError("no endpoint configured: set AGENTSPEC_API_URL or provide a config file")
        return cls(
            base_url=url.rstrip("/"),
            api_key=os.environ.get("AGENTSPEC_API_KEY") or file_cfg.get("api_key"),
            model=os.environ.get("AGENTSPEC_MODEL") or file_cfg.get("model"),
            timeout=float(file_cfg.get("timeout", 60.0)),
        )


class HttpBackend:
    """Client for a minimal completion API.

    ``POST {base}/completions`` with ``{model?, prompt, stop, max_tokens,
    temperature, seed?}`` returning ``{text, finish_reason}``; optional
    ``POST {base}/logprobs`` with ``{model?, context, continuation}``
    returning ``{token_logprobs: [...]}``. A missing logprobs endpoint is a
    :class:`CapabilityError`, which callers treat as "scoring unsupported".
    """

    def __init__(self, config: HttpConfig | None = None, session=None):
        if config is None:
            config = HttpConfig.from_env()
        self.config = config
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def _post(self, route: str, payload: dict):
        url = f"{self.config.base_url}{route}"
        try:
            resp = self.session.post(url, json=payload, headers=self._headers(), timeout=self.config.timeout)
        except Exception as exc:  # transport layer: DNS, refused, timeout
            raise BackendError(f"transport failure calling {url}: {exc}", retryable=True) from exc
        return resp

    def complete(self, req: CompletionRequest) -> Completion:
        payload = {
            "prompt": req.prompt,
            "stop": list(req.stop_sequences),
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        if self.config.model:
            payload["model"] = self.config.model
        resp = self._post("/completions", payload)
        if resp.status_code != 200:
            raise BackendError(
                f"completion endpoint returned {resp.status_code}: {resp.text[:200]}",
                retryable=resp.status_code in _RETRYABLE_STATUS,
            )
        body = resp.json()
        text = body.get("text", "")
        finish = body.get("finish_reason", "stop")
        # Providers differ on whether stop text leaks into the payload. Cut
        # locally so the Completion invariant holds regardless.
        cut, stop = apply_stops(text, req.stop_sequences)
        if stop is not None:
            return Completion(cut, stop, finished=False)
        return Completion(cut, None, finished=finish != "length")

    def score(self, context: str, continuation: str) -> list[float]:
        if not continuation:
            raise BackendError("cannot score an empty continuation")
        payload: dict = {"context": context, "continuation": continuation}
        if self.config.model:
            payload["model"] = self.config.model
        resp = self._post("/logprobs", payload)
        if resp.status_code == 404:
            raise CapabilityError("backend exposes no logprobs endpoint")
        if resp.status_code != 200:
            raise BackendError(
                f"logprobs endpoint returned {resp.status_code}: {resp.text[:200]}",
                retryable=resp.status_code in _RETRYABLE_STATUS,
            )
        return [float(v) for v in resp.json()["token_logprobs"]]
