"""Extraction / content-fill backends.

Every backend answers a request document ``{"task": ..., "input": {...}}``
with a response document (a JSON object). ``history`` carries the earlier
turns of the same dialogue; replaying backends ignore it.
"""

from __future__ import annotations

import json
import os
import threading
import urllib.error
import urllib.request
from pathlib import Path
from typing import Optional, Protocol

from .errors import BackendError, IoError

TRANSCRIPT_FORMAT = "scenforge.transcript/1"

ENV_URL = "SCENFORGE_LLM_URL"
ENV_KEY = "SCENFORGE_LLM_API_KEY"
ENV_MODEL = "SCENFORGE_LLM_MODEL"

TASK_INSTRUCTIONS = {
    "participants": (
        "Read the accident report. Reply with JSON {\"npcs\": [{\"id\", \"category\", \"description\", "
        "\"color\"?}], \"obstacles\": [{\"id\", \"kind\", \"description\", \"dimensions\"?}], "
        "\"av\": {\"description\", \"location\": \"junction\"|\"road\"|null, \"maneuver\", "
        "\"min_lanes\"?, \"features\"?, \"signal_state\"?}}. Use only facts stated in the report."),
    "relative_position": (
        "Classify where the participant is relative to the autonomous vehicle using codes R1-R7 "
        "(see the codebook in the input). Reply {\"rel_pos\": code or null, \"lane_alignment\": "
        "\"same_lane\"|\"different_lane\"|\"unspecified\"}. Use null when the text does not decide it."),
    "events": (
        "List the participant's actions in report order as short phrases from the action codebook. "
        "Reply {\"actions\": [phrase, ...], \"parameters\": [{\"target_speed\"?, \"duration\"?} or null, ...]}."),
    "fill_content": (
        "Produce OpenSCENARIO 1.0 XML fragments for every slot in the input. Reply "
        "{\"fragments\": {slot: xml}} where each fragment is a <Fragment> element."),
}


def request_key(request: dict) -> str:
    return json.dumps(request, sort_keys=True, separators=(",", ":"))


class ExtractionBackend(Protocol):
    def complete(self, request: dict, history: Optional[list] = None) -> dict: ...


class FixtureBackend:
    """Replays recorded request/response exchanges."""

    def __init__(self, exchanges: list[dict]):
        self._responses = {}
        for ex in exchanges:
            try:
                self._responses[request_key(ex["request"])] = ex["response"]
            except (KeyError, TypeError):
                raise BackendError("transcript exchange lacks request/response") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureBackend":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(f"cannot read transcript {path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise BackendError(f"transcript {path} is not JSON: {exc}") from None
        if not isinstance(data, dict) or data.get("format") != TRANSCRIPT_FORMAT:
            raise BackendError(f"{path} is not a {TRANSCRIPT_FORMAT} transcript")
        return cls(data.get("exchanges", []))

    @classmethod
    def merge(cls, *backends: "FixtureBackend") -> "FixtureBackend":
        merged = cls([])
        for b in backends:
            merged._responses.update(b._responses)
        return merged

    def complete(self, request: dict, history: Optional[list] = None) -> dict:
        try:
            return json.loads(json.dumps(self._responses[request_key(request)]))
        except KeyError:
            raise BackendError(f"no recorded response for {request.get('task')!r} request") from None


class RecordingBackend:
    """Wraps another backend and records the exchanges as a transcript."""

    def __init__(self, inner: ExtractionBackend):
        self.inner = inner
        self.exchanges: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, request: dict, history: Optional[list] = None) -> dict:
        response = self.inner.complete(request, history)
        with self._lock:
            self.exchanges.append({"request": request, "response": response})
        return response

    def transcript(self) -> dict:
        return {"format": TRANSCRIPT_FORMAT, "exchanges": list(self.exchanges)}


class HttpBackend:
    """Chat-completion endpoint; URL, key and model come from the environment."""

    def __init__(self, url: Optional[str] = None, api_key: Optional[str] = None,
                 model: Optional[str] = None, timeout: float = 60.0):
        self.url = url or os.environ.get(ENV_URL)
        self.api_key = api_key or os.environ.get(ENV_KEY)
        self.model = model or os.environ.get(ENV_MODEL, "default")
        self.timeout = timeout
        if not self.url:
            raise BackendError(f"no endpoint configured (set {ENV_URL})")

    def payload(self, request: dict, history: Optional[list] = None) -> dict:
        messages = [{"role": "system", "content": TASK_INSTRUCTIONS.get(request.get("task"), "")}]
        for past_request, past_response in history or ():
            messages.append({"role": "user", "content": json.dumps(past_request["input"])})
            messages.append({"role": "assistant", "content": json.dumps(past_response)})
        messages.append({"role": "user", "content": json.dumps(request.get("input", {}))})
        return {"model": self.model, "messages": messages, "temperature": 0,
                "response_format": {"type": "json_object"}}

    def complete(self, request: dict, history: Optional[list] = None) -> dict:
        body = json.dumps(self.payload(request, history)).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise BackendError(f"backend request failed: {exc}") from None
        try:
            content = raw["choices"][0]["message"]["content"]
            out = json.loads(content)
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise BackendError(f"backend reply is not the expected JSON: {exc}") from None
        if not isinstance(out, dict):
            raise BackendError("backend reply is not a JSON object")
        return out
