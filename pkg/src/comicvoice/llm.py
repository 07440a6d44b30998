"""LLM backends: live chat endpoint, record/replay cassette, scripted heuristic.

All backends implement complete(prompt) -> raw text.  The cassette keys
recordings by a hash of the rendered prompt, so replay runs are byte-stable
and need no network.  The scripted backend answers like the frame-distance
rule and is the offline stand-in for a real model.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

from .attribution import DISPLAY_UNKNOWN, LlmBackend, PagePrompt
from .baselines import ABSTAIN, frame_distance

logger = logging.getLogger(__name__)


class BackendError(Exception):
    """Transport-level failure of an LLM backend (triggers the fallback path)."""


class CassetteMiss(Exception):
    """Strict replay found no recording for the prompt; aborts the run."""


def prompt_key(prompt: PagePrompt) -> str:
    return hashlib.sha256(prompt.render().encode("utf-8")).hexdigest()


@dataclass
class LiveChatBackend:
    """OpenAI-style chat completions endpoint; temperature pinned to 0."""

    endpoint: str
    model: str
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 60.0
    max_concurrent: int = 2
    temperature: float = 0.0
    _gate: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._gate = threading.Semaphore(self.max_concurrent)

    def complete(self, prompt: PagePrompt) -> str:
        import os

        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.api_key_env} is not set")
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_preamble},
                {"role": "user", "content": prompt.render()},
            ],
        }
        with self._gate:
            try:
                resp = requests.post(
                    self.endpoint,
                    json=body,
                    headers={"Authorization": f"Bearer {key}"},
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                payload = resp.json()
                return payload["choices"][0]["message"]["content"]
            except Exception as exc:
                raise BackendError(f"chat endpoint failed: {exc}") from exc


class ScriptedBackend:
    """Deterministic heuristic: speakers follow the frame-distance rule.

    Emotions echo the intensity channel (strong instances answer "surprise");
    summaries are a running line count so memory paths stay exercised.
    """

    strong_emotion = "surprise"

    def complete(self, prompt: PagePrompt) -> str:
        scene, seq = prompt.scene, prompt.seq
        if scene is None or seq is None:
            raise BackendError("scripted backend needs the structured prompt fields")
        display: dict[str, str] = {}
        z_of: dict[str, Optional[float]] = {}
        for block in prompt.frame_blocks + (prompt.unassigned_block,):
            for ch in block.chars:
                display[ch.instance_id] = ch.display_name
                z_of[ch.instance_id] = ch.z
        rules = frame_distance(scene, seq, identities={})
        speakers: dict[str, str] = {}
        emotions: dict[str, str] = {}
        for pred in rules:
            if pred.instance_id == ABSTAIN:
                speakers[pred.text_id] = DISPLAY_UNKNOWN
                emotions[pred.text_id] = "neutral"
                continue
            speakers[pred.text_id] = display[pred.instance_id]
            z = z_of.get(pred.instance_id)
            emotions[pred.text_id] = self.strong_emotion if z is not None and z > 0 else "neutral"
        n = len(speakers)
        page = prompt.page_index
        global_summary = (
            f"{prompt.memory_global} Page {page}: {n} lines spoken.".strip()
        )
        local_summary = f"Page {page}: {n} lines across {len(prompt.frame_blocks)} frames."
        return json.dumps(
            {
                "speakers": speakers,
                "emotions": emotions,
                "global_summary": global_summary,
                "local_summary": local_summary,
            },
            ensure_ascii=False,
        )


@dataclass
class CassetteBackend:
    """Replay (or record) responses keyed by the rendered prompt's hash."""

    path: str | Path
    mode: Literal["replay_strict", "replay_lenient", "record"] = "replay_strict"
    inner: Optional[LlmBackend] = None
    _store: dict[str, str] = field(init=False, repr=False, default_factory=dict)
    _lock: threading.Lock = field(init=False, repr=False, default_factory=threading.Lock)

    def __post_init__(self) -> None:
        self.path = Path(self.path)
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._store[rec["key"]] = rec["response"]
        if self.mode == "record" and self.inner is None:
            raise ValueError("record mode needs an inner backend to record")

    def complete(self, prompt: PagePrompt) -> str:
        key = prompt_key(prompt)
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        if self.mode == "record":
            response = self.inner.complete(prompt)
            with self._lock:
                self._store[key] = response
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "key": key,
                                "title": prompt.title_id,
                                "page": prompt.page_index,
                                "response": response,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
            return response
        if self.mode == "replay_lenient":
            logger.warning(
                "cassette miss for %s page %d; using scripted fallback",
                prompt.title_id, prompt.page_index,
            )
            return (self.inner or ScriptedBackend()).complete(prompt)
        raise CassetteMiss(
            f"no recording for {prompt.title_id} page {prompt.page_index} (key {key[:12]}...)"
        )
