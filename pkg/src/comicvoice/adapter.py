"""Client side of the perception/TTS adapter protocol, plus its conformance harness.

The protocol is line-delimited JSON.  A request carries
{"op", "title", "page", "image", "items": [{"id", "bbox": [xmin, ymin, xmax, ymax]}, ...]}
and the matching response carries {"items": [{"id", ...op fields...}, ...]} with
ids in the same order.  A serving process announces itself with a manifest line
before the first response.
"""

from __future__ import annotations

import json
import logging
import random
import select
import subprocess
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

ADAPTER_OPS = ("identify", "intensity", "ocr", "synthesize")

# fields a response item must carry, per op
_REQUIRED_FIELDS = {
    "identify": ("character_id", "confidence"),
    "intensity": ("z",),
    "ocr": ("text",),
    "synthesize": (),  # audio_path on success, error on failure: checked separately
}


class AdapterError(Exception):
    """Transport failure or protocol violation while talking to an adapter."""


@dataclass(frozen=True)
class AdapterManifest:
    name: str
    ops: tuple[str, ...]
    protocol: int
    models: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, rec: dict) -> "AdapterManifest":
        try:
            return cls(
                name=rec["adapter"],
                ops=tuple(rec["ops"]),
                protocol=int(rec["protocol"]),
                models=rec.get("models", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterError(f"malformed manifest line: {rec!r}") from exc


def validate_response(request: dict, response: dict) -> list[dict]:
    """Check arity, id order, and op-specific fields; return the response items."""
    if not isinstance(response, dict) or "items" not in response:
        raise AdapterError(f"response missing items: {response!r}")
    items = response["items"]
    want = [it["id"] for it in request["items"]]
    got = [it.get("id") for it in items]
    if got != want:
        raise AdapterError(f"adapter reordered or dropped items: sent {want}, got {got}")
    for it in items:
        if "error" in it:
            continue
        for fld in _REQUIRED_FIELDS.get(request["op"], ()):
            if fld not in it:
                raise AdapterError(f"response item {it.get('id')} missing field {fld!r}")
        if request["op"] == "synthesize" and "audio_path" not in it:
            raise AdapterError(f"synthesize item {it.get('id')} has neither audio_path nor error")
    return items


class StdioAdapterClient:
    """Talks the protocol to a child process over its stdin/stdout pipes."""

    def __init__(self, argv: list[str], timeout: float = 30.0):
        self.timeout = timeout
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        try:
            self.manifest = AdapterManifest.from_json(self._read_line())
            if self.manifest.protocol != PROTOCOL_VERSION:
                raise AdapterError(
                    f"adapter speaks protocol {self.manifest.protocol}, expected {PROTOCOL_VERSION}"
                )
        except AdapterError:
            self._proc.kill()  # a failed handshake must not leak the child
            self._proc.wait()
            raise

    def _read_line(self) -> dict:
        assert self._proc.stdout is not None
        ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
        if not ready:
            raise AdapterError(f"adapter timed out after {self.timeout}s")
        line = self._proc.stdout.readline()
        if not line:
            raise AdapterError("adapter closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterError(f"adapter wrote a non-JSON line: {line!r}") from exc

    def request(self, op: str, title: str, page: int, image: str, items: list[dict]) -> list[dict]:
        req = {"op": op, "title": title, "page": page, "image": image, "items": items}
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AdapterError("adapter process is gone") from exc
        return validate_response(req, self._read_line())

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "StdioAdapterClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class HttpAdapterClient:
    """Talks the protocol over HTTP: GET /manifest once, then POST / per request."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        import requests

        self._requests = requests
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        try:
            resp = requests.get(self.base_url + "/manifest", timeout=timeout)
            resp.raise_for_status()
        except Exception as exc:
            raise AdapterError(f"manifest fetch failed: {exc}") from exc
        self.manifest = AdapterManifest.from_json(resp.json())
        if self.manifest.protocol != PROTOCOL_VERSION:
            raise AdapterError(
                f"adapter speaks protocol {self.manifest.protocol}, expected {PROTOCOL_VERSION}"
            )

    def request(self, op: str, title: str, page: int, image: str, items: list[dict]) -> list[dict]:
        req = {"op": op, "title": title, "page": page, "image": image, "items": items}
        try:
            resp = self._requests.post(self.base_url + "/", json=req, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
        except Exception as exc:
            raise AdapterError(f"adapter request failed: {exc}") from exc
        return validate_response(req, body)

    def close(self) -> None:
        pass


# --- conformance ----------------------------------------------------------

@dataclass
class ConformanceReport:
    n_requests: int
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _random_request(rng: random.Random, ops: tuple[str, ...]) -> dict:
    op = rng.choice(ops)
    title = f"title{rng.randrange(50):03d}"
    page = rng.randrange(200)
    n = rng.randint(1, 12)
    items = []
    for _ in range(n):
        x0, y0 = rng.randrange(1500), rng.randrange(1000)
        w, h = rng.randint(5, 400), rng.randint(5, 400)
        item = {"id": f"e{rng.randrange(10**8):08d}", "bbox": [x0, y0, x0 + w, y0 + h]}
        if op == "ocr":
            item["text"] = rng.choice(["", "hello", "..."])
        if op == "synthesize":
            item.update(
                text="line", speaker="c01", emotion="neutral", voice="v01", style="plain"
            )
        items.append(item)
    return {"op": op, "title": title, "page": page, "image": f"{title}/{page:03d}.png", "items": items}


def run_conformance(
    client,
    n_requests: int = 1000,
    seed: int = 0,
    ops: tuple[str, ...] | None = None,
) -> ConformanceReport:
    """Fire randomized requests at an adapter and record every protocol violation."""
    if ops is None:
        ops = tuple(op for op in client.manifest.ops if op in ADAPTER_OPS) or ("identify",)
    rng = random.Random(seed)
    report = ConformanceReport(n_requests=n_requests)
    for i in range(n_requests):
        req = _random_request(rng, ops)
        try:
            client.request(req["op"], req["title"], req["page"], req["image"], req["items"])
        except AdapterError as exc:
            report.violations.append(f"request {i}: {exc}")
    return report
