"""Server side of the line-JSON adapter protocol.

A request is {"op", "title", "page", "image", "items": [{"id", ...}, ...]}
and the matching response is {"items": [...]} with ids preserved in order.
Anything unparseable or structurally wrong gets {"error": ...} back and the
serving loop keeps going; only a per-item failure becomes a per-item error.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable

logger = logging.getLogger(__name__)

# Wire contract shared with the pipeline's client side; these must not drift.
PROTOCOL_VERSION = 1
ADAPTER_OPS = ("identify", "intensity", "ocr", "synthesize")


@dataclass(frozen=True)
class AdapterRequest:
    op: str
    title: str
    page: int
    image: str
    items: tuple[dict, ...]


Handler = Callable[[AdapterRequest], list[dict]]


def build_manifest(
    name: str,
    ops: tuple[str, ...],
    models: dict | None = None,
    concurrency: int = 1,
) -> dict:
    """Handshake record: who serves, which ops, and how many requests in flight."""
    return {
        "adapter": name,
        "ops": list(ops),
        "protocol": PROTOCOL_VERSION,
        "models": models or {},
        "concurrency": concurrency,
    }


def _parse_request(rec: object, ops: tuple[str, ...]) -> AdapterRequest | str:
    """Return a request, or the message explaining why this is not one."""
    if not isinstance(rec, dict):
        return f"request must be a JSON object, got {type(rec).__name__}"
    op = rec.get("op")
    if not isinstance(op, str):
        return "request has no op"
    if op not in ops:
        return f"unsupported op {op!r}; serving: {', '.join(ops)}"
    items = rec.get("items")
    if not isinstance(items, list):
        return "request has no items list"
    for i, item in enumerate(items):
        if not isinstance(item, dict) or not isinstance(item.get("id"), str):
            return f"item {i} has no string id"
    try:
        page = int(rec.get("page", 0))
    except (TypeError, ValueError):
        return f"page is not an integer: {rec.get('page')!r}"
    return AdapterRequest(
        op=op,
        title=str(rec.get("title", "")),
        page=page,
        image=str(rec.get("image", "")),
        items=tuple(items),
    )


def handle_request(req: AdapterRequest, handlers: dict[str, Handler]) -> dict:
    """Run one request through its op handler."""
    try:
        items = handlers[req.op](req)
    except Exception as exc:  # a broken handler must not kill the serving loop
        logger.warning("%s handler failed: %s", req.op, exc)
        return {"error": f"{req.op} handler failed: {exc}"}
    want = [it["id"] for it in req.items]
    got = [it.get("id") for it in items]
    if got != want:  # the wire contract forbids reordering or dropping items
        logger.error("%s handler broke id order: sent %s, got %s", req.op, want, got)
        return {"error": f"{req.op} handler broke item order"}
    return {"items": items}


def handle_line(raw: str | bytes, handlers: dict[str, Handler]) -> dict:
    """One request line in, one response object out; never raises."""
    try:
        rec = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        return {"error": f"request is not JSON: {exc}"}
    parsed = _parse_request(rec, tuple(handlers))
    if isinstance(parsed, str):
        return {"error": parsed}
    return handle_request(parsed, handlers)
