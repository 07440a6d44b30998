"""The echo profile: fixed, structurally valid answers for every op.

Echo responses carry no information about the page; they exist so that the
protocol plumbing (ordering, arity, error channels) can be exercised without
loading any model.  The pipeline treats OTHERS as "not in the reference
roster", so echo-identify predicting OTHERS everywhere is the honest null
answer rather than a fabricated identity.
"""

from __future__ import annotations

from .protocol import AdapterRequest, Handler

# Matches the pipeline's label for faces outside the reference roster.
OTHERS = "OTHERS"


def _identify(req: AdapterRequest) -> list[dict]:
    return [{"id": it["id"], "character_id": OTHERS, "confidence": 0.5} for it in req.items]


def _intensity(req: AdapterRequest) -> list[dict]:
    return [{"id": it["id"], "z": 0.0} for it in req.items]


def _ocr(req: AdapterRequest) -> list[dict]:
    # Literal echo: return the text the caller already attached, if any.
    return [{"id": it["id"], "text": str(it.get("text", ""))} for it in req.items]


def _synthesize(req: AdapterRequest) -> list[dict]:
    return [{"id": it["id"], "audio_path": f"audio/{it['id']}.wav"} for it in req.items]


def echo_handlers() -> dict[str, Handler]:
    """Deterministic placeholders for all four ops."""
    return {
        "identify": _identify,
        "intensity": _intensity,
        "ocr": _ocr,
        "synthesize": _synthesize,
    }
