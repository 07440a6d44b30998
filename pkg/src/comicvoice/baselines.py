"""Rule-based speaker attribution baselines.

Both rules pick the character instance nearest to the text box; they differ in
which instances are allowed to compete.  Distances are center-to-center by
default, box-edge distance sits behind the metric flag for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping

from .geometry import BBox, center_distance, edge_distance
from .layout import UNASSIGNED, FrameSequence, SceneGraph

ABSTAIN = "ABSTAIN"
UNKNOWN = "UNKNOWN"

Metric = Literal["center", "edge"]


@dataclass(frozen=True)
class SpeakerPrediction:
    text_id: str
    instance_id: str  # char instance id or ABSTAIN
    character_id: str  # resolved identity or UNKNOWN
    method_tag: str


def _distance(a: BBox, b: BBox, metric: Metric) -> float:
    return center_distance(a, b) if metric == "center" else edge_distance(a, b)


def _nearest(text_box: BBox, candidates: list[tuple[str, BBox]], metric: Metric) -> str:
    best = min(candidates, key=lambda c: (_distance(text_box, c[1], metric), c[0]))
    return best[0]


def _resolve(instance_id: str, identities: Mapping[str, str]) -> str:
    return identities.get(instance_id, UNKNOWN)


def short_distance(
    scene: SceneGraph,
    identities: Mapping[str, str],
    metric: Metric = "center",
) -> list[SpeakerPrediction]:
    """Attribute each text to the nearest character instance on the page."""
    out = []
    for text_id, text_box, _content in scene.texts:
        if not scene.chars:
            out.append(SpeakerPrediction(text_id, ABSTAIN, UNKNOWN, "rule_short"))
            continue
        inst = _nearest(text_box, list(scene.chars), metric)
        out.append(SpeakerPrediction(text_id, inst, _resolve(inst, identities), "rule_short"))
    return out


def frame_distance(
    scene: SceneGraph,
    seq: FrameSequence,
    identities: Mapping[str, str],
    metric: Metric = "center",
) -> list[SpeakerPrediction]:
    """Attribute within the text's frame, widening to neighbor frames when empty.

    Fallback order for a frame with no characters: previous frame in reading
    order, then next, then the whole page.
    """
    by_frame: dict[str, list[tuple[str, BBox]]] = {}
    for cid, box in scene.chars:
        by_frame.setdefault(seq.assignment[cid], []).append((cid, box))

    order = list(seq.ordered_frames)
    out = []
    for text_id, text_box, _content in scene.texts:
        if not scene.chars:
            out.append(SpeakerPrediction(text_id, ABSTAIN, UNKNOWN, "rule_frame"))
            continue
        frame = seq.assignment[text_id]
        pools: list[list[tuple[str, BBox]]] = [by_frame.get(frame, [])]
        if frame != UNASSIGNED:
            pos = order.index(frame)
            if pos > 0:
                pools.append(by_frame.get(order[pos - 1], []))
            if pos + 1 < len(order):
                pools.append(by_frame.get(order[pos + 1], []))
        pools.append(list(scene.chars))
        candidates = next(pool for pool in pools if pool)
        inst = _nearest(text_box, candidates, metric)
        out.append(SpeakerPrediction(text_id, inst, _resolve(inst, identities), "rule_frame"))
    return out
