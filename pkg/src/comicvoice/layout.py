"""Page layout analysis: spread splitting, frame reading order, element assignment.

Reading order uses a recursive cut: horizontal gaps across the full group
split it into bands read top to bottom, vertical gaps split a band into
columns read right to left (the default direction), and groups no gap can
separate fall back to (ymin ascending, xmax descending).  Frames overlapping
heavily (IoU at or above the merge threshold) travel as one unit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Literal, Mapping

from .corpus import PageAnnotation
from .geometry import BBox, intersection_area, iou

UNASSIGNED = "UNASSIGNED"

DEFAULT_MERGE_IOU = 0.4

Direction = Literal["rtl", "ltr"]


class CaseDifficulty(Enum):
    EASY = "easy"
    HARD = "hard"


@dataclass(frozen=True)
class SceneGraph:
    """Geometry-only view of one page region: frames, texts, character instances."""

    page_ref: PageAnnotation
    frames: tuple[tuple[str, BBox], ...]
    texts: tuple[tuple[str, BBox, str], ...]
    chars: tuple[tuple[str, BBox], ...]
    kinds: Mapping[str, str]  # char instance id -> "body" | "face"
    region_index: int = 0

    @property
    def n_text(self) -> int:
        return len(self.texts)

    @property
    def n_char(self) -> int:
        return len(self.chars)

    def char_identity(self, instance_id: str) -> str:
        """Gold identity of a character instance, from the source annotation."""
        for b in self.page_ref.bodies:
            if b.id == instance_id:
                return b.character_id
        for f in self.page_ref.faces:
            if f.id == instance_id:
                return f.character_id
        raise KeyError(instance_id)

    def gold_identities(self) -> dict[str, str]:
        return {cid: self.char_identity(cid) for cid, _ in self.chars}

    def body_instances_of(self, character_id: str) -> list[str]:
        ids = {cid for cid, _ in self.chars}
        return [
            b.id for b in self.page_ref.bodies if b.id in ids and b.character_id == character_id
        ]


@dataclass(frozen=True)
class FrameSequence:
    ordered_frames: tuple[str, ...]
    assignment: dict[str, str]  # element id -> frame id or UNASSIGNED


def scene_from_page(page: PageAnnotation) -> SceneGraph:
    chars = [(b.id, b.box) for b in page.bodies] + [(f.id, f.box) for f in page.faces]
    kinds = {b.id: "body" for b in page.bodies} | {f.id: "face" for f in page.faces}
    return SceneGraph(
        page_ref=page,
        frames=tuple((f.id, f.box) for f in page.frames),
        texts=tuple((t.id, t.box, t.content) for t in page.texts),
        chars=tuple(chars),
        kinds=kinds,
    )


# --- spread splitting -----------------------------------------------------

def _region_intervals(width: int, mode: str) -> list[tuple[float, float]]:
    if mode == "two_page":
        return [(width / 2, width), (0, width / 2)]
    if mode == "four_koma":
        qs = [width * i / 4 for i in range(5)]
        return [(qs[3], qs[4]), (qs[2], qs[3]), (qs[1], qs[2]), (qs[0], qs[1])]
    raise ValueError(f"unknown split mode {mode!r}")


def _pick_region(box: BBox, intervals: list[tuple[float, float]]) -> int:
    # larger x-overlap wins; ties go to the earlier region in reading order,
    # which is also the one whose closed lower edge contains the box center
    overlaps = []
    for i, (lo, hi) in enumerate(intervals):
        ov = max(0.0, min(box.xmax, hi) - max(box.xmin, lo))
        overlaps.append((ov, -i))
    best = max(overlaps)
    return -best[1]


def split_spread(page: PageAnnotation, mode: str = "none") -> list[SceneGraph]:
    """Cut a scanned spread into reading-ordered regions, partitioning all elements."""
    whole = scene_from_page(page)
    if mode == "none":
        return [whole]
    intervals = _region_intervals(page.width, mode)
    frames: list[list[tuple[str, BBox]]] = [[] for _ in intervals]
    texts: list[list[tuple[str, BBox, str]]] = [[] for _ in intervals]
    chars: list[list[tuple[str, BBox]]] = [[] for _ in intervals]
    for fid, box in whole.frames:
        frames[_pick_region(box, intervals)].append((fid, box))
    for tid, box, content in whole.texts:
        texts[_pick_region(box, intervals)].append((tid, box, content))
    for cid, box in whole.chars:
        chars[_pick_region(box, intervals)].append((cid, box))
    return [
        SceneGraph(
            page_ref=page,
            frames=tuple(frames[i]),
            texts=tuple(texts[i]),
            chars=tuple(chars[i]),
            kinds=whole.kinds,
            region_index=i,
        )
        for i in range(len(intervals))
    ]


# --- reading order --------------------------------------------------------

def _merge_clusters(frames: Iterable[tuple[str, BBox]], threshold: float) -> list[tuple[BBox, list[tuple[str, BBox]]]]:
    """Group frames whose boxes overlap at IoU >= threshold; transitive, to fixpoint."""
    clusters: list[tuple[BBox, list[tuple[str, BBox]]]] = [
        (box, [(fid, box)]) for fid, box in sorted(frames, key=lambda f: f[0])
    ]
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if iou(clusters[i][0], clusters[j][0]) >= threshold:
                    box = clusters[i][0].union(clusters[j][0])
                    members = clusters[i][1] + clusters[j][1]
                    clusters[i] = (box, members)
                    del clusters[j]
                    merged = True
                    break
            if merged:
                break
    return clusters


def _split_groups(boxes: list[tuple[BBox, int]], axis: str) -> list[list[tuple[BBox, int]]]:
    """Partition by maximal gaps along an axis; groups returned low-to-high."""
    if axis == "y":
        key = lambda b: (b.ymin, b.ymax)
    else:
        key = lambda b: (b.xmin, b.xmax)
    items = sorted(boxes, key=lambda t: key(t[0]))
    groups: list[list[tuple[BBox, int]]] = []
    current: list[tuple[BBox, int]] = []
    reach = None
    for item in items:
        lo, hi = key(item[0])
        if reach is None or lo < reach:
            current.append(item)
            reach = hi if reach is None else max(reach, hi)
        else:
            groups.append(current)
            current = [item]
            reach = hi
    if current:
        groups.append(current)
    return groups


def _fallback_sort(boxes: list[tuple[BBox, int]], rtl: bool) -> list[tuple[BBox, int]]:
    if rtl:
        return sorted(boxes, key=lambda t: (t[0].ymin, -t[0].xmax, t[1]))
    return sorted(boxes, key=lambda t: (t[0].ymin, t[0].xmin, t[1]))


def _recursive_order(boxes: list[tuple[BBox, int]], rtl: bool) -> list[int]:
    if len(boxes) <= 1:
        return [k for _, k in boxes]
    bands = _split_groups(boxes, "y")
    if len(bands) > 1:
        out: list[int] = []
        for band in bands:
            out.extend(_recursive_order(band, rtl))
        return out
    cols = _split_groups(boxes, "x")
    if len(cols) > 1:
        if rtl:
            cols.reverse()
        out = []
        for col in cols:
            out.extend(_recursive_order(col, rtl))
        return out
    return [k for _, k in _fallback_sort(boxes, rtl)]


def order_frames(
    scene: SceneGraph,
    direction: Direction = "rtl",
    merge_iou: float = DEFAULT_MERGE_IOU,
) -> list[str]:
    """Reading order over the scene's frame ids."""
    if not scene.frames:
        return []
    rtl = direction == "rtl"
    clusters = _merge_clusters(scene.frames, merge_iou)
    keyed = [(box, k) for k, (box, _members) in enumerate(clusters)]
    cluster_order = _recursive_order(keyed, rtl)
    ordered: list[str] = []
    for k in cluster_order:
        members = clusters[k][1]
        member_boxes = [(box, i) for i, (_fid, box) in enumerate(members)]
        for i in (m for _, m in _fallback_sort(member_boxes, rtl)):
            ordered.append(members[i][0])
    return ordered


def assign_elements(scene: SceneGraph, ordered: list[str]) -> FrameSequence:
    """Map every text and character instance to the frame holding its center."""
    frame_boxes = dict(scene.frames)
    missing = set(frame_boxes) - set(ordered)
    if missing:
        raise ValueError(f"ordered frame list misses frames: {sorted(missing)}")
    assignment: dict[str, str] = {}
    elements = [(tid, box) for tid, box, _ in scene.texts] + list(scene.chars)
    for eid, box in elements:
        cx, cy = box.center
        containing = [fid for fid in ordered if frame_boxes[fid].contains_point(cx, cy)]
        if not containing:
            assignment[eid] = UNASSIGNED
        elif len(containing) == 1:
            assignment[eid] = containing[0]
        else:
            assignment[eid] = max(
                containing,
                key=lambda fid: (intersection_area(box, frame_boxes[fid]), -ordered.index(fid)),
            )
    return FrameSequence(ordered_frames=tuple(ordered), assignment=assignment)


def sequence_scene(
    scene: SceneGraph,
    direction: Direction = "rtl",
    merge_iou: float = DEFAULT_MERGE_IOU,
) -> FrameSequence:
    return assign_elements(scene, order_frames(scene, direction, merge_iou))


def reading_sort(items: list[tuple[str, BBox]], direction: Direction = "rtl") -> list[str]:
    """Order elements within one frame: top to bottom, then right to left (rtl)."""
    if direction == "rtl":
        key = lambda t: (t[1].ymin, -t[1].xmax, t[0])
    else:
        key = lambda t: (t[1].ymin, t[1].xmin, t[0])
    return [eid for eid, _ in sorted(items, key=key)]


def classify_case(
    text_id: str,
    gt_speaker: str,
    scene: SceneGraph,
    seq: FrameSequence,
) -> CaseDifficulty:
    """Easy iff a body of the speaker shares the text's frame (UNASSIGNED is a frame too)."""
    if text_id not in seq.assignment:
        raise ValueError(f"text {text_id!r} not present in the frame sequence")
    text_frame = seq.assignment[text_id]
    for body_id in scene.body_instances_of(gt_speaker):
        if seq.assignment.get(body_id) == text_frame:
            return CaseDifficulty.EASY
    return CaseDifficulty.HARD
