"""LLM speaker/emotion attribution with rolling plot memory.

Each page becomes one prompt: frames in reading order, each holding its texts
and characters, then unassigned elements, then the running memory (global
story summary followed by the previous-page summary).  The model must answer
with one JSON object keyed by text id.  Failures retry, then fall back to the
frame-distance rule with neutral emotions so every page yields a total result.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Protocol

from .baselines import UNKNOWN, frame_distance
from .corpus import EMOTION_LABELS
from .layout import UNASSIGNED, FrameSequence, SceneGraph, reading_sort
from .perception import OTHERS, CharPrediction, EmotionIntensity

logger = logging.getLogger(__name__)

DEFAULT_GLOBAL_BUDGET = 2000
DEFAULT_LOCAL_BUDGET = 800

DISPLAY_UNKNOWN = "unknown person"

DEFAULT_PREAMBLE = (
    "You narrate comic pages. Each prompt shows one page: its frames in "
    "reading order, the dialogue texts inside each frame, and the characters "
    "drawn there. Decide who speaks every text line and what emotion it "
    "carries, keeping names consistent with the running story memory."
)

OUTPUT_SCHEMA_INSTRUCTIONS = (
    "Answer with a single JSON object of the form "
    '{"speakers": {"<text_id>": "<character name>"}, '
    '"emotions": {"<text_id>": "<one of: neutral, surprise, anger, happiness, '
    'sadness, disgust, fear>"}, '
    '"global_summary": "<updated story summary, oldest events first>", '
    '"local_summary": "<what happens on this page>"}. '
    "Cover every text id exactly once."
)

# common surface forms folded onto the 7-label vocabulary
EMOTION_ALIASES = {
    "angry": "anger",
    "rage": "anger",
    "mad": "anger",
    "happy": "happiness",
    "joy": "happiness",
    "joyful": "happiness",
    "sad": "sadness",
    "sorrow": "sadness",
    "surprised": "surprise",
    "shock": "surprise",
    "shocked": "surprise",
    "scared": "fear",
    "afraid": "fear",
    "fearful": "fear",
    "disgusted": "disgust",
    "calm": "neutral",
    "none": "neutral",
}


class ParseFailure(Exception):
    """The model's raw output contained no usable JSON object."""


@dataclass(frozen=True)
class MemoryState:
    global_summary: str = ""
    local_summary: str = ""
    page_cursor: int = -1
    global_budget: int = DEFAULT_GLOBAL_BUDGET
    local_budget: int = DEFAULT_LOCAL_BUDGET

    def check(self) -> None:
        if len(self.global_summary) > self.global_budget:
            raise ValueError(
                f"global summary over budget: {len(self.global_summary)} > {self.global_budget}"
            )
        if len(self.local_summary) > self.local_budget:
            raise ValueError(
                f"local summary over budget: {len(self.local_summary)} > {self.local_budget}"
            )


@dataclass(frozen=True)
class PromptChar:
    instance_id: str
    display_name: str
    z: Optional[float]  # None when the intensity channel is disabled


@dataclass(frozen=True)
class PromptText:
    text_id: str
    content: str


@dataclass(frozen=True)
class FrameBlock:
    frame_id: str
    texts: tuple[PromptText, ...]
    chars: tuple[PromptChar, ...]


@dataclass(frozen=True)
class PagePrompt:
    title_id: str
    page_index: int
    system_preamble: str
    frame_blocks: tuple[FrameBlock, ...]
    unassigned_block: FrameBlock
    memory_global: str
    memory_local: str
    output_schema_instructions: str
    # carried for scripted backends; never rendered
    scene: SceneGraph = field(compare=False, repr=False, default=None)
    seq: FrameSequence = field(compare=False, repr=False, default=None)

    def expected_text_ids(self) -> tuple[str, ...]:
        ids = []
        for block in self.frame_blocks + (self.unassigned_block,):
            ids.extend(t.text_id for t in block.texts)
        return tuple(ids)

    def render(self) -> str:
        lines = [self.system_preamble, ""]
        lines.append("### Memory")
        lines.append(f"Story so far: {self.memory_global or '(empty)'}")
        lines.append(f"Previous page: {self.memory_local or '(empty)'}")
        lines.append("")
        lines.append(f"### Page {self.page_index} of {self.title_id}")

        def block_lines(label: str, block: FrameBlock) -> None:
            lines.append(label)
            for ch in block.chars:
                if ch.z is None:
                    lines.append(f"  character {ch.display_name} (instance {ch.instance_id})")
                else:
                    tag = "STRONG" if ch.z > 0 else "NEUTRAL"
                    lines.append(
                        f"  character {ch.display_name} (instance {ch.instance_id})"
                        f" intensity {tag} (z={ch.z:+.1f})"
                    )
            for t in block.texts:
                lines.append(f'  text {t.text_id}: "{t.content}"')
            if not block.chars and not block.texts:
                lines.append("  (empty)")

        for i, block in enumerate(self.frame_blocks, 1):
            block_lines(f"Frame {i} [{block.frame_id}]:", block)
        if self.unassigned_block.texts or self.unassigned_block.chars:
            block_lines("Outside any frame:", self.unassigned_block)
        lines.append("")
        lines.append("### Instructions")
        lines.append(self.output_schema_instructions)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TextOutcome:
    speaker: str  # character_id, OTHERS, or UNKNOWN
    emotion: str  # 7-label vocabulary


@dataclass
class AttributionResult:
    page_index: int
    entries: dict[str, TextOutcome]
    new_global_summary: str
    new_local_summary: str
    flags: list[str] = field(default_factory=list)
    method_tag: str = "llm"


class LlmBackend(Protocol):
    def complete(self, prompt: PagePrompt) -> str: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2


def build_prompt(
    seq: FrameSequence,
    scene: SceneGraph,
    char_preds: list[CharPrediction],
    intensities: list[EmotionIntensity] | None,
    memory: MemoryState,
    names: Mapping[str, str],
    system_preamble: str = DEFAULT_PREAMBLE,
) -> PagePrompt:
    """Assemble the page prompt; pass intensities=None to disable that channel."""
    memory.check()
    display: dict[str, str] = {}
    for pred in char_preds:
        if pred.predicted == OTHERS:
            display[pred.char_instance_id] = DISPLAY_UNKNOWN
        else:
            display[pred.char_instance_id] = names.get(pred.predicted, pred.predicted)
    z_of: dict[str, Optional[float]] = {cid: None for cid, _ in scene.chars}
    if intensities is not None:
        for s in intensities:
            z_of[s.char_instance_id] = s.z

    text_boxes = {tid: box for tid, box, _ in scene.texts}
    text_content = {tid: content for tid, _box, content in scene.texts}
    char_boxes = dict(scene.chars)
    members: dict[str, dict[str, list[str]]] = {}
    for tid in text_boxes:
        members.setdefault(seq.assignment[tid], {}).setdefault("texts", []).append(tid)
    for cid in char_boxes:
        members.setdefault(seq.assignment[cid], {}).setdefault("chars", []).append(cid)

    def make_block(frame_id: str) -> FrameBlock:
        got = members.get(frame_id, {})
        tids = reading_sort([(t, text_boxes[t]) for t in got.get("texts", [])])
        cids = reading_sort([(c, char_boxes[c]) for c in got.get("chars", [])])
        return FrameBlock(
            frame_id=frame_id,
            texts=tuple(PromptText(t, text_content[t]) for t in tids),
            chars=tuple(PromptChar(c, display[c], z_of[c]) for c in cids),
        )

    return PagePrompt(
        title_id=scene.page_ref.title_id,
        page_index=scene.page_ref.page_index,
        system_preamble=system_preamble,
        frame_blocks=tuple(make_block(fid) for fid in seq.ordered_frames),
        unassigned_block=make_block(UNASSIGNED),
        memory_global=memory.global_summary,
        memory_local=memory.local_summary,
        output_schema_instructions=OUTPUT_SCHEMA_INSTRUCTIONS,
        scene=scene,
        seq=seq,
    )


def _first_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", raw):
        try:
            obj, _end = decoder.raw_decode(raw, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ParseFailure("no JSON object found in model output")


def _normalize_name(name: str) -> str:
    return " ".join(str(name).split()).lower()


def name_lookup(names: Mapping[str, str]) -> dict[str, str]:
    """Map normalized display names (and raw ids) back to character ids."""
    table: dict[str, str] = {}
    for char_id in sorted(names):
        table.setdefault(_normalize_name(names[char_id]), char_id)
        table.setdefault(_normalize_name(char_id), char_id)
    table.setdefault(_normalize_name(DISPLAY_UNKNOWN), UNKNOWN)
    table.setdefault("unknown", UNKNOWN)
    table.setdefault("narrator", UNKNOWN)
    table.setdefault("others", OTHERS)
    return table


def normalize_emotion(label: object) -> tuple[str, bool]:
    """Fold a raw label onto the vocabulary; second element is True when usable."""
    if label is None:  # a JSON null is not the word "none"
        return "neutral", False
    s = str(label).strip().lower()
    s = EMOTION_ALIASES.get(s, s)
    if s in EMOTION_LABELS:
        return s, True
    return "neutral", False


def parse_response(
    raw: str,
    expected_text_ids: tuple[str, ...],
    names: Mapping[str, str],
    page_index: int = -1,
) -> AttributionResult:
    """Extract the first JSON object and resolve it into per-text outcomes."""
    if not raw:
        raise ParseFailure("empty model output")
    obj = _first_json_object(raw)
    speakers = obj.get("speakers") if isinstance(obj.get("speakers"), dict) else {}
    emotions = obj.get("emotions") if isinstance(obj.get("emotions"), dict) else {}
    lookup = name_lookup(names)
    flags: list[str] = []
    entries: dict[str, TextOutcome] = {}
    for tid in expected_text_ids:
        if tid not in speakers and tid not in emotions:
            flags.append(f"missing:{tid}")
            entries[tid] = TextOutcome(UNKNOWN, "neutral")
            continue
        speaker = UNKNOWN
        if tid in speakers:
            resolved = lookup.get(_normalize_name(speakers[tid]))
            if resolved is None:
                flags.append(f"unmatched_speaker:{tid}")
            else:
                speaker = resolved
        else:
            flags.append(f"missing_speaker:{tid}")
        emotion = "neutral"
        if tid in emotions:
            emotion, ok = normalize_emotion(emotions[tid])
            if not ok:
                flags.append(f"bad_emotion:{tid}")
        else:
            flags.append(f"missing_emotion:{tid}")
        entries[tid] = TextOutcome(speaker, emotion)
    for tid in speakers.keys() | emotions.keys():
        if tid not in entries:
            flags.append(f"extra_id:{tid}")
    return AttributionResult(
        page_index=page_index,
        entries=entries,
        new_global_summary=str(obj.get("global_summary", "")),
        new_local_summary=str(obj.get("local_summary", "")),
        flags=flags,
    )


def _truncate(text: str, budget: int) -> str:
    # keep the head: summaries are written oldest-first by instruction
    return text[:budget]


def _fallback_result(
    scene: SceneGraph,
    seq: FrameSequence,
    char_preds: list[CharPrediction],
    reason: str,
) -> AttributionResult:
    identities = {p.char_instance_id: p.predicted for p in char_preds}
    rules = frame_distance(scene, seq, identities)
    entries = {p.text_id: TextOutcome(p.character_id, "neutral") for p in rules}
    return AttributionResult(
        page_index=scene.page_ref.page_index,
        entries=entries,
        new_global_summary="",
        new_local_summary="",
        flags=[f"fallback:{reason}"],
        method_tag="llm_fallback",
    )


def attribute_page(
    scene: SceneGraph,
    seq: FrameSequence,
    char_preds: list[CharPrediction],
    intensities: list[EmotionIntensity] | None,
    names: Mapping[str, str],
    memory: MemoryState,
    backend: LlmBackend,
    retry: RetryPolicy = RetryPolicy(),
    ordinal: int | None = None,
) -> tuple[AttributionResult, MemoryState]:
    """Run one page through the model, updating memory; never returns partial results.

    The cursor tracks page_index by default; pass ordinal to renumber (needed
    when spread splitting turns one page into several sequential scenes).
    """
    page_index = scene.page_ref.page_index
    basis = page_index if ordinal is None else ordinal
    if memory.page_cursor != basis - 1:
        raise ValueError(
            f"memory cursor at {memory.page_cursor}, cannot accept page {basis}"
        )
    prompt = build_prompt(seq, scene, char_preds, intensities, memory, names)
    expected = prompt.expected_text_ids()

    from .llm import BackendError  # local import: llm builds on these types

    last_error = "parse_failure"
    for _attempt in range(retry.max_retries + 1):
        try:
            raw = backend.complete(prompt)
            result = parse_response(raw, expected, names, page_index)
        except ParseFailure as exc:
            logger.warning("page %d: parse failure: %s", page_index, exc)
            last_error = "parse_failure"
            continue
        except BackendError as exc:
            logger.warning("page %d: backend error: %s", page_index, exc)
            last_error = "backend_error"
            continue
        new_memory = replace(
            memory,
            global_summary=_truncate(result.new_global_summary, memory.global_budget),
            local_summary=_truncate(result.new_local_summary, memory.local_budget),
            page_cursor=basis,
        )
        return result, new_memory

    result = _fallback_result(scene, seq, char_preds, last_error)
    # memory advances with both summaries carried over unchanged
    return result, replace(memory, page_cursor=basis)
