"""TTS job planning and dispatch: one reference-conditioned job per dialogue line.

Planning is pure: attributed texts become jobs ordered by page then reading
order, each carrying the speaker's voice reference and a style tag looked up
from the predicted emotion.  Dispatch either writes the manifest only or
streams jobs to a synthesis adapter, recording per-job audio paths/failures.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .adapter import AdapterError
from .attribution import AttributionResult
from .baselines import UNKNOWN
from .layout import UNASSIGNED, FrameSequence, SceneGraph, reading_sort
from .perception import OTHERS

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = "manifest_v1"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class VoiceProfile:
    character_id: str
    reference_voice_id: str
    styles: Mapping[str, str] = field(default_factory=dict)
    default_style: str = "plain"

    def style_for(self, emotion: str) -> str:
        return self.styles.get(emotion, self.default_style)


@dataclass(frozen=True)
class TTSJob:
    job_id: str
    title_id: str
    page_index: int
    text_id: str
    text: str
    speaker: str
    emotion: str
    voice: str
    style: str
    sequence_index: int


def reading_ordered_texts(scene: SceneGraph, seq: FrameSequence) -> list[str]:
    """Text ids in presentation order: frames in reading order, then unassigned."""
    text_boxes = {tid: box for tid, box, _ in scene.texts}
    by_frame: dict[str, list[tuple[str, object]]] = {}
    for tid, box in text_boxes.items():
        by_frame.setdefault(seq.assignment[tid], []).append((tid, box))
    out: list[str] = []
    for fid in list(seq.ordered_frames) + [UNASSIGNED]:
        out.extend(reading_sort(by_frame.get(fid, [])))
    return out


def plan_jobs(
    title_id: str,
    page_results: list[tuple[SceneGraph, FrameSequence, AttributionResult]],
    profiles: Mapping[str, VoiceProfile],
    narrator: Optional[VoiceProfile] = None,
) -> list[TTSJob]:
    """One job per attributed text, sequence numbered across the whole title."""
    jobs: list[TTSJob] = []
    seq_index = 0
    for scene, seq, result in sorted(page_results, key=lambda t: t[0].page_ref.page_index):
        contents = {tid: content for tid, _box, content in scene.texts}
        page = scene.page_ref.page_index
        for tid in reading_ordered_texts(scene, seq):
            outcome = result.entries[tid]
            profile = profiles.get(outcome.speaker)
            if outcome.speaker in (UNKNOWN, OTHERS) or profile is None:
                if narrator is None:
                    raise ConfigError(
                        f"speaker {outcome.speaker!r} needs the narrator profile, none configured"
                    )
                profile = narrator
                style = profile.style_for("neutral")
            else:
                style = profile.style_for(outcome.emotion)
            jobs.append(
                TTSJob(
                    job_id=f"{title_id}-{page:04d}-{tid}",
                    title_id=title_id,
                    page_index=page,
                    text_id=tid,
                    text=contents[tid],
                    speaker=outcome.speaker,
                    emotion=outcome.emotion,
                    voice=profile.reference_voice_id,
                    style=style,
                    sequence_index=seq_index,
                )
            )
            seq_index += 1
    return jobs


def _job_row(job: TTSJob) -> dict:
    return {
        "job_id": job.job_id,
        "title": job.title_id,
        "page": job.page_index,
        "text_id": job.text_id,
        "text": job.text,
        "speaker": job.speaker,
        "emotion": job.emotion,
        "voice": job.voice,
        "style": job.style,
        "seq": job.sequence_index,
    }


def dispatch(
    jobs: list[TTSJob],
    manifest_path: str | Path,
    backend: str = "manifest_only",
    client=None,
) -> list[dict]:
    """Write the manifest; with the adapter backend, synthesize first.

    Adapter failures never abort the run: failed jobs carry an "error" field
    in the manifest instead of an audio path.
    """
    rows = [_job_row(j) for j in jobs]
    if backend == "adapter":
        if client is None:
            raise ConfigError("adapter dispatch needs a client")
        by_page: dict[tuple[str, int], list[int]] = {}
        for i, job in enumerate(jobs):
            by_page.setdefault((job.title_id, job.page_index), []).append(i)
        for (title, page), idxs in by_page.items():
            items = [
                {
                    "id": jobs[i].job_id,
                    "text": jobs[i].text,
                    "speaker": jobs[i].speaker,
                    "emotion": jobs[i].emotion,
                    "voice": jobs[i].voice,
                    "style": jobs[i].style,
                }
                for i in idxs
            ]
            try:
                resp = client.request("synthesize", title, page, "", items)
            except AdapterError as exc:
                logger.warning("synthesize failed for %s page %d: %s", title, page, exc)
                for i in idxs:
                    rows[i]["error"] = str(exc)
                continue
            for i, item in zip(idxs, resp):
                if "error" in item:
                    rows[i]["error"] = str(item["error"])
                else:
                    rows[i]["audio_path"] = item["audio_path"]
    elif backend != "manifest_only":
        raise ConfigError(f"unknown dispatch backend {backend!r}")

    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"type": "header", "schema": MANIFEST_SCHEMA}) + "\n")
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return rows
