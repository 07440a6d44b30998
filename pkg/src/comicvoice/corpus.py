"""Annotation ingest: Manga109-style XML, sidecar link/label files, canonical JSONL dumps.

The XML layout expected here is ``<book title=...>`` with a ``<characters>``
roster and ``<pages><page index width height>`` children holding
``<frame|text|body|face id xmin ymin xmax ymax>`` elements.  Speaker links and
emotion labels arrive as JSON-lines sidecars keyed by element id.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .geometry import BBox, center_distance

logger = logging.getLogger(__name__)

EMOTION_LABELS = ("neutral", "surprise", "anger", "happiness", "sadness", "disgust", "fear")

CORPUS_SCHEMA = "corpus_v1"


class CorpusParseError(Exception):
    """Raised on malformed annotation input (includes line context when known)."""


@dataclass(frozen=True)
class Character:
    id: str
    name: str


@dataclass(frozen=True)
class Frame:
    id: str
    box: BBox


@dataclass(frozen=True)
class Text:
    id: str
    box: BBox
    content: str


@dataclass(frozen=True)
class Body:
    id: str
    box: BBox
    character_id: str


@dataclass(frozen=True)
class Face:
    id: str
    box: BBox
    character_id: str
    emotion: Optional[str] = None


@dataclass(frozen=True)
class PageAnnotation:
    title_id: str
    page_index: int
    width: int
    height: int
    frames: tuple[Frame, ...] = ()
    texts: tuple[Text, ...] = ()
    bodies: tuple[Body, ...] = ()
    faces: tuple[Face, ...] = ()

    def element_ids(self) -> list[str]:
        return (
            [f.id for f in self.frames]
            + [t.id for t in self.texts]
            + [b.id for b in self.bodies]
            + [f.id for f in self.faces]
        )


@dataclass(frozen=True)
class SpeakerLink:
    title_id: str
    text_element_id: str
    speaker_character_id: str


@dataclass(frozen=True)
class LinkedSample:
    """A speaker-linked dialogue line, optionally tagged with a gold emotion."""

    title_id: str
    text_element_id: str
    page_index: int
    content: str
    gt_speaker: str
    gt_emotion: Optional[str] = None


@dataclass
class TitleCorpus:
    title_id: str
    roster: tuple[Character, ...]
    pages: tuple[PageAnnotation, ...]
    speaker_links: tuple[SpeakerLink, ...] = ()
    warnings: list[str] = field(default_factory=list)

    def character_ids(self) -> set[str]:
        return {c.id for c in self.roster}

    def character_name(self, character_id: str) -> str:
        for c in self.roster:
            if c.id == character_id:
                return c.name
        return character_id

    def page(self, page_index: int) -> PageAnnotation:
        for p in self.pages:
            if p.page_index == page_index:
                return p
        raise KeyError(f"no page {page_index} in title {self.title_id}")

    def emotion_annotation_count(self) -> int:
        return sum(1 for p in self.pages for f in p.faces if f.emotion is not None)

    def body_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for p in self.pages:
            for b in p.bodies:
                counts[b.character_id] = counts.get(b.character_id, 0) + 1
        return counts


def _attr_box(el: ET.Element) -> BBox:
    return BBox(
        int(el.attrib["xmin"]),
        int(el.attrib["ymin"]),
        int(el.attrib["xmax"]),
        int(el.attrib["ymax"]),
    )


def _read_jsonl(path: Path) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"{path}:{lineno}: bad JSON line: {exc}") from exc


def parse_title(
    annotation_file: str | Path,
    speaker_file: str | Path | None = None,
    emotion_file: str | Path | None = None,
) -> TitleCorpus:
    """Parse one title's annotation XML plus optional sidecars into a TitleCorpus.

    Dangling references (a body/face naming an unknown character, a link naming
    an unknown text, a label naming an unknown face) are dropped with a warning
    rather than aborting: public annotation derivatives are known to contain
    mismatches.
    """
    annotation_file = Path(annotation_file)
    try:
        tree = ET.parse(annotation_file)
    except ET.ParseError as exc:
        raise CorpusParseError(f"{annotation_file}: malformed XML: {exc}") from exc
    root = tree.getroot()
    title_id = root.attrib.get("title", annotation_file.stem)

    roster = tuple(
        Character(el.attrib["id"], el.attrib.get("name", el.attrib["id"]))
        for el in root.findall("./characters/character")
    )
    known_chars = {c.id for c in roster}

    warnings: list[str] = []
    seen_ids: set[str] = set()
    pages: list[PageAnnotation] = []
    for page_el in root.findall("./pages/page"):
        idx = int(page_el.attrib["index"])
        width = int(page_el.attrib["width"])
        height = int(page_el.attrib["height"])
        frames: list[Frame] = []
        texts: list[Text] = []
        bodies: list[Body] = []
        faces: list[Face] = []
        for el in page_el:
            eid = el.attrib.get("id")
            if eid is None:
                warnings.append(f"page {idx}: <{el.tag}> without id dropped")
                continue
            if eid in seen_ids:
                warnings.append(f"page {idx}: duplicate element id {eid} dropped")
                continue
            try:
                box = _attr_box(el)
            except (KeyError, ValueError) as exc:
                warnings.append(f"page {idx}: element {eid} has bad box ({exc})")
                continue
            if box.xmax > width or box.ymax > height:
                warnings.append(f"page {idx}: element {eid} exceeds page bounds")
                continue
            if el.tag == "frame":
                frames.append(Frame(eid, box))
            elif el.tag == "text":
                texts.append(Text(eid, box, el.text or ""))
            elif el.tag in ("body", "face"):
                char_id = el.attrib.get("character")
                if char_id not in known_chars:
                    warnings.append(
                        f"page {idx}: {el.tag} {eid} references unknown character {char_id!r}, dropped"
                    )
                    continue
                if el.tag == "body":
                    bodies.append(Body(eid, box, char_id))
                else:
                    faces.append(Face(eid, box, char_id))
            else:
                continue  # foreign element kinds are ignored
            seen_ids.add(eid)
        pages.append(
            PageAnnotation(
                title_id=title_id,
                page_index=idx,
                width=width,
                height=height,
                frames=tuple(frames),
                texts=tuple(texts),
                bodies=tuple(bodies),
                faces=tuple(faces),
            )
        )
    pages.sort(key=lambda p: p.page_index)

    corpus = TitleCorpus(title_id, roster, tuple(pages), warnings=warnings)

    if emotion_file is not None:
        _attach_emotions(corpus, Path(emotion_file))
    if speaker_file is not None:
        _attach_links(corpus, Path(speaker_file))

    for msg in corpus.warnings:
        logger.warning("%s: %s", title_id, msg)
    return corpus


def _attach_emotions(corpus: TitleCorpus, path: Path) -> None:
    face_pages: dict[str, int] = {}
    for p in corpus.pages:
        for f in p.faces:
            face_pages[f.id] = p.page_index
    labels: dict[str, str] = {}
    for rec in _read_jsonl(path):
        if rec.get("title") not in (None, corpus.title_id):
            continue
        face_id, label = rec.get("face_id"), rec.get("label")
        if label not in EMOTION_LABELS:
            corpus.warnings.append(f"emotion label {label!r} for {face_id} not in vocabulary, dropped")
            continue
        if face_id not in face_pages:
            corpus.warnings.append(f"emotion label for unknown face {face_id!r} dropped")
            continue
        labels[face_id] = label
    if not labels:
        return
    new_pages = []
    for p in corpus.pages:
        faces = tuple(
            replace(f, emotion=labels[f.id]) if f.id in labels else f for f in p.faces
        )
        new_pages.append(replace(p, faces=faces))
    corpus.pages = tuple(new_pages)


def _attach_links(corpus: TitleCorpus, path: Path) -> None:
    text_ids = {t.id for p in corpus.pages for t in p.texts}
    known_chars = corpus.character_ids()
    links: list[SpeakerLink] = []
    for rec in _read_jsonl(path):
        if rec.get("title") not in (None, corpus.title_id):
            continue
        text_id, speaker = rec.get("text_id"), rec.get("speaker_id")
        if text_id not in text_ids:
            corpus.warnings.append(f"speaker link for unknown text {text_id!r} dropped")
            continue
        if speaker not in known_chars:
            corpus.warnings.append(f"speaker link {text_id} -> unknown character {speaker!r} dropped")
            continue
        links.append(SpeakerLink(corpus.title_id, text_id, speaker))
    corpus.speaker_links = tuple(links)


def build_linked_set(corpus: TitleCorpus) -> list[LinkedSample]:
    """Join speaker links with same-page emotion-labeled faces of the speaker.

    When several labeled faces of the speaker share the page, the face whose
    box center is nearest the text box center supplies the label (ties broken
    by face id so the result is independent of annotation sibling order).
    """
    page_of_text: dict[str, PageAnnotation] = {}
    text_by_id: dict[str, Text] = {}
    for p in corpus.pages:
        for t in p.texts:
            page_of_text[t.id] = p
            text_by_id[t.id] = t

    samples: list[LinkedSample] = []
    seen: set[str] = set()
    for link in corpus.speaker_links:
        if link.text_element_id in seen:
            corpus.warnings.append(f"duplicate speaker link for {link.text_element_id} ignored")
            continue
        seen.add(link.text_element_id)
        page = page_of_text[link.text_element_id]
        text = text_by_id[link.text_element_id]
        labeled = [
            f for f in page.faces
            if f.character_id == link.speaker_character_id and f.emotion is not None
        ]
        emotion: Optional[str] = None
        if labeled:
            best = min(labeled, key=lambda f: (center_distance(f.box, text.box), f.id))
            emotion = best.emotion
        samples.append(
            LinkedSample(
                title_id=corpus.title_id,
                text_element_id=link.text_element_id,
                page_index=page.page_index,
                content=text.content,
                gt_speaker=link.speaker_character_id,
                gt_emotion=emotion,
            )
        )
    samples.sort(key=lambda s: (s.page_index, s.text_element_id))
    return samples


def select_test_titles(corpora: list[TitleCorpus], n: int = 20) -> list[str]:
    """Titles with the most emotion annotations, descending; ties lexicographic."""
    if n > len(corpora):
        raise ValueError(f"asked for {n} titles but only {len(corpora)} corpora given")
    ranked = sorted(corpora, key=lambda c: (-c.emotion_annotation_count(), c.title_id))
    return [c.title_id for c in ranked[:n]]


# --- canonical JSONL dump -------------------------------------------------

def _box_json(box: BBox) -> list[int]:
    return [box.xmin, box.ymin, box.xmax, box.ymax]


def page_to_json(page: PageAnnotation) -> dict:
    return {
        "type": "page",
        "title_id": page.title_id,
        "page_index": page.page_index,
        "width": page.width,
        "height": page.height,
        "frames": [{"id": f.id, "box": _box_json(f.box)} for f in page.frames],
        "texts": [{"id": t.id, "box": _box_json(t.box), "content": t.content} for t in page.texts],
        "bodies": [{"id": b.id, "box": _box_json(b.box), "character_id": b.character_id} for b in page.bodies],
        "faces": [
            {"id": f.id, "box": _box_json(f.box), "character_id": f.character_id, "emotion": f.emotion}
            for f in page.faces
        ],
    }


def dump_corpus(corpus: TitleCorpus, path: str | Path) -> None:
    """Write the canonical JSON-lines dump: a title header line then one page per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "type": "title",
        "schema": CORPUS_SCHEMA,
        "title_id": corpus.title_id,
        "roster": [{"id": c.id, "name": c.name} for c in corpus.roster],
        "speaker_links": [
            {"text_id": l.text_element_id, "speaker_id": l.speaker_character_id}
            for l in corpus.speaker_links
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for page in corpus.pages:
            fh.write(json.dumps(page_to_json(page), ensure_ascii=False) + "\n")


def page_from_json(rec: dict) -> PageAnnotation:
    def box(vals: list[int]) -> BBox:
        return BBox(*vals)

    return PageAnnotation(
        title_id=rec["title_id"],
        page_index=rec["page_index"],
        width=rec["width"],
        height=rec["height"],
        frames=tuple(Frame(f["id"], box(f["box"])) for f in rec["frames"]),
        texts=tuple(Text(t["id"], box(t["box"]), t["content"]) for t in rec["texts"]),
        bodies=tuple(Body(b["id"], box(b["box"]), b["character_id"]) for b in rec["bodies"]),
        faces=tuple(Face(f["id"], box(f["box"]), f["character_id"], f.get("emotion")) for f in rec["faces"]),
    )


def load_corpus(path: str | Path) -> TitleCorpus:
    """Parse a canonical dump back into a TitleCorpus."""
    path = Path(path)
    header: dict | None = None
    pages: list[PageAnnotation] = []
    for rec in _read_jsonl(path):
        try:
            if rec.get("type") == "title":
                header = rec
            elif rec.get("type") == "page":
                pages.append(page_from_json(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusParseError(f"{path}: malformed record: {exc}") from exc
    if header is None:
        raise CorpusParseError(f"{path}: missing title header line")
    pages.sort(key=lambda p: p.page_index)
    corpus = TitleCorpus(
        title_id=header["title_id"],
        roster=tuple(Character(c["id"], c["name"]) for c in header["roster"]),
        pages=tuple(pages),
        speaker_links=tuple(
            SpeakerLink(header["title_id"], l["text_id"], l["speaker_id"])
            for l in header["speaker_links"]
        ),
    )
    return corpus


def corpora_equal(a: TitleCorpus, b: TitleCorpus) -> bool:
    return (
        a.title_id == b.title_id
        and a.roster == b.roster
        and a.pages == b.pages
        and a.speaker_links == b.speaker_links
    )
