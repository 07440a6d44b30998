"""Synthetic title generation: seeded fixtures for tests and demos.

Layouts come from a guillotine process (recursive cuts with gutters), so every
generated page carries its reading order by construction.  Page images never
exist; everything downstream works from the geometry alone.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .corpus import (
    Body,
    Character,
    Face,
    Frame,
    PageAnnotation,
    SpeakerLink,
    Text,
    TitleCorpus,
)
from .geometry import BBox

EMOTION_POOL = ("neutral", "surprise", "anger", "happiness", "sadness")

PHRASES = (
    "Wait for me!",
    "This town never sleeps.",
    "I knew you would come.",
    "Run!",
    "What happened here?",
    "Nothing beats a warm meal.",
    "We leave at dawn.",
    "Did you hear that?",
    "It cannot be helped.",
    "Stay close.",
)

GIVEN_NAMES = (
    "Aoi", "Botan", "Chiyo", "Daiki", "Emi", "Fuyu", "Goro", "Hana",
    "Isamu", "Jun", "Kaede", "Leo", "Mio", "Noboru", "Oka", "Pochi",
)


def _reserve_cut(
    rng: random.Random, lo: int, hi: int, gutter: int, used: list[tuple[int, int]]
) -> int | None:
    """Pick a cut position whose padded gutter interval avoids every used one."""
    if hi < lo:
        return None
    for _ in range(12):
        cut = rng.randint(lo, hi)
        span = (cut - 7, cut + gutter + 7)  # pad past the box shrink jitter
        if all(span[1] <= a or span[0] >= b for a, b in used):
            used.append(span)
            return cut
    return None


def _guillotine(
    rng: random.Random,
    box: BBox,
    depth: int,
    min_side: int,
    gutter: int,
    used_y: list[tuple[int, int]] | None = None,
    used_x: list[tuple[int, int]] | None = None,
) -> list[BBox]:
    """Cut a rectangle into cells; the returned list is in reading order.

    Horizontal cuts read top first; vertical cuts read right first.  Gutter
    intervals are reserved globally per axis so cuts in sibling subtrees can
    never line up and open an accidental page-wide gap: with aligned gutters
    the cut order would stop being recoverable from the geometry.
    """
    if used_y is None:
        used_y = []
    if used_x is None:
        used_x = []
    w, h = box.width, box.height
    can_h = h >= 2 * min_side + gutter
    can_v = w >= 2 * min_side + gutter
    if depth <= 0 or (not can_h and not can_v) or rng.random() < 0.25:
        return [box]
    prefer_h = can_h and (not can_v or rng.random() < 0.5)
    attempts = [prefer_h, not prefer_h] if (can_h and can_v) else [prefer_h]
    for horizontal in attempts:
        if horizontal:
            cut = _reserve_cut(rng, box.ymin + min_side, box.ymax - min_side - gutter, gutter, used_y)
            if cut is None:
                continue
            top = BBox(box.xmin, box.ymin, box.xmax, cut)
            bottom = BBox(box.xmin, cut + gutter, box.xmax, box.ymax)
            return _guillotine(rng, top, depth - 1, min_side, gutter, used_y, used_x) + _guillotine(
                rng, bottom, depth - 1, min_side, gutter, used_y, used_x
            )
        cut = _reserve_cut(rng, box.xmin + min_side, box.xmax - min_side - gutter, gutter, used_x)
        if cut is None:
            continue
        left = BBox(box.xmin, box.ymin, cut, box.ymax)
        right = BBox(cut + gutter, box.ymin, box.xmax, box.ymax)
        return _guillotine(rng, right, depth - 1, min_side, gutter, used_y, used_x) + _guillotine(
            rng, left, depth - 1, min_side, gutter, used_y, used_x
        )
    return [box]


def random_layout(
    seed: int,
    width: int = 1654,
    height: int = 1170,
    max_depth: int = 4,
    min_side: int = 120,
    gutter: int = 24,
    margin: int = 40,
) -> tuple[list[BBox], list[int]]:
    """Return (frame boxes in shuffled order, indices of those boxes in reading order)."""
    rng = random.Random(seed)
    page = BBox(margin, margin, width - margin, height - margin)
    ordered = _guillotine(rng, page, max_depth, min_side, gutter)
    shrunk = []
    for cell in ordered:
        dx = rng.randint(0, 6)
        dy = rng.randint(0, 6)
        shrunk.append(BBox(cell.xmin + dx, cell.ymin + dy, cell.xmax - dx, cell.ymax - dy))
    perm = list(range(len(shrunk)))
    rng.shuffle(perm)
    boxes = [shrunk[p] for p in perm]
    expected = sorted(range(len(perm)), key=lambda k: perm[k])
    return boxes, expected


def _box_inside(rng: random.Random, frame: BBox, min_w: int, min_h: int, max_w: int, max_h: int) -> BBox:
    max_w = min(max_w, frame.width - 4)
    max_h = min(max_h, frame.height - 4)
    w = rng.randint(min_w, max(min_w, max_w))
    h = rng.randint(min_h, max(min_h, max_h))
    x = rng.randint(frame.xmin + 2, max(frame.xmin + 2, frame.xmax - 2 - w))
    y = rng.randint(frame.ymin + 2, max(frame.ymin + 2, frame.ymax - 2 - h))
    return BBox(x, y, x + w, y + h)


def generate_title(
    seed: int,
    title_id: str | None = None,
    n_pages: int = 6,
    n_chars: int = 5,
    width: int = 1654,
    height: int = 1170,
    emotion_label_rate: float = 0.7,
    stray_text_rate: float = 0.08,
    offpanel_speaker_rate: float = 0.15,
    chars_per_frame: tuple[int, int] = (1, 2),
    stray_face_rate: float = 0.1,
) -> TitleCorpus:
    """Generate a fully annotated synthetic title, links and labels included.

    Most speakers are drawn in the text's own frame; a slice of them
    (offpanel_speaker_rate) only appear elsewhere on the page so that both the
    easy and the hard attribution regimes are populated.  chars_per_frame=(1, 1)
    with stray_face_rate=0 makes frame membership identify the speaker uniquely,
    the regime where a frame-pool rule is exact by construction.
    """
    rng = random.Random(seed)
    if title_id is None:
        title_id = f"synth{seed:04d}"
    roster = tuple(
        Character(f"c{seed:04d}{i:02d}", GIVEN_NAMES[(seed + i * 7) % len(GIVEN_NAMES)] + str(i))
        for i in range(n_chars)
    )

    counter = 0

    def next_id() -> str:
        nonlocal counter
        counter += 1
        return f"{counter:08d}"

    pages: list[PageAnnotation] = []
    links: list[SpeakerLink] = []
    for page_index in range(n_pages):
        cells = _guillotine(rng, BBox(40, 40, width - 40, height - 40), 3, min_side=200, gutter=24)
        frames = [Frame(next_id(), c) for c in cells]
        texts: list[Text] = []
        bodies: list[Body] = []
        faces: list[Face] = []
        chars_in_frame: dict[str, list[str]] = {}
        for fr in frames:
            frame_chars: list[str] = []
            for _ in range(rng.randint(*chars_per_frame)):
                char = rng.choice(roster)
                body_box = _box_inside(rng, fr.box, 50, 80, fr.box.width // 2, fr.box.height - 20)
                bodies.append(Body(next_id(), body_box, char.id))
                frame_chars.append(char.id)
                if rng.random() < 0.8:
                    fw = max(20, body_box.width // 2)
                    fh = max(20, body_box.height // 4)
                    fx = body_box.xmin + (body_box.width - fw) // 2
                    face_box = BBox(fx, body_box.ymin, fx + fw, body_box.ymin + fh)
                    emotion = None
                    if rng.random() < emotion_label_rate:
                        emotion = rng.choice(EMOTION_POOL)
                    faces.append(Face(next_id(), face_box, char.id, emotion))
            if rng.random() < stray_face_rate:
                char = rng.choice(roster)
                face_box = _box_inside(rng, fr.box, 24, 24, 60, 60)
                faces.append(Face(next_id(), face_box, char.id))
            chars_in_frame[fr.id] = frame_chars
        for fr in frames:
            for _ in range(rng.randint(1, 3)):
                t_box = _box_inside(rng, fr.box, 28, 40, max(30, fr.box.width // 4), max(42, fr.box.height // 3))
                text = Text(next_id(), t_box, rng.choice(PHRASES))
                texts.append(text)
                in_frame = chars_in_frame[fr.id]
                on_page = sorted({b.character_id for b in bodies})
                if in_frame and (rng.random() >= offpanel_speaker_rate or len(on_page) == len(set(in_frame))):
                    speaker = rng.choice(in_frame)
                else:
                    elsewhere = [c for c in on_page if c not in in_frame]
                    speaker = rng.choice(elsewhere) if elsewhere else rng.choice(roster).id
                links.append(SpeakerLink(title_id, text.id, speaker))
        if rng.random() < stray_text_rate:
            # a caption in the bottom margin, outside every frame
            t_box = BBox(width // 3, height - 36, width // 3 + 160, height - 8)
            text = Text(next_id(), t_box, rng.choice(PHRASES))
            texts.append(text)
            links.append(SpeakerLink(title_id, text.id, rng.choice(roster).id))
        pages.append(
            PageAnnotation(
                title_id=title_id,
                page_index=page_index,
                width=width,
                height=height,
                frames=tuple(frames),
                texts=tuple(texts),
                bodies=tuple(bodies),
                faces=tuple(faces),
            )
        )

    corpus = TitleCorpus(title_id, roster, tuple(pages), tuple(links))
    return corpus


# --- serializers feeding the XML/JSONL parsers ----------------------------

def write_annotation_xml(corpus: TitleCorpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    lines.append(f"<book title={quoteattr(corpus.title_id)}>")
    lines.append("  <characters>")
    for c in corpus.roster:
        lines.append(f"    <character id={quoteattr(c.id)} name={quoteattr(c.name)}/>")
    lines.append("  </characters>")
    lines.append("  <pages>")
    for p in corpus.pages:
        lines.append(f'    <page index="{p.page_index}" width="{p.width}" height="{p.height}">')

        def coords(box: BBox) -> str:
            return (
                f'xmin="{box.xmin}" ymin="{box.ymin}" xmax="{box.xmax}" ymax="{box.ymax}"'
            )

        for fr in p.frames:
            lines.append(f'      <frame id={quoteattr(fr.id)} {coords(fr.box)}/>')
        for t in p.texts:
            lines.append(
                f'      <text id={quoteattr(t.id)} {coords(t.box)}>{escape(t.content)}</text>'
            )
        for b in p.bodies:
            lines.append(
                f'      <body id={quoteattr(b.id)} character={quoteattr(b.character_id)} {coords(b.box)}/>'
            )
        for f in p.faces:
            lines.append(
                f'      <face id={quoteattr(f.id)} character={quoteattr(f.character_id)} {coords(f.box)}/>'
            )
        lines.append("    </page>")
    lines.append("  </pages>")
    lines.append("</book>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_speaker_jsonl(corpus: TitleCorpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for link in corpus.speaker_links:
            fh.write(
                json.dumps(
                    {
                        "title": corpus.title_id,
                        "text_id": link.text_element_id,
                        "speaker_id": link.speaker_character_id,
                    }
                )
                + "\n"
            )


def write_emotion_jsonl(corpus: TitleCorpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.pages:
            for f in p.faces:
                if f.emotion is not None:
                    fh.write(
                        json.dumps(
                            {"title": corpus.title_id, "face_id": f.id, "label": f.emotion}
                        )
                        + "\n"
                    )


def write_title_tree(corpus: TitleCorpus, root: str | Path) -> dict[str, Path]:
    """Write the XML plus both sidecars under root/, returning the three paths."""
    root = Path(root)
    paths = {
        "annotation": root / f"{corpus.title_id}.xml",
        "speakers": root / f"{corpus.title_id}.speakers.jsonl",
        "emotions": root / f"{corpus.title_id}.emotions.jsonl",
    }
    write_annotation_xml(corpus, paths["annotation"])
    write_speaker_jsonl(corpus, paths["speakers"])
    write_emotion_jsonl(corpus, paths["emotions"])
    return paths
