"""Shared test fixtures and independent oracles.

The reading-order oracle here is deliberately a second, naive implementation:
it scans all candidate gaps by brute force and always splits at the widest
one, whereas the production code partitions into all bands at once.  Both
routes must land on the same order.
"""

from __future__ import annotations

import random

from comicvoice.corpus import (
    Body,
    Character,
    Face,
    Frame,
    PageAnnotation,
    SpeakerLink,
    Text,
    TitleCorpus,
)
from comicvoice.geometry import BBox


def oracle_reading_order(boxes: list[BBox], rtl: bool = True) -> list[int]:
    """Brute-force recursive cut: widest separating gap first, then recurse."""

    def find_gaps(items: list[tuple[int, BBox]], axis: str) -> list[tuple[int, int]]:
        if axis == "y":
            spans = [(b.ymin, b.ymax) for _, b in items]
        else:
            spans = [(b.xmin, b.xmax) for _, b in items]
        gaps = []
        for _, hi in spans:
            for lo, _ in spans:
                if hi > lo:  # hi == lo is a touching edge: still a separating line
                    continue
                blocked = any(s_lo < lo and s_hi > hi for s_lo, s_hi in spans)
                if not blocked:
                    gaps.append((hi, lo))
        return gaps

    def rec(items: list[tuple[int, BBox]]) -> list[int]:
        if len(items) <= 1:
            return [i for i, _ in items]
        gaps = find_gaps(items, "y")
        if gaps:
            a, b = max(gaps, key=lambda g: (g[1] - g[0], -g[0]))
            top = [it for it in items if it[1].ymax <= a]
            bottom = [it for it in items if it[1].ymin >= b]
            assert len(top) + len(bottom) == len(items)
            return rec(top) + rec(bottom)
        def split_cols(group: list[tuple[int, BBox]]) -> list[list[tuple[int, BBox]]]:
            # exhaust vertical gaps before any further horizontal look;
            # a band decomposes into all its columns, low-to-high x
            col_gaps = find_gaps(group, "x")
            if not col_gaps:
                return [group]
            a, b = max(col_gaps, key=lambda g: (g[1] - g[0], g[0]))
            left = [it for it in group if it[1].xmax <= a]
            right = [it for it in group if it[1].xmin >= b]
            assert len(left) + len(right) == len(group)
            return split_cols(left) + split_cols(right)

        cols = split_cols(items)
        if len(cols) > 1:
            ordered_cols = list(reversed(cols)) if rtl else cols
            out: list[int] = []
            for col in ordered_cols:
                out.extend(rec(col))
            return out
        if rtl:
            ordered = sorted(items, key=lambda it: (it[1].ymin, -it[1].xmax, it[0]))
        else:
            ordered = sorted(items, key=lambda it: (it[1].ymin, it[1].xmin, it[0]))
        return [i for i, _ in ordered]

    return rec(list(enumerate(boxes)))


def random_disjoint_boxes(
    seed: int,
    n: int,
    width: int = 1654,
    height: int = 1170,
) -> list[BBox]:
    """Rejection-sample n pairwise non-overlapping boxes."""
    rng = random.Random(seed)
    boxes: list[BBox] = []
    attempts = 0
    while len(boxes) < n:
        attempts += 1
        if attempts > 5000:  # dense layouts: restart with smaller boxes
            boxes, attempts = [], 0
        w = rng.randint(80, 420)
        h = rng.randint(80, 420)
        x = rng.randint(0, width - w)
        y = rng.randint(0, height - h)
        candidate = BBox(x, y, x + w, y + h)
        if all(
            candidate.xmax <= b.xmin or b.xmax <= candidate.xmin
            or candidate.ymax <= b.ymin or b.ymax <= candidate.ymin
            for b in boxes
        ):
            boxes.append(candidate)
    return boxes


def make_page(
    title_id: str = "t",
    page_index: int = 0,
    width: int = 1000,
    height: int = 1000,
    frames: list[tuple[str, BBox]] = (),
    texts: list[tuple[str, BBox, str]] = (),
    bodies: list[tuple[str, BBox, str]] = (),
    faces: list[tuple[str, BBox, str, str | None]] = (),
) -> PageAnnotation:
    return PageAnnotation(
        title_id=title_id,
        page_index=page_index,
        width=width,
        height=height,
        frames=tuple(Frame(i, b) for i, b in frames),
        texts=tuple(Text(i, b, c) for i, b, c in texts),
        bodies=tuple(Body(i, b, ch) for i, b, ch in bodies),
        faces=tuple(Face(i, b, ch, e) for i, b, ch, e in faces),
    )


def make_title(
    pages: list[PageAnnotation],
    roster: list[tuple[str, str]],
    links: list[tuple[str, str]] = (),
    title_id: str = "t",
) -> TitleCorpus:
    return TitleCorpus(
        title_id=title_id,
        roster=tuple(Character(i, n) for i, n in roster),
        pages=tuple(pages),
        speaker_links=tuple(SpeakerLink(title_id, t, s) for t, s in links),
    )


class RaisingClient:
    """Adapter client whose every request fails; exercises fallback paths."""

    def __init__(self):
        from comicvoice.adapter import AdapterManifest

        self.manifest = AdapterManifest("raising", ("identify", "intensity", "ocr"), 1)

    def request(self, op, title, page, image, items):
        from comicvoice.adapter import AdapterError

        raise AdapterError("injected failure")
