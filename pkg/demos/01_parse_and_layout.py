"""Generate a tiny annotated title, parse it back, and read a page in order.

Run from the repo root:  python3 demos/01_parse_and_layout.py [out_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from comicvoice import synth
from comicvoice.corpus import build_linked_set, parse_title
from comicvoice.layout import scene_from_page, sequence_scene
from comicvoice.tts import reading_ordered_texts

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "out" / "01_parse_and_layout"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)

    # One synthetic title: annotation XML plus speaker and emotion sidecars.
    corpus = synth.generate_title(seed=5, n_pages=2, n_chars=3)
    paths = synth.write_title_tree(corpus, OUT)
    print(f"wrote {', '.join(sorted(p.name for p in paths.values()))} under {OUT}")

    parsed = parse_title(paths["annotation"], paths["speakers"], paths["emotions"])
    print(f"\ntitle {parsed.title_id}: {len(parsed.pages)} pages, roster of {len(parsed.roster)}")
    for ch in parsed.roster:
        print(f"  {ch.id}  {ch.name}")
    linked = build_linked_set(parsed)
    print(f"{len(linked)} texts carry a gold speaker link")

    # Page 0 through the layout stage: panel reading order, then texts inside.
    scene = scene_from_page(parsed.page(0))
    seq = sequence_scene(scene, direction="rtl")
    print(f"\npage 0: {len(scene.frames)} frames, {scene.n_text} texts, {scene.n_char} character boxes")
    print(f"frame reading order (right to left): {' -> '.join(seq.ordered_frames)}")

    contents = {tid: content for tid, _box, content in scene.texts}
    print("texts in reading order:")
    for rank, tid in enumerate(reading_ordered_texts(scene, seq), 1):
        print(f"  {rank}. [{tid}] {contents[tid]}")


if __name__ == "__main__":
    main()
