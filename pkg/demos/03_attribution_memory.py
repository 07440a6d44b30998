"""Page prompts, rolling memory, and what happens when the model misbehaves.

Pages go through the language-model stage strictly in order.  Each page gets
a prompt built from perception results plus two memory strings (a global
story summary and a local recent-events summary); the model's reply updates
both and advances the page cursor by exactly one.  A reply that cannot be
parsed is retried, then replaced by the frame-distance fallback, and the
run keeps going.

Run from the repo root:  python3 demos/03_attribution_memory.py
"""

from __future__ import annotations

from pathlib import Path

from comicvoice import synth
from comicvoice.attribution import MemoryState, RetryPolicy, attribute_page, build_prompt
from comicvoice.layout import scene_from_page, sequence_scene
from comicvoice.llm import CassetteBackend, ScriptedBackend
from comicvoice.perception import (
    OracleIdentity,
    OracleIntensity,
    build_registry,
    estimate_intensity,
    identify_characters,
)

CASSETTE = Path(__file__).parent / "out" / "03_attribution_memory" / "pages.cassette.jsonl"


class GarbageBackend:
    """Stands in for a model that never returns usable JSON."""

    def complete(self, prompt) -> str:
        return "I'd rather talk about something else."


def page_inputs(corpus, registry, page_index):
    scene = scene_from_page(corpus.page(page_index))
    seq = sequence_scene(scene)
    char_preds = identify_characters(scene, OracleIdentity(registry))
    intensities = estimate_intensity(scene, OracleIntensity())
    return scene, seq, char_preds, intensities


def main() -> None:
    corpus = synth.generate_title(seed=17, n_pages=3, n_chars=3)
    registry, _refs = build_registry(corpus, min_appearances=0, n_ref=8, seed=0)
    names = {c.id: c.name for c in corpus.roster}

    # The prompt for page 0, as the model sees it.
    scene, seq, char_preds, intensities = page_inputs(corpus, registry, 0)
    memory = MemoryState()
    prompt = build_prompt(seq, scene, char_preds, intensities, memory, names)
    print("prompt for page 0 (first 12 lines):")
    for line in prompt.render().splitlines()[:12]:
        print(f"  | {line}")

    # Three pages in order against the deterministic scripted backend.
    backend = ScriptedBackend()
    print("\nscripted run:")
    for page_index in range(3):
        scene, seq, char_preds, intensities = page_inputs(corpus, registry, page_index)
        result, memory = attribute_page(
            scene, seq, char_preds, intensities, names, memory, backend
        )
        spoken = ", ".join(
            f"{tid}->{names.get(out.speaker, out.speaker)}/{out.emotion}"
            for tid, out in sorted(result.entries.items())
        )
        print(f"  page {page_index}: cursor={memory.page_cursor}  "
              f"|G|={len(memory.global_summary)}/{memory.global_budget}  "
              f"|L|={len(memory.local_summary)}/{memory.local_budget}")
        print(f"    {spoken}")

    # A page the model refuses to answer: retries burn out, fallback steps in.
    scene, seq, char_preds, intensities = page_inputs(corpus, registry, 0)
    result, _memory = attribute_page(
        scene, seq, char_preds, intensities, names, MemoryState(),
        GarbageBackend(), retry=RetryPolicy(max_retries=1),
    )
    print(f"\ngarbage backend: method={result.method_tag!r} flags={result.flags}")
    print(f"  every text still attributed: {sorted(result.entries)}")

    # Record the scripted replies once, then replay them with no backend calls.
    CASSETTE.parent.mkdir(parents=True, exist_ok=True)
    if CASSETTE.exists():
        CASSETTE.unlink()
    for mode, inner in (("record", ScriptedBackend()), ("replay_strict", None)):
        backend = CassetteBackend(path=CASSETTE, mode=mode, inner=inner)
        memory = MemoryState()
        entries = []
        for page_index in range(3):
            scene, seq, char_preds, intensities = page_inputs(corpus, registry, page_index)
            result, memory = attribute_page(
                scene, seq, char_preds, intensities, names, memory, backend
            )
            entries.append(result.entries)
        print(f"\n{mode}: cursor={memory.page_cursor}, "
              f"{sum(len(e) for e in entries)} texts attributed")
    print(f"cassette at {CASSETTE}")


if __name__ == "__main__":
    main()
