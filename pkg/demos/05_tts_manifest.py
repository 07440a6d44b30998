"""From attributed pages to a speech-job manifest with voice routing.

Every attributed text becomes one TTS job: sequence-numbered across the
title, voiced by its speaker's profile, styled by the predicted emotion.
Speakers without a profile, and texts attributed to nobody in particular,
route to the narrator voice.

Run from the repo root:  python3 demos/05_tts_manifest.py [out_dir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from comicvoice import synth
from comicvoice.config import RunConfig
from comicvoice.pipeline import run_pipeline

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "out" / "05_tts_manifest"


def main() -> None:
    corpus_dir = OUT / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    corpus = synth.generate_title(54, n_pages=3, n_chars=3)
    synth.write_title_tree(corpus, corpus_dir)

    # Give the first roster member a real voice; everyone else narrates.
    voiced = {c.id: c.name for c in corpus.roster[:1]}
    tts_voices = {
        cid: {"voice": f"voice_{name.lower()}", "styles": {"anger": "sharp", "surprise": "bright"}}
        for cid, name in voiced.items()
    }
    cfg = RunConfig(
        corpus_dir=str(corpus_dir),
        out_dir=str(OUT / "run"),
        setting="B",
        min_appearances=0,
        tts_voices=tts_voices,
    )
    result = run_pipeline(cfg)
    print(f"run finished with exit code {result.exit_code}")

    manifest = (OUT / "run" / "manifest.jsonl").read_text(encoding="utf-8").splitlines()
    header, rows = json.loads(manifest[0]), [json.loads(line) for line in manifest[1:]]
    print(f"manifest schema {header['schema']}: {len(rows)} jobs\n")

    print(f"{'seq':>4} {'job':<24} {'voice':<17} {'style':<8} text")
    for row in rows:
        print(f"{row['seq']:>4} {row['job_id']:<24} {row['voice']:<17} "
              f"{row['style']:<8} {row['text'][:32]}")

    narrated = sum(1 for r in rows if r["voice"] == "narrator_default")
    print(f"\n{narrated} of {len(rows)} jobs fell through to the narrator voice")
    by_voice = sorted({r["voice"] for r in rows})
    print(f"voices used: {', '.join(by_voice)}")


if __name__ == "__main__":
    main()
