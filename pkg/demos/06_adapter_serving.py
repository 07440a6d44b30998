"""The adapter protocol end to end: echo conformance, a trained identity
model behind the same wire format, and a full pipeline run over adapters.

Adapters are separate processes speaking line-JSON over stdio (or HTTP).
The pipeline only ever sees the protocol, so swapping the echo profile for
a trained model is a config change, not a code change.

Requires the comic-adapters package:  pip install -e adapters/
Run from the repo root:  python3 demos/06_adapter_serving.py [out_dir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from comicvoice import synth
from comicvoice.adapter import StdioAdapterClient, run_conformance
from comicvoice.config import RunConfig
from comicvoice.pipeline import run_pipeline

from comic_adapters.identity import (
    FinetuneConfig,
    finetune_identity,
    fixture_color,
    write_reference_fixture,
)

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "out" / "06_adapter_serving"
SERVE = [sys.executable, "-m", "comic_adapters.serve", "--stdio"]


def render_page(path: Path, boxes) -> None:
    page = np.full((200, 300, 3), 180, dtype=np.uint8)
    rng = np.random.default_rng(3)
    for (x0, y0, x1, y1), idx in boxes:
        base = np.array(fixture_color(idx, 2), dtype=np.int16)
        noise = rng.integers(-40, 41, (y1 - y0, x1 - x0, 3), dtype=np.int16)
        page[y0:y1, x0:x1] = np.clip(base + noise, 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(page, "RGB").save(path)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)

    # 1. The echo profile answers every op with fixed values; hammer it.
    client = StdioAdapterClient(SERVE)
    try:
        print(f"echo manifest: ops={list(client.manifest.ops)}, protocol={client.manifest.protocol}")
        report = run_conformance(client, n_requests=200, seed=1)
        print(f"conformance: {report.n_requests} randomized requests, "
              f"{len(report.violations)} violations")
    finally:
        client.close()

    # 2. Fine-tune the identity classifier on a color-separable fixture.
    refs = write_reference_fixture(OUT / "refs", classes=("alice", "bob"), per_class=16, seed=7)
    result = finetune_identity(refs, OUT / "identity.pt", FinetuneConfig(epochs=25, seed=0))
    print(f"\nfine-tuned identity over {result.classes}: "
          f"{result.holdout_correct}/{result.holdout_total} held out correct "
          f"({result.holdout_accuracy:.0%})")

    # 3. Serve that artifact behind the same protocol and ask about a page.
    alice_box, bob_box = (20, 30, 80, 100), (150, 40, 230, 130)
    render_page(OUT / "images" / "t" / "000000.png", [(alice_box, 0), (bob_box, 1)])
    (OUT / "adapter.json").write_text(json.dumps({
        "schema": "adapter_config_v1",
        "name": "demo-models",
        "image_root": "images",
        "models": {"identify": {"artifact": "identity.pt"}},
    }))
    client = StdioAdapterClient([*SERVE, "--profile", "models", "--config", str(OUT / "adapter.json")])
    try:
        print(f"models manifest: ops={list(client.manifest.ops)}")
        items = client.request("identify", "t", 0, "t/000000.png", [
            {"id": "left_box", "bbox": list(alice_box)},
            {"id": "right_box", "bbox": list(bob_box)},
        ])
        for it in items:
            print(f"  {it['id']}: {it['character_id']} (confidence {it['confidence']})")
    finally:
        client.close()

    # 4. A whole pipeline run where identity and intensity come from the adapter.
    corpus_dir = OUT / "corpus"
    corpus_dir.mkdir(exist_ok=True)
    synth.write_title_tree(synth.generate_title(61, n_pages=3, n_chars=3), corpus_dir)
    cfg = RunConfig(
        corpus_dir=str(corpus_dir),
        out_dir=str(OUT / "run"),
        setting="C",
        identity_backend="adapter",
        intensity_backend="adapter",
        adapter_cmd=SERVE,
        llm_backend="scripted",
        min_appearances=0,
    )
    run = run_pipeline(cfg)
    print(f"\nSetting C over the echo adapter: exit code {run.exit_code}, "
          f"report at {OUT / 'run' / 'report.llm.json'}")


if __name__ == "__main__":
    main()
