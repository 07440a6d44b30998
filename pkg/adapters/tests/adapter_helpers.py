"""Shared bits for the adapter tests."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from PIL import Image

from comic_adapters.identity import fixture_color

SERVE = [sys.executable, "-m", "comic_adapters.serve"]

# Page geometry shared by the model-profile tests: one box per fixture class.
ALICE_BOX = (20, 30, 80, 100)
BOB_BOX = (150, 40, 230, 130)


def render_page(path: Path, boxes, size=(300, 200), seed=3) -> None:
    """Write a gray page PNG with fixture-colored rectangles at the given bboxes."""
    w, h = size
    page = np.full((h, w, 3), 180, dtype=np.uint8)
    rng = np.random.default_rng(seed)
    for (x0, y0, x1, y1), idx in boxes:
        base = np.array(fixture_color(idx, 2), dtype=np.int16)
        noise = rng.integers(-40, 41, (y1 - y0, x1 - x0, 3), dtype=np.int16)
        page[y0:y1, x0:x1] = np.clip(base + noise, 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(page, "RGB").save(path)
