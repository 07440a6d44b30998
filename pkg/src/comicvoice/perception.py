"""Perception channels: character identity, emotion intensity, OCR.

Each channel is served by an interchangeable backend.  Oracles read the
annotations; noisy variants corrupt oracle output under a seeded generator (so
runs are reproducible per (seed, title, page, instance)); adapter backends
forward crops to an external process speaking the adapter protocol.
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .adapter import AdapterError
from .corpus import TitleCorpus
from .layout import SceneGraph

logger = logging.getLogger(__name__)

OTHERS = "OTHERS"

DEFAULT_LOGIT_MAGNITUDE = 2.0

# flip rates reproducing the published per-class accuracies of the intensity
# estimator: neutral 41.6% (flip 0.584), strong 87.8% (flip 0.122)
NEUTRAL_FLIP_RATE = 0.584
STRONG_FLIP_RATE = 0.122


@dataclass(frozen=True)
class CharacterRegistry:
    title_id: str
    main_characters: tuple[str, ...]
    error: Optional[str] = None

    @property
    def k(self) -> int:
        return len(self.main_characters)

    def resolve(self, character_id: str) -> str:
        return character_id if character_id in self.main_characters else OTHERS


@dataclass(frozen=True)
class ReferenceSet:
    # per main character: (title_id, element_id) crop references
    references: dict[str, tuple[tuple[str, str], ...]]
    negatives: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class CharPrediction:
    char_instance_id: str
    predicted: str  # character_id or OTHERS
    confidence: float
    error: Optional[str] = None


@dataclass(frozen=True)
class EmotionIntensity:
    char_instance_id: str
    z: float
    error: Optional[str] = None

    @property
    def e(self) -> int:
        return 1 if self.z > 0 else 0


def build_registry(
    corpus: TitleCorpus,
    min_appearances: int = 50,
    n_ref: int = 40,
    seed: int = 0,
    negative_pool: list[tuple[str, str]] | None = None,
) -> tuple[CharacterRegistry, ReferenceSet]:
    """Pick main characters (body count strictly above the threshold) and sample crops."""
    counts = corpus.body_counts()
    main = tuple(sorted(c for c, n in counts.items() if n > min_appearances))
    error = None
    if not main:
        error = f"no character of {corpus.title_id} appears more than {min_appearances} times"
        logger.error(error)
    rng = random.Random(seed)
    refs: dict[str, tuple[tuple[str, str], ...]] = {}
    for char in main:
        crops = [b.id for p in corpus.pages for b in p.bodies if b.character_id == char]
        if len(crops) > n_ref:
            crops = rng.sample(crops, n_ref)
        else:
            logger.warning(
                "%s: character %s has %d crops, below n_ref=%d; using all",
                corpus.title_id, char, len(crops), n_ref,
            )
        refs[char] = tuple((corpus.title_id, c) for c in sorted(crops))
    negatives: tuple[tuple[str, str], ...] = ()
    if negative_pool:
        pool = sorted(negative_pool)
        take = min(n_ref, len(pool))
        negatives = tuple(rng.sample(pool, take))
    registry = CharacterRegistry(corpus.title_id, main, error=error)
    return registry, ReferenceSet(references=refs, negatives=negatives)


def _instance_rng(seed: int, title: str, page: int, instance: str) -> random.Random:
    material = f"{seed}|{title}|{page}|{instance}".encode()
    return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))


def _default_image_path(scene: SceneGraph) -> str:
    return f"{scene.page_ref.title_id}/{scene.page_ref.page_index:06d}.png"


# --- identity -------------------------------------------------------------

class IdentityBackend(Protocol):
    def identify(self, scene: SceneGraph) -> list[CharPrediction]: ...


@dataclass
class OracleIdentity:
    """Annotation truth, folded onto the registry label set."""

    registry: CharacterRegistry

    def identify(self, scene: SceneGraph) -> list[CharPrediction]:
        return [
            CharPrediction(cid, self.registry.resolve(scene.char_identity(cid)), 1.0)
            for cid, _ in scene.chars
        ]


@dataclass
class NoisyIdentity:
    """Oracle with labels flipped to a uniformly random wrong class at rate epsilon."""

    registry: CharacterRegistry
    epsilon: float
    seed: int = 0

    def identify(self, scene: SceneGraph) -> list[CharPrediction]:
        labels = list(self.registry.main_characters) + [OTHERS]
        page = scene.page_ref
        out = []
        for cid, _ in scene.chars:
            truth = self.registry.resolve(scene.char_identity(cid))
            rng = _instance_rng(self.seed, page.title_id, page.page_index, cid)
            predicted = truth
            if rng.random() < self.epsilon:
                wrong = [l for l in labels if l != truth]
                if wrong:
                    predicted = rng.choice(wrong)
            out.append(CharPrediction(cid, predicted, 1.0 - self.epsilon))
        return out


@dataclass
class AdapterIdentity:
    client: object  # StdioAdapterClient or HttpAdapterClient
    image_path: Callable[[SceneGraph], str] = field(default=_default_image_path)

    def identify(self, scene: SceneGraph) -> list[CharPrediction]:
        page = scene.page_ref
        items = [{"id": cid, "bbox": [b.xmin, b.ymin, b.xmax, b.ymax]} for cid, b in scene.chars]
        if not items:
            return []
        try:
            resp = self.client.request(
                "identify", page.title_id, page.page_index, self.image_path(scene), items
            )
        except AdapterError as exc:
            logger.warning("identify adapter failed, falling back to OTHERS: %s", exc)
            return [CharPrediction(cid, OTHERS, 0.0, error=str(exc)) for cid, _ in scene.chars]
        out = []
        for it in resp:
            if "error" in it:
                out.append(CharPrediction(it["id"], OTHERS, 0.0, error=str(it["error"])))
            else:
                out.append(CharPrediction(it["id"], it["character_id"], float(it["confidence"])))
        return out


def identify_characters(scene: SceneGraph, backend: IdentityBackend) -> list[CharPrediction]:
    preds = backend.identify(scene)
    if len(preds) != scene.n_char:
        raise RuntimeError(
            f"identity backend returned {len(preds)} predictions for {scene.n_char} instances"
        )
    return preds


# --- intensity ------------------------------------------------------------

class IntensityBackend(Protocol):
    def intensity(self, scene: SceneGraph) -> list[EmotionIntensity]: ...


def _gold_strong(scene: SceneGraph, instance_id: str) -> bool:
    """True when the instance is a face annotated with a non-neutral emotion."""
    for f in scene.page_ref.faces:
        if f.id == instance_id:
            return f.emotion is not None and f.emotion != "neutral"
    return False


@dataclass
class OracleIntensity:
    magnitude: float = DEFAULT_LOGIT_MAGNITUDE

    def intensity(self, scene: SceneGraph) -> list[EmotionIntensity]:
        return [
            EmotionIntensity(cid, self.magnitude if _gold_strong(scene, cid) else -self.magnitude)
            for cid, _ in scene.chars
        ]


@dataclass
class MiscalibratedIntensity:
    """Oracle with per-class flip rates matching the published estimator accuracies."""

    seed: int = 0
    neutral_flip: float = NEUTRAL_FLIP_RATE
    strong_flip: float = STRONG_FLIP_RATE
    magnitude: float = DEFAULT_LOGIT_MAGNITUDE

    def intensity(self, scene: SceneGraph) -> list[EmotionIntensity]:
        page = scene.page_ref
        out = []
        for cid, _ in scene.chars:
            strong = _gold_strong(scene, cid)
            rng = _instance_rng(self.seed, page.title_id, page.page_index, cid)
            flip = rng.random() < (self.strong_flip if strong else self.neutral_flip)
            positive = strong != flip
            out.append(EmotionIntensity(cid, self.magnitude if positive else -self.magnitude))
        return out


@dataclass
class AdapterIntensity:
    client: object
    image_path: Callable[[SceneGraph], str] = field(default=_default_image_path)
    magnitude: float = DEFAULT_LOGIT_MAGNITUDE

    def intensity(self, scene: SceneGraph) -> list[EmotionIntensity]:
        page = scene.page_ref
        items = [{"id": cid, "bbox": [b.xmin, b.ymin, b.xmax, b.ymax]} for cid, b in scene.chars]
        if not items:
            return []
        try:
            resp = self.client.request(
                "intensity", page.title_id, page.page_index, self.image_path(scene), items
            )
        except AdapterError as exc:
            logger.warning("intensity adapter failed, falling back to neutral: %s", exc)
            return [EmotionIntensity(cid, -self.magnitude, error=str(exc)) for cid, _ in scene.chars]
        out = []
        for it in resp:
            if "error" in it:
                out.append(EmotionIntensity(it["id"], -self.magnitude, error=str(it["error"])))
            else:
                out.append(EmotionIntensity(it["id"], float(it["z"])))
        return out


def estimate_intensity(scene: SceneGraph, backend: IntensityBackend) -> list[EmotionIntensity]:
    scores = backend.intensity(scene)
    if len(scores) != scene.n_char:
        raise RuntimeError(
            f"intensity backend returned {len(scores)} scores for {scene.n_char} instances"
        )
    return scores


# --- OCR ------------------------------------------------------------------

class OcrBackend(Protocol):
    def recognize(self, scene: SceneGraph) -> dict[str, str]: ...


class OracleOcr:
    def recognize(self, scene: SceneGraph) -> dict[str, str]:
        return {tid: content for tid, _box, content in scene.texts}


@dataclass
class AdapterOcr:
    client: object
    image_path: Callable[[SceneGraph], str] = field(default=_default_image_path)

    def recognize(self, scene: SceneGraph) -> dict[str, str]:
        page = scene.page_ref
        items = [{"id": tid, "bbox": [b.xmin, b.ymin, b.xmax, b.ymax]} for tid, b, _ in scene.texts]
        if not items:
            return {}
        try:
            resp = self.client.request(
                "ocr", page.title_id, page.page_index, self.image_path(scene), items
            )
        except AdapterError as exc:
            logger.warning("ocr adapter failed, returning empty strings: %s", exc)
            return {tid: "" for tid, _b, _c in scene.texts}
        out = {}
        for it in resp:
            if "error" in it:
                logger.warning("ocr failed for %s: %s", it["id"], it["error"])
                out[it["id"]] = ""
            else:
                out[it["id"]] = str(it["text"])
        return out


def ocr_text(scene: SceneGraph, backend: OcrBackend) -> dict[str, str]:
    texts = backend.recognize(scene)
    missing = {tid for tid, _b, _c in scene.texts} - set(texts)
    if missing:
        raise RuntimeError(f"ocr backend skipped text boxes: {sorted(missing)}")
    return texts
