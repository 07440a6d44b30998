"""Reference-set export format and the identity classifier trained from it.

The classifier is a small convolutional net with k+1 outputs: one per
reference character plus OTHERS for everyone else.  OTHERS is trained on
synthesized noise crops so the model has somewhere to put faces that match
no reference.  Training is fully seeded; the same export, config, and seed
always produce the same artifact and the same held-out metrics.
"""

from __future__ import annotations

import colorsys
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .protocol import AdapterRequest

logger = logging.getLogger(__name__)

REFS_SCHEMA = "refs_v1"
MODEL_SCHEMA = "identity_model_v1"
OTHERS = "OTHERS"


class FinetuneError(Exception):
    """Raised when a reference export cannot support training."""


# --- reference exports ----------------------------------------------------

@dataclass(frozen=True)
class ReferenceCrop:
    path: Path
    character_id: str


@dataclass(frozen=True)
class ReferenceSet:
    root: Path
    classes: tuple[str, ...]
    crops: tuple[ReferenceCrop, ...]


def load_references(root: str | Path) -> ReferenceSet:
    """Read a reference export: refs.json plus the crop files it lists."""
    root = Path(root)
    index = root / "refs.json"
    try:
        rec = json.loads(index.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FinetuneError(
            f"no reference export at {root}: refs.json is missing"
        ) from None
    except json.JSONDecodeError as exc:
        raise FinetuneError(f"{index} is not valid JSON: {exc}") from None
    if rec.get("schema") != REFS_SCHEMA:
        raise FinetuneError(
            f"{index} has schema {rec.get('schema')!r}, expected {REFS_SCHEMA!r}"
        )
    classes = tuple(rec.get("classes", ()))
    crops = []
    for entry in rec.get("crops", ()):
        cid = entry.get("character_id")
        if cid not in classes:
            raise FinetuneError(
                f"{index} lists a crop for {cid!r}, which is not in classes {list(classes)}"
            )
        path = root / entry["path"]
        if not path.exists():
            raise FinetuneError(f"{index} lists a missing crop file: {path}")
        crops.append(ReferenceCrop(path=path, character_id=cid))
    return ReferenceSet(root=root, classes=classes, crops=tuple(crops))


def fixture_color(index: int, total: int) -> tuple[int, int, int]:
    """Base RGB for fixture class `index` of `total`: hues spread evenly."""
    r, g, b = colorsys.hsv_to_rgb(index / max(1, total), 0.75, 0.85)
    return round(r * 255), round(g * 255), round(b * 255)


def write_reference_fixture(
    root: str | Path,
    classes: tuple[str, ...] = ("alpha", "beta"),
    per_class: int = 16,
    seed: int = 0,
) -> ReferenceSet:
    """Write a synthetic export: each class is one base color plus pixel noise."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    size_rng = random.Random(seed)
    entries = []
    for i, cid in enumerate(classes):
        base = np.array(fixture_color(i, len(classes)), dtype=np.int16)
        (root / cid).mkdir(parents=True, exist_ok=True)
        for j in range(per_class):
            side = size_rng.randint(40, 56)
            noise = rng.integers(-40, 41, (side, side, 3), dtype=np.int16)
            arr = np.clip(base + noise, 0, 255).astype(np.uint8)
            rel = f"{cid}/{j:03d}.png"
            Image.fromarray(arr, "RGB").save(root / rel)
            entries.append({"path": rel, "character_id": cid})
    index = {"schema": REFS_SCHEMA, "classes": list(classes), "crops": entries}
    (root / "refs.json").write_text(json.dumps(index, indent=1) + "\n", encoding="utf-8")
    return load_references(root)


# --- training -------------------------------------------------------------

@dataclass(frozen=True)
class FinetuneConfig:
    lr: float = 1e-4
    batch_size: int = 8
    epochs: int = 40
    seed: int = 0
    holdout_fraction: float = 0.25
    rotation_degrees: float = 10.0  # augmentation draw: uniform in +-degrees
    scale_range: tuple[float, float] = (0.9, 1.1)
    image_size: int = 32
    others_negatives: int = 24  # synthesized noise crops backing the OTHERS class


@dataclass
class FinetuneResult:
    artifact: Path
    classes: tuple[str, ...]
    holdout_accuracy: float
    holdout_correct: int
    holdout_total: int
    n_train: int
    final_loss: float


class _TinyConvNet(torch.nn.Module):
    def __init__(self, n_classes: int):
        super().__init__()
        self.features = torch.nn.Sequential(
            torch.nn.Conv2d(3, 8, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.MaxPool2d(2),
            torch.nn.Conv2d(8, 16, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.AdaptiveAvgPool2d(4),
        )
        self.head = torch.nn.Linear(16 * 16, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x).flatten(1))


def _augment(img: Image.Image, rng: random.Random, cfg: FinetuneConfig) -> Image.Image:
    deg = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees)
    scale = rng.uniform(*cfg.scale_range)
    out = img.rotate(deg, resample=Image.BILINEAR, fillcolor=(127, 127, 127))
    w, h = out.size
    return out.resize((max(1, round(w * scale)), max(1, round(h * scale))), Image.BILINEAR)


def _to_tensor(img: Image.Image, size: int) -> torch.Tensor:
    resized = img.convert("RGB").resize((size, size), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1)


def finetune_identity(
    refs: ReferenceSet | str | Path,
    out_path: str | Path,
    config: FinetuneConfig = FinetuneConfig(),
) -> FinetuneResult:
    """Train the k+1-way classifier from an export and save it to out_path."""
    if not isinstance(refs, ReferenceSet):
        refs = load_references(refs)
    if not refs.crops:
        raise FinetuneError(
            f"reference export at {refs.root} lists no crops;"
            " export references before fine-tuning"
        )
    if len(refs.classes) < 2:
        raise FinetuneError(
            f"reference export at {refs.root} has {len(refs.classes)} character(s);"
            " an identity classifier needs at least 2"
        )
    per_class: dict[str, list[ReferenceCrop]] = {c: [] for c in refs.classes}
    for crop in refs.crops:
        per_class[crop.character_id].append(crop)
    thin = sorted(c for c, crops in per_class.items() if len(crops) < 2)
    if thin:
        raise FinetuneError(
            f"character(s) {', '.join(thin)} have fewer than 2 reference crops;"
            " need at least 2 per character so one can be held out"
        )

    torch.manual_seed(config.seed)
    torch.set_num_threads(1)  # keeps CPU training repeatable run to run
    rng = random.Random(config.seed)
    noise_rng = np.random.default_rng(config.seed + 1)

    classes = tuple(refs.classes) + (OTHERS,)
    label = {c: i for i, c in enumerate(classes)}

    train: list[tuple[Image.Image, int]] = []
    holdout: list[tuple[Image.Image, int]] = []
    for cid in refs.classes:
        crops = list(per_class[cid])
        rng.shuffle(crops)
        n_hold = max(1, round(len(crops) * config.holdout_fraction))
        for i, crop in enumerate(crops):
            img = Image.open(crop.path).convert("RGB")
            (holdout if i < n_hold else train).append((img, label[cid]))
    negatives = [
        Image.fromarray(noise_rng.integers(0, 256, (48, 48, 3), dtype=np.uint8), "RGB")
        for _ in range(config.others_negatives)
    ]
    n_hold = max(1, round(len(negatives) * config.holdout_fraction))
    holdout += [(img, label[OTHERS]) for img in negatives[:n_hold]]
    train += [(img, label[OTHERS]) for img in negatives[n_hold:]]

    net = _TinyConvNet(len(classes))
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    net.train()
    final_loss = float("nan")
    order = list(range(len(train)))
    for _ in range(config.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            xs = torch.stack(
                [_to_tensor(_augment(img, rng, config), config.image_size) for img, _ in batch]
            )
            ys = torch.tensor([y for _, y in batch])
            opt.zero_grad()
            loss = loss_fn(net(xs), ys)
            loss.backward()
            opt.step()
            final_loss = float(loss.detach())

    net.eval()
    with torch.no_grad():
        xs = torch.stack([_to_tensor(img, config.image_size) for img, _ in holdout])
        ys = torch.tensor([y for _, y in holdout])
        correct = int((net(xs).argmax(dim=1) == ys).sum())

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "schema": MODEL_SCHEMA,
            "classes": list(classes),
            "image_size": config.image_size,
            "state_dict": net.state_dict(),
        },
        out_path,
    )
    accuracy = correct / len(holdout)
    logger.info(
        "identity classifier over %d classes: %d/%d held out correct (%.1f%%), saved to %s",
        len(classes), correct, len(holdout), 100 * accuracy, out_path,
    )
    return FinetuneResult(
        artifact=out_path,
        classes=classes,
        holdout_accuracy=accuracy,
        holdout_correct=correct,
        holdout_total=len(holdout),
        n_train=len(train),
        final_loss=final_loss,
    )


# --- serving --------------------------------------------------------------

@dataclass
class IdentityModel:
    classes: tuple[str, ...]
    image_size: int
    net: _TinyConvNet

    @classmethod
    def load(cls, path: str | Path) -> "IdentityModel":
        try:
            rec = torch.load(path, map_location="cpu", weights_only=True)
        except FileNotFoundError:
            raise FinetuneError(f"model artifact not found: {path}") from None
        if not isinstance(rec, dict) or rec.get("schema") != MODEL_SCHEMA:
            raise FinetuneError(f"{path} is not an identity model artifact")
        net = _TinyConvNet(len(rec["classes"]))
        net.load_state_dict(rec["state_dict"])
        net.eval()
        return cls(
            classes=tuple(rec["classes"]),
            image_size=int(rec["image_size"]),
            net=net,
        )

    def predict(self, images: list[Image.Image]) -> list[tuple[str, float]]:
        """Label and softmax confidence for each crop."""
        if not images:
            return []
        with torch.no_grad():
            xs = torch.stack([_to_tensor(img, self.image_size) for img in images])
            probs = torch.softmax(self.net(xs), dim=1)
            conf, idx = probs.max(dim=1)
        return [(self.classes[i], float(c)) for i, c in zip(idx.tolist(), conf.tolist())]


def _crop_box(image: Image.Image, bbox: object) -> Image.Image | str:
    """Crop a bbox out of the page, or explain why that cannot be done."""
    if not (isinstance(bbox, (list, tuple)) and len(bbox) == 4):
        return f"bbox must be [xmin, ymin, xmax, ymax], got {bbox!r}"
    try:
        x0, y0, x1, y1 = (float(v) for v in bbox)
    except (TypeError, ValueError):
        return f"bbox has non-numeric coordinates: {bbox!r}"
    w, h = image.size
    x0, x1 = max(0, int(x0)), min(w, int(x1))
    y0, y1 = max(0, int(y0)), min(h, int(y1))
    if x1 - x0 < 1 or y1 - y0 < 1:
        return f"bbox {bbox!r} lies outside the {w}x{h} page image"
    return image.crop((x0, y0, x1, y1))


@dataclass
class ModelIdentify:
    """identify handler backed by a trained artifact; crops come from the page image."""

    model: IdentityModel
    image_root: Path | None = None

    def __call__(self, req: AdapterRequest) -> list[dict]:
        path = Path(req.image)
        if not path.is_absolute() and self.image_root is not None:
            path = self.image_root / path
        try:
            page = Image.open(path).convert("RGB")
        except (FileNotFoundError, OSError) as exc:
            msg = f"cannot read page image {path}: {exc}"
            return [{"id": it["id"], "error": msg} for it in req.items]
        out: list[dict] = []
        crops: list[Image.Image] = []
        slots: list[int] = []
        for it in req.items:
            got = _crop_box(page, it.get("bbox"))
            if isinstance(got, str):
                out.append({"id": it["id"], "error": got})
            else:
                slots.append(len(out))
                out.append({"id": it["id"]})
                crops.append(got)
        for slot, (cid, conf) in zip(slots, self.model.predict(crops)):
            out[slot].update(character_id=cid, confidence=round(conf, 4))
        return out
