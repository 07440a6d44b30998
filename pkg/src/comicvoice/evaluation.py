"""Scoring: speaker accuracy by difficulty, 5-way emotion report, joint accuracy.

Emotion scoring follows the asymmetric vocabulary convention: gold labels come
from 5 classes, predictions from 7.  A prediction of an out-of-gold class
(disgust, fear) costs recall for the gold class but enters no evaluated
class's precision denominator, which is why micro precision and micro recall
can differ on single-label data.  All percentages render to one decimal,
rounding half up.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import EMOTION_LABELS, LinkedSample
from .layout import CaseDifficulty

logger = logging.getLogger(__name__)

EVAL_CLASSES = EMOTION_LABELS[:5]  # neutral, surprise, anger, happiness, sadness

REPORT_SCHEMA = "report_v1"
PREDICTIONS_SCHEMA = "predictions_v1"


def round1(value: Decimal) -> float:
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def pct(numerator: int, denominator: int) -> float:
    if denominator == 0:
        return 0.0
    return round1(Decimal(numerator * 100) / Decimal(denominator))


def _pct_exact(numerator: int, denominator: int) -> Decimal:
    if denominator == 0:
        return Decimal(0)
    return Decimal(numerator * 100) / Decimal(denominator)


def _f1_exact(p: Decimal, r: Decimal) -> Decimal:
    if p + r == 0:
        return Decimal(0)
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class Prediction:
    title_id: str
    page_index: int
    text_id: str
    speaker: str
    emotion: str
    method: str = ""
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpeakerBlock:
    easy_correct: int = 0
    easy_support: int = 0
    hard_correct: int = 0
    hard_support: int = 0
    missing: int = 0

    @property
    def total_correct(self) -> int:
        return self.easy_correct + self.hard_correct

    @property
    def total_support(self) -> int:
        return self.easy_support + self.hard_support

    @property
    def easy_acc(self) -> float:
        return pct(self.easy_correct, self.easy_support)

    @property
    def hard_acc(self) -> float:
        return pct(self.hard_correct, self.hard_support)

    @property
    def total_acc(self) -> float:
        return pct(self.total_correct, self.total_support)


@dataclass(frozen=True)
class EmotionBlock:
    """Everything derives from the gold×predicted confusion matrix."""

    confusion: tuple[tuple[int, ...], ...]  # rows EVAL_CLASSES, cols EMOTION_LABELS
    excluded_gold: int = 0
    missing_pred: int = 0

    def support(self, label: str) -> int:
        return sum(self.confusion[EVAL_CLASSES.index(label)])

    def tp(self, label: str) -> int:
        i = EVAL_CLASSES.index(label)
        return self.confusion[i][EMOTION_LABELS.index(label)]

    def pred_count(self, label: str) -> int:
        j = EMOTION_LABELS.index(label)
        return sum(row[j] for row in self.confusion)

    def _precision_exact(self, label: str) -> Decimal:
        return _pct_exact(self.tp(label), self.pred_count(label))

    def _recall_exact(self, label: str) -> Decimal:
        return _pct_exact(self.tp(label), self.support(label))

    def precision(self, label: str) -> float:
        return round1(self._precision_exact(label))

    def recall(self, label: str) -> float:
        return round1(self._recall_exact(label))

    def f1(self, label: str) -> float:
        return round1(_f1_exact(self._precision_exact(label), self._recall_exact(label)))

    @property
    def total_support(self) -> int:
        return sum(sum(row) for row in self.confusion)

    @property
    def in_vocab_pred_count(self) -> int:
        return sum(self.pred_count(label) for label in EVAL_CLASSES)

    @property
    def oov_pred_count(self) -> int:
        return self.total_support - self.in_vocab_pred_count

    def _micro_exact(self) -> tuple[Decimal, Decimal]:
        tp_sum = sum(self.tp(label) for label in EVAL_CLASSES)
        return (
            _pct_exact(tp_sum, self.in_vocab_pred_count),
            _pct_exact(tp_sum, self.total_support),
        )

    def micro(self) -> tuple[float, float, float]:
        p, r = self._micro_exact()
        return round1(p), round1(r), round1(_f1_exact(p, r))

    def macro(self) -> tuple[float, float, float]:
        n = len(EVAL_CLASSES)
        p = sum(self._precision_exact(l) for l in EVAL_CLASSES) / n
        r = sum(self._recall_exact(l) for l in EVAL_CLASSES) / n
        f = sum(
            _f1_exact(self._precision_exact(l), self._recall_exact(l)) for l in EVAL_CLASSES
        ) / n
        return round1(p), round1(r), round1(f)

    def weighted(self) -> tuple[float, float, float]:
        total = self.total_support
        if total == 0:
            return 0.0, 0.0, 0.0
        p = sum(self.support(l) * self._precision_exact(l) for l in EVAL_CLASSES) / total
        r = sum(self.support(l) * self._recall_exact(l) for l in EVAL_CLASSES) / total
        f = sum(
            self.support(l) * _f1_exact(self._precision_exact(l), self._recall_exact(l))
            for l in EVAL_CLASSES
        ) / total
        return round1(p), round1(r), round1(f)

    def zero_division_flags(self) -> list[str]:
        flags = []
        for label in EVAL_CLASSES:
            if self.pred_count(label) == 0:
                flags.append(f"zero_division:{label}:precision")
            if self.support(label) == 0:
                flags.append(f"zero_division:{label}:recall")
        return flags


@dataclass(frozen=True)
class JointBlock:
    correct: int = 0
    support: int = 0

    @property
    def acc(self) -> float:
        return pct(self.correct, self.support)


@dataclass(frozen=True)
class EvalReport:
    method_tag: str
    speaker: SpeakerBlock
    emotion: EmotionBlock
    joint: JointBlock
    schema: str = REPORT_SCHEMA


# --- scoring --------------------------------------------------------------

def _index(preds: Iterable[Prediction]) -> dict[tuple[str, str], Prediction]:
    out: dict[tuple[str, str], Prediction] = {}
    for p in preds:
        key = (p.title_id, p.text_id)
        if key in out:
            logger.warning("duplicate prediction for %s/%s; keeping the first", *key)
            continue
        out[key] = p
    return out


def score_speakers(
    preds: Iterable[Prediction],
    gold: Iterable[LinkedSample],
    difficulties: Mapping[tuple[str, str], CaseDifficulty],
) -> SpeakerBlock:
    """Accuracy split by easy/hard; a sample without a prediction counts wrong."""
    by_key = _index(preds)
    gold = list(gold)
    gold_keys = {(s.title_id, s.text_element_id) for s in gold}
    for key in by_key.keys() - gold_keys:
        logger.warning("prediction for unknown sample %s/%s ignored", *key)
    easy_c = easy_s = hard_c = hard_s = missing = 0
    for sample in gold:
        key = (sample.title_id, sample.text_element_id)
        diff = difficulties[key]
        pred = by_key.get(key)
        correct = pred is not None and pred.speaker == sample.gt_speaker
        if pred is None:
            missing += 1
        if diff is CaseDifficulty.EASY:
            easy_s += 1
            easy_c += int(correct)
        else:
            hard_s += 1
            hard_c += int(correct)
    return SpeakerBlock(easy_c, easy_s, hard_c, hard_s, missing)


def score_emotions(
    preds: Iterable[Prediction],
    gold: Iterable[LinkedSample],
) -> EmotionBlock:
    """Confusion over gold 5-class × predicted 7-class samples."""
    by_key = _index(preds)
    matrix = [[0] * len(EMOTION_LABELS) for _ in EVAL_CLASSES]
    excluded = 0
    missing = 0
    for sample in gold:
        if sample.gt_emotion not in EVAL_CLASSES:
            excluded += 1
            continue
        pred = by_key.get((sample.title_id, sample.text_element_id))
        if pred is None or pred.emotion not in EMOTION_LABELS:
            missing += 1
            continue
        matrix[EVAL_CLASSES.index(sample.gt_emotion)][EMOTION_LABELS.index(pred.emotion)] += 1
    if excluded:
        logger.info("%d samples with out-of-scope gold emotion excluded", excluded)
    return EmotionBlock(
        confusion=tuple(tuple(row) for row in matrix),
        excluded_gold=excluded,
        missing_pred=missing,
    )


def score_joint(preds: Iterable[Prediction], gold: Iterable[LinkedSample]) -> JointBlock:
    """Fraction of emotion-scored samples with speaker AND emotion both right."""
    by_key = _index(preds)
    correct = support = 0
    for sample in gold:
        if sample.gt_emotion not in EVAL_CLASSES:
            continue
        support += 1
        pred = by_key.get((sample.title_id, sample.text_element_id))
        if pred is None:
            continue
        if pred.speaker == sample.gt_speaker and pred.emotion == sample.gt_emotion:
            correct += 1
    return JointBlock(correct, support)


def build_report(
    preds: Iterable[Prediction],
    gold: Iterable[LinkedSample],
    difficulties: Mapping[tuple[str, str], CaseDifficulty],
    method_tag: str,
) -> EvalReport:
    preds = list(preds)
    gold = list(gold)
    return EvalReport(
        method_tag=method_tag,
        speaker=score_speakers(preds, gold, difficulties),
        emotion=score_emotions(preds, gold),
        joint=score_joint(preds, gold),
    )


# --- rendering ------------------------------------------------------------

def report_to_dict(report: EvalReport) -> dict:
    emotion = report.emotion
    mi, ma, we = emotion.micro(), emotion.macro(), emotion.weighted()
    return {
        "schema": report.schema,
        "method": report.method_tag,
        "speaker": {
            "easy_correct": report.speaker.easy_correct,
            "easy_support": report.speaker.easy_support,
            "hard_correct": report.speaker.hard_correct,
            "hard_support": report.speaker.hard_support,
            "missing": report.speaker.missing,
            "easy_acc": report.speaker.easy_acc,
            "hard_acc": report.speaker.hard_acc,
            "total_acc": report.speaker.total_acc,
        },
        "emotion": {
            "labels": list(EVAL_CLASSES),
            "pred_labels": list(EMOTION_LABELS),
            "confusion": [list(row) for row in emotion.confusion],
            "excluded_gold": emotion.excluded_gold,
            "missing_pred": emotion.missing_pred,
            "per_class": {
                label: {
                    "precision": emotion.precision(label),
                    "recall": emotion.recall(label),
                    "f1": emotion.f1(label),
                    "support": emotion.support(label),
                }
                for label in EVAL_CLASSES
            },
            "micro": {"precision": mi[0], "recall": mi[1], "f1": mi[2]},
            "macro": {"precision": ma[0], "recall": ma[1], "f1": ma[2]},
            "weighted": {"precision": we[0], "recall": we[1], "f1": we[2]},
            "flags": emotion.zero_division_flags(),
        },
        "joint": {
            "correct": report.joint.correct,
            "support": report.joint.support,
            "acc": report.joint.acc,
        },
    }


def report_from_dict(data: dict) -> EvalReport:
    sp = data["speaker"]
    em = data["emotion"]
    return EvalReport(
        method_tag=data["method"],
        speaker=SpeakerBlock(
            easy_correct=sp["easy_correct"],
            easy_support=sp["easy_support"],
            hard_correct=sp["hard_correct"],
            hard_support=sp["hard_support"],
            missing=sp.get("missing", 0),
        ),
        emotion=EmotionBlock(
            confusion=tuple(tuple(row) for row in em["confusion"]),
            excluded_gold=em.get("excluded_gold", 0),
            missing_pred=em.get("missing_pred", 0),
        ),
        joint=JointBlock(data["joint"]["correct"], data["joint"]["support"]),
        schema=data.get("schema", REPORT_SCHEMA),
    )


def _text_table(report: EvalReport) -> str:
    sp = report.speaker
    lines = [f"== speakers ({report.method_tag}) =="]
    lines.append(f"easy   {sp.easy_acc:5.1f}  ({sp.easy_correct}/{sp.easy_support})")
    lines.append(f"hard   {sp.hard_acc:5.1f}  ({sp.hard_correct}/{sp.hard_support})")
    lines.append(f"total  {sp.total_acc:5.1f}  ({sp.total_correct}/{sp.total_support})")
    lines.append("")
    em = report.emotion
    lines.append("== emotions ==")
    lines.append(f"{'label':<12}{'prec':>7}{'rec':>7}{'f1':>7}{'support':>9}")
    for label in EVAL_CLASSES:
        lines.append(
            f"{label:<12}{em.precision(label):>7.1f}{em.recall(label):>7.1f}"
            f"{em.f1(label):>7.1f}{em.support(label):>9}"
        )
    for name, triple in (("micro avg", em.micro()), ("macro avg", em.macro()), ("weighted", em.weighted())):
        lines.append(
            f"{name:<12}{triple[0]:>7.1f}{triple[1]:>7.1f}{triple[2]:>7.1f}{em.total_support:>9}"
        )
    flags = em.zero_division_flags()
    if flags:
        lines.append("flags: " + ", ".join(flags))
    lines.append("")
    j = report.joint
    lines.append(f"joint accuracy: {j.acc:.1f} ({j.correct}/{j.support})")
    return "\n".join(lines) + "\n"


def _csv(report: EvalReport) -> str:
    em = report.emotion
    rows = ["label,precision,recall,f1,support"]
    for label in EVAL_CLASSES:
        rows.append(
            f"{label},{em.precision(label):.1f},{em.recall(label):.1f},"
            f"{em.f1(label):.1f},{em.support(label)}"
        )
    for name, triple in (("micro_avg", em.micro()), ("macro_avg", em.macro()), ("weighted_avg", em.weighted())):
        rows.append(f"{name},{triple[0]:.1f},{triple[1]:.1f},{triple[2]:.1f},{em.total_support}")
    return "\n".join(rows) + "\n"


def _confusion_png(report: EvalReport) -> bytes:
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matrix = [list(row) for row in report.emotion.confusion]
    fig, ax = plt.subplots(figsize=(7, 5))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(EMOTION_LABELS)), EMOTION_LABELS, rotation=45, ha="right")
    ax.set_yticks(range(len(EVAL_CLASSES)), EVAL_CLASSES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            ax.text(j, i, str(v), ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png")
    plt.close(fig)
    return buf.getvalue()


def render_report(report: EvalReport, fmt: str) -> bytes:
    if fmt == "json":
        return (json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "text_table":
        return _text_table(report).encode()
    if fmt == "csv":
        return _csv(report).encode()
    if fmt == "confusion_png_data":
        return _confusion_png(report)
    raise ValueError(f"unknown report format {fmt!r}")


# --- predictions JSON-lines -----------------------------------------------

def write_predictions(preds: Iterable[Prediction], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"type": "header", "schema": PREDICTIONS_SCHEMA}) + "\n")
        for p in preds:
            fh.write(
                json.dumps(
                    {
                        "title": p.title_id,
                        "page": p.page_index,
                        "text_id": p.text_id,
                        "pred_speaker": p.speaker,
                        "pred_emotion": p.emotion,
                        "method": p.method,
                        "flags": list(p.flags),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_predictions(path: str | Path) -> list[Prediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("type") == "header":
                continue
            out.append(
                Prediction(
                    title_id=rec["title"],
                    page_index=rec["page"],
                    text_id=rec["text_id"],
                    speaker=rec["pred_speaker"],
                    emotion=rec["pred_emotion"],
                    method=rec.get("method", ""),
                    flags=tuple(rec.get("flags", ())),
                )
            )
    return out
