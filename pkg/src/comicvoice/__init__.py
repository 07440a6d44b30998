"""Comic pages with box annotations in; attributed, emotion-tagged dialogue and TTS plans out."""

from .baselines import ABSTAIN, UNKNOWN, SpeakerPrediction, frame_distance, short_distance
from .corpus import (
    EMOTION_LABELS,
    LinkedSample,
    PageAnnotation,
    SpeakerLink,
    TitleCorpus,
    build_linked_set,
    dump_corpus,
    load_corpus,
    parse_title,
    select_test_titles,
)
from .evaluation import (
    EvalReport,
    Prediction,
    build_report,
    render_report,
    score_emotions,
    score_joint,
    score_speakers,
)
from .geometry import BBox
from .layout import (
    UNASSIGNED,
    CaseDifficulty,
    FrameSequence,
    SceneGraph,
    assign_elements,
    classify_case,
    order_frames,
    scene_from_page,
    sequence_scene,
    split_spread,
)
from .perception import (
    OTHERS,
    CharacterRegistry,
    CharPrediction,
    EmotionIntensity,
    build_registry,
    estimate_intensity,
    identify_characters,
    ocr_text,
)
from .attribution import (
    AttributionResult,
    MemoryState,
    PagePrompt,
    ParseFailure,
    attribute_page,
    build_prompt,
    parse_response,
)
from .config import RunConfig, load_config
from .pipeline import run_baselines, run_pipeline
from .tts import TTSJob, VoiceProfile, dispatch, plan_jobs

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN", "UNKNOWN", "UNASSIGNED", "OTHERS",
    "BBox", "PageAnnotation", "TitleCorpus", "SpeakerLink", "LinkedSample",
    "EMOTION_LABELS", "parse_title", "build_linked_set", "select_test_titles",
    "dump_corpus", "load_corpus",
    "SceneGraph", "FrameSequence", "CaseDifficulty", "scene_from_page",
    "split_spread", "order_frames", "assign_elements", "sequence_scene", "classify_case",
    "SpeakerPrediction", "short_distance", "frame_distance",
    "CharacterRegistry", "CharPrediction", "EmotionIntensity",
    "build_registry", "identify_characters", "estimate_intensity", "ocr_text",
    "MemoryState", "PagePrompt", "AttributionResult", "ParseFailure",
    "build_prompt", "parse_response", "attribute_page",
    "Prediction", "EvalReport", "score_speakers", "score_emotions", "score_joint",
    "build_report", "render_report",
    "VoiceProfile", "TTSJob", "plan_jobs", "dispatch",
    "RunConfig", "load_config", "run_pipeline", "run_baselines",
    "__version__",
]
