"""Run configuration: one JSON file drives every pipeline stage.

Only the LLM API key lives in the environment (named by api_key_env); every
other knob is an explicit config key so a saved snapshot reproduces a run.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .tts import ConfigError, VoiceProfile

SETTINGS = ("A", "B", "C")
IDENTITY_BACKENDS = ("oracle", "noisy", "adapter")
INTENSITY_BACKENDS = ("oracle", "miscalibrated", "adapter")
OCR_BACKENDS = ("oracle", "adapter")
LLM_BACKENDS = ("scripted", "cassette", "live")
SPLIT_MODES = ("none", "two_page", "four_koma")
TTS_BACKENDS = ("manifest_only", "adapter")


@dataclass
class RunConfig:
    corpus_dir: str
    out_dir: str
    titles: Optional[list[str]] = None  # None = every title found in corpus_dir
    pages_per_title: Optional[int] = None  # first N pages of each title
    setting: str = "A"

    identity_backend: str = "oracle"
    identity_epsilon: float = 0.0
    intensity_backend: str = "oracle"
    ocr_backend: str = "oracle"

    llm_backend: str = "scripted"
    cassette_path: Optional[str] = None
    cassette_mode: str = "replay_strict"
    live_endpoint: Optional[str] = None
    live_model: Optional[str] = None
    api_key_env: str = "LLM_API_KEY"
    live_timeout: float = 60.0
    live_max_concurrent: int = 2

    adapter_cmd: Optional[list[str]] = None  # argv of a stdio adapter process
    adapter_url: Optional[str] = None

    seed: int = 0
    reading_direction: str = "rtl"
    merge_iou: float = 0.4
    split_mode: dict[str, str] = field(default_factory=dict)  # per-title override
    min_appearances: int = 50
    n_ref: int = 40
    global_budget: int = 2000
    local_budget: int = 800
    max_retries: int = 2
    workers: int = 1

    tts_backend: str = "manifest_only"
    # character_id -> {"voice": ..., "styles": {...}, "default_style": ...}
    tts_voices: dict[str, dict] = field(default_factory=dict)
    narrator_voice: Optional[dict] = field(
        default_factory=lambda: {"voice": "narrator_default", "default_style": "plain"}
    )

    def validate(self) -> None:
        def expect(value, allowed, key):
            if value not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {value!r}")

        expect(self.setting, SETTINGS, "setting")
        expect(self.identity_backend, IDENTITY_BACKENDS, "identity_backend")
        expect(self.intensity_backend, INTENSITY_BACKENDS, "intensity_backend")
        expect(self.ocr_backend, OCR_BACKENDS, "ocr_backend")
        expect(self.llm_backend, LLM_BACKENDS, "llm_backend")
        expect(self.reading_direction, ("rtl", "ltr"), "reading_direction")
        expect(self.tts_backend, TTS_BACKENDS, "tts_backend")
        for title, mode in self.split_mode.items():
            expect(mode, SPLIT_MODES, f"split_mode[{title}]")
        if not 0.0 <= self.identity_epsilon <= 1.0:
            raise ConfigError("identity_epsilon must be within [0, 1]")
        if self.setting == "C":
            pure_oracle = self.identity_backend == "oracle" or (
                self.identity_backend == "noisy" and self.identity_epsilon == 0.0
            )
            if pure_oracle:
                raise ConfigError(
                    "setting C evaluates predicted identity: use the adapter backend "
                    "or the noisy backend with epsilon > 0"
                )
        if self.llm_backend == "cassette" and not self.cassette_path:
            raise ConfigError("llm_backend=cassette needs cassette_path")
        if self.llm_backend == "live" and not (self.live_endpoint and self.live_model):
            raise ConfigError("llm_backend=live needs live_endpoint and live_model")
        if "adapter" in (self.identity_backend, self.intensity_backend, self.ocr_backend) or (
            self.tts_backend == "adapter"
        ):
            if not (self.adapter_cmd or self.adapter_url):
                raise ConfigError("adapter backends need adapter_cmd or adapter_url")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def voice_profiles(self) -> dict[str, VoiceProfile]:
        out = {}
        for char_id, spec in self.tts_voices.items():
            out[char_id] = VoiceProfile(
                character_id=char_id,
                reference_voice_id=spec["voice"],
                styles=dict(spec.get("styles", {})),
                default_style=spec.get("default_style", "plain"),
            )
        return out

    def narrator_profile(self) -> Optional[VoiceProfile]:
        if self.narrator_voice is None:
            return None
        spec = self.narrator_voice
        return VoiceProfile(
            character_id="NARRATOR",
            reference_voice_id=spec["voice"],
            styles=dict(spec.get("styles", {})),
            default_style=spec.get("default_style", "plain"),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in RunConfig.__dataclass_fields__.values()}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "corpus_dir" not in data or "out_dir" not in data:
        raise ConfigError("config needs corpus_dir and out_dir")
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_snapshot(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(cfg.to_json(), encoding="utf-8")
    return path
