"""Stage orchestration: ingest, layout, perception, attribution, scoring, TTS planning.

Titles run independently (optionally in parallel); pages within a title run
strictly in order because the attribution memory carries across pages.  Each
stage persists JSON-lines artifacts under the output directory, every run
starts by snapshotting its config, and one title's failure never stops the
others.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from . import corpus as corpus_mod
from .adapter import HttpAdapterClient, StdioAdapterClient
from .attribution import (
    AttributionResult,
    MemoryState,
    RetryPolicy,
    TextOutcome,
    attribute_page,
)
from .baselines import frame_distance, short_distance
from .config import RunConfig, save_snapshot
from .corpus import LinkedSample, TitleCorpus, build_linked_set, parse_title
from .evaluation import (
    EvalReport,
    Prediction,
    build_report,
    read_predictions,
    render_report,
    write_predictions,
)
from .layout import (
    CaseDifficulty,
    SceneGraph,
    FrameSequence,
    classify_case,
    scene_from_page,
    sequence_scene,
    split_spread,
)
from .llm import CassetteBackend, LiveChatBackend, ScriptedBackend
from .perception import (
    AdapterIdentity,
    AdapterIntensity,
    AdapterOcr,
    MiscalibratedIntensity,
    NoisyIdentity,
    OracleIdentity,
    OracleIntensity,
    OracleOcr,
    build_registry,
    estimate_intensity,
    identify_characters,
    ocr_text,
)
from .tts import ConfigError, dispatch, plan_jobs, reading_ordered_texts

logger = logging.getLogger(__name__)

LAYOUT_SCHEMA = "layout_v1"
PERCEPTION_SCHEMA = "perception_v1"


@dataclass
class TitleProducts:
    title_id: str
    corpus: TitleCorpus
    scenes: list[SceneGraph] = field(default_factory=list)
    seqs: list[FrameSequence] = field(default_factory=list)
    results: list[AttributionResult] = field(default_factory=list)
    predictions: list[Prediction] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class RunResult:
    out_dir: Path
    titles: dict[str, TitleProducts]
    report: Optional[EvalReport] = None
    manifest_rows: list[dict] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if any(t.error for t in self.titles.values()) else 0


def discover_titles(cfg: RunConfig) -> list[str]:
    corpus_dir = Path(cfg.corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory {corpus_dir} does not exist")
    found = sorted(p.stem for p in corpus_dir.glob("*.xml"))
    if cfg.titles is None:
        return found
    missing = set(cfg.titles) - set(found)
    if missing:
        raise FileNotFoundError(f"titles not in corpus: {sorted(missing)}")
    return [t for t in found if t in set(cfg.titles)]


def load_title(cfg: RunConfig, title: str) -> TitleCorpus:
    corpus_dir = Path(cfg.corpus_dir)
    speakers = corpus_dir / f"{title}.speakers.jsonl"
    emotions = corpus_dir / f"{title}.emotions.jsonl"
    return parse_title(
        corpus_dir / f"{title}.xml",
        speaker_file=speakers if speakers.exists() else None,
        emotion_file=emotions if emotions.exists() else None,
    )


def build_scenes(cfg: RunConfig, corpus: TitleCorpus) -> tuple[list[SceneGraph], list[FrameSequence]]:
    """Pages (capped, sorted) through spread splitting and frame sequencing."""
    mode = cfg.split_mode.get(corpus.title_id, "none")
    pages = sorted(corpus.pages, key=lambda p: p.page_index)
    if cfg.pages_per_title is not None:
        pages = pages[: cfg.pages_per_title]
    scenes: list[SceneGraph] = []
    for page in pages:
        if mode == "none":
            scenes.append(scene_from_page(page))
        else:
            scenes.extend(split_spread(page, mode))
    seqs = [sequence_scene(s, cfg.reading_direction, cfg.merge_iou) for s in scenes]
    return scenes, seqs


def _write_jsonl(path: Path, header: dict, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_layout_file(out_dir: Path, title: str, scenes: list[SceneGraph], seqs: list[FrameSequence]) -> None:
    rows = []
    for scene, seq in zip(scenes, seqs):
        rows.append(
            {
                "title": title,
                "page": scene.page_ref.page_index,
                "region": scene.region_index,
                "ordered_frames": list(seq.ordered_frames),
                "assignment": dict(sorted(seq.assignment.items())),
            }
        )
    _write_jsonl(out_dir / "layout" / f"{title}.jsonl", {"type": "header", "schema": LAYOUT_SCHEMA}, rows)


def _adapter_factory(cfg: RunConfig) -> Callable[[], object]:
    if cfg.adapter_url:
        shared = HttpAdapterClient(cfg.adapter_url)
        return lambda: shared
    if cfg.adapter_cmd:
        return lambda: StdioAdapterClient(list(cfg.adapter_cmd))
    raise ConfigError("adapter backend requested but no adapter_cmd/adapter_url configured")


def _make_llm_backend(cfg: RunConfig):
    if cfg.llm_backend == "scripted":
        return ScriptedBackend()
    if cfg.llm_backend == "cassette":
        inner = None
        if cfg.cassette_mode == "record":
            inner = (
                LiveChatBackend(
                    endpoint=cfg.live_endpoint,
                    model=cfg.live_model,
                    api_key_env=cfg.api_key_env,
                    timeout=cfg.live_timeout,
                    max_concurrent=cfg.live_max_concurrent,
                )
                if cfg.live_endpoint and cfg.live_model
                else ScriptedBackend()
            )
        return CassetteBackend(path=cfg.cassette_path, mode=cfg.cassette_mode, inner=inner)
    return LiveChatBackend(
        endpoint=cfg.live_endpoint,
        model=cfg.live_model,
        api_key_env=cfg.api_key_env,
        timeout=cfg.live_timeout,
        max_concurrent=cfg.live_max_concurrent,
    )


def process_title(cfg: RunConfig, title: str, llm_backend, adapter_factory=None) -> TitleProducts:
    """Full per-title flow: parse, lay out, perceive, attribute.  Writes artifacts."""
    out_dir = Path(cfg.out_dir)
    corpus = load_title(cfg, title)
    products = TitleProducts(title_id=title, corpus=corpus)
    corpus_mod.dump_corpus(corpus, out_dir / "corpus" / f"{title}.jsonl")

    scenes, seqs = build_scenes(cfg, corpus)
    write_layout_file(out_dir, title, scenes, seqs)

    clients = []

    def new_client():
        client = adapter_factory()
        clients.append(client)
        return client

    try:
        if cfg.ocr_backend == "adapter":
            ocr_backend = AdapterOcr(new_client())
        else:
            ocr_backend = OracleOcr()
        ocr_results = [ocr_text(s, ocr_backend) for s in scenes]
        scenes = [
            replace(s, texts=tuple((tid, box, ocr[tid]) for tid, box, _ in s.texts))
            for s, ocr in zip(scenes, ocr_results)
        ]

        registry, _refs = build_registry(
            corpus, min_appearances=cfg.min_appearances, n_ref=cfg.n_ref, seed=cfg.seed
        )
        if cfg.identity_backend == "oracle":
            id_backend = OracleIdentity(registry)
        elif cfg.identity_backend == "noisy":
            id_backend = NoisyIdentity(registry, epsilon=cfg.identity_epsilon, seed=cfg.seed)
        else:
            id_backend = AdapterIdentity(new_client())
        if cfg.intensity_backend == "oracle":
            z_backend = OracleIntensity()
        elif cfg.intensity_backend == "miscalibrated":
            z_backend = MiscalibratedIntensity(seed=cfg.seed)
        else:
            z_backend = AdapterIntensity(new_client())

        names = {c.id: c.name for c in corpus.roster}
        memory = MemoryState(
            global_budget=cfg.global_budget, local_budget=cfg.local_budget
        )
        retry = RetryPolicy(max_retries=cfg.max_retries)
        perception_rows = []
        for ordinal, (scene, seq) in enumerate(zip(scenes, seqs)):
            char_preds = identify_characters(scene, id_backend)
            intensities = (
                None if cfg.setting == "A" else estimate_intensity(scene, z_backend)
            )
            perception_rows.append(
                {
                    "title": title,
                    "page": scene.page_ref.page_index,
                    "region": scene.region_index,
                    "identity": [
                        {"id": p.char_instance_id, "pred": p.predicted, "conf": p.confidence}
                        for p in char_preds
                    ],
                    "intensity": (
                        None
                        if intensities is None
                        else [{"id": s.char_instance_id, "z": s.z} for s in intensities]
                    ),
                    "ocr": dict(sorted(ocr_results[ordinal].items())),
                }
            )
            result, memory = attribute_page(
                scene, seq, char_preds, intensities, names, memory,
                llm_backend, retry, ordinal=ordinal,
            )
            products.results.append(result)
            page_flags = tuple(f for f in result.flags if f.startswith("fallback:"))
            for tid in reading_ordered_texts(scene, seq):
                outcome = result.entries[tid]
                id_flags = tuple(
                    f for f in result.flags if ":" in f and f.split(":", 1)[1] == tid
                )
                products.predictions.append(
                    Prediction(
                        title_id=title,
                        page_index=scene.page_ref.page_index,
                        text_id=tid,
                        speaker=outcome.speaker,
                        emotion=outcome.emotion,
                        method=result.method_tag,
                        flags=page_flags + id_flags,
                    )
                )
        _write_jsonl(
            out_dir / "perception" / f"{title}.jsonl",
            {"type": "header", "schema": PERCEPTION_SCHEMA},
            perception_rows,
        )
        write_predictions(products.predictions, out_dir / "predictions" / f"{title}.llm.jsonl")
    finally:
        for client in clients:
            close = getattr(client, "close", None)
            if close and not cfg.adapter_url:  # shared http client stays open
                close()

    products.scenes = scenes
    products.seqs = seqs
    return products


def gold_and_difficulties(
    products: TitleProducts,
) -> tuple[list[LinkedSample], dict[tuple[str, str], CaseDifficulty]]:
    """Linked samples restricted to processed scenes, plus their difficulty labels."""
    scene_of_text: dict[str, tuple[SceneGraph, FrameSequence]] = {}
    for scene, seq in zip(products.scenes, products.seqs):
        for tid, _box, _c in scene.texts:
            scene_of_text[tid] = (scene, seq)
    samples = [
        s for s in build_linked_set(products.corpus) if s.text_element_id in scene_of_text
    ]
    difficulties = {}
    for s in samples:
        scene, seq = scene_of_text[s.text_element_id]
        difficulties[(s.title_id, s.text_element_id)] = classify_case(
            s.text_element_id, s.gt_speaker, scene, seq
        )
    return samples, difficulties


def evaluate_products(
    ok_products: list[TitleProducts],
    predictions: list[Prediction],
    method_tag: str,
) -> EvalReport:
    gold: list[LinkedSample] = []
    difficulties: dict[tuple[str, str], CaseDifficulty] = {}
    for products in ok_products:
        g, d = gold_and_difficulties(products)
        gold.extend(g)
        difficulties.update(d)
    return build_report(predictions, gold, difficulties, method_tag)


def write_report_files(out_dir: Path, report: EvalReport, name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"report.{name}.json").write_bytes(render_report(report, "json"))
    (out_dir / f"report.{name}.txt").write_bytes(render_report(report, "text_table"))
    (out_dir / f"report.{name}.csv").write_bytes(render_report(report, "csv"))


def _run_titles(
    cfg: RunConfig,
    worker: Callable[[str], TitleProducts],
    titles: list[str],
) -> dict[str, TitleProducts]:
    """Run the per-title worker with isolation; merge in sorted-title order."""

    def safe(title: str) -> TitleProducts:
        try:
            return worker(title)
        except Exception as exc:  # per-title isolation: record, keep going
            logger.exception("title %s failed", title)
            return TitleProducts(
                title_id=title,
                corpus=TitleCorpus(title, (), ()),
                error=f"{type(exc).__name__}: {exc}",
            )

    if cfg.workers == 1:
        done = [safe(t) for t in titles]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(safe, titles))
    return {p.title_id: p for p in sorted(done, key=lambda p: p.title_id)}


def run_pipeline(cfg: RunConfig) -> RunResult:
    """The full batch: every stage, all titles, artifacts under cfg.out_dir."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    save_snapshot(cfg, out_dir)
    titles = discover_titles(cfg)
    llm_backend = _make_llm_backend(cfg)
    needs_adapter = "adapter" in (
        cfg.identity_backend, cfg.intensity_backend, cfg.ocr_backend
    ) or cfg.tts_backend == "adapter"
    adapter_factory = _adapter_factory(cfg) if needs_adapter else None

    by_title = _run_titles(
        cfg, lambda t: process_title(cfg, t, llm_backend, adapter_factory), titles
    )
    ok = [p for p in by_title.values() if p.error is None]

    predictions = [pred for p in ok for pred in p.predictions]
    report = evaluate_products(ok, predictions, method_tag=f"llm_setting_{cfg.setting}")
    write_report_files(out_dir, report, "llm")
    (out_dir / "confusion.llm.png").write_bytes(render_report(report, "confusion_png_data"))

    profiles = cfg.voice_profiles()
    narrator = cfg.narrator_profile()
    jobs = []
    for products in ok:
        jobs.extend(
            plan_jobs(
                products.title_id,
                list(zip(products.scenes, products.seqs, products.results)),
                profiles,
                narrator,
            )
        )
    client = None
    if cfg.tts_backend == "adapter":
        client = adapter_factory()
    try:
        manifest_rows = dispatch(
            jobs, out_dir / "manifest.jsonl", backend=cfg.tts_backend, client=client
        )
    finally:
        if client is not None and not cfg.adapter_url:
            client.close()

    return RunResult(out_dir=out_dir, titles=by_title, report=report, manifest_rows=manifest_rows)


def run_baselines(cfg: RunConfig) -> dict[str, EvalReport]:
    """Rule-based methods over the same corpus slice; no LLM or TTS stages."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    save_snapshot(cfg, out_dir)
    titles = discover_titles(cfg)

    def worker(title: str) -> TitleProducts:
        corpus = load_title(cfg, title)
        products = TitleProducts(title_id=title, corpus=corpus)
        corpus_mod.dump_corpus(corpus, out_dir / "corpus" / f"{title}.jsonl")
        scenes, seqs = build_scenes(cfg, corpus)
        write_layout_file(out_dir, title, scenes, seqs)
        products.scenes = scenes
        products.seqs = seqs
        return products

    by_title = _run_titles(cfg, worker, titles)
    ok = [p for p in by_title.values() if p.error is None]

    reports: dict[str, EvalReport] = {}
    for method, rule in (("rule_short", short_distance), ("rule_frame", frame_distance)):
        all_preds: list[Prediction] = []
        for products in ok:
            preds: list[Prediction] = []
            for scene, seq in zip(products.scenes, products.seqs):
                identities = scene.gold_identities()
                if method == "rule_short":
                    rows = rule(scene, identities)
                else:
                    rows = rule(scene, seq, identities)
                by_text = {r.text_id: r for r in rows}
                for tid in reading_ordered_texts(scene, seq):
                    r = by_text[tid]
                    preds.append(
                        Prediction(
                            title_id=products.title_id,
                            page_index=scene.page_ref.page_index,
                            text_id=tid,
                            speaker=r.character_id,
                            emotion="neutral",
                            method=method,
                        )
                    )
            write_predictions(
                preds, out_dir / "predictions" / f"{products.title_id}.{method}.jsonl"
            )
            all_preds.extend(preds)
        report = evaluate_products(ok, all_preds, method_tag=method)
        write_report_files(out_dir, report, method)
        reports[method] = report
    return reports


# --- read-back stages for the CLI ----------------------------------------

def rebuild_products(cfg: RunConfig) -> dict[str, TitleProducts]:
    """Re-derive scenes/seqs deterministically (for evaluate/tts-plan verbs)."""
    by_title = {}
    for title in discover_titles(cfg):
        corpus = load_title(cfg, title)
        products = TitleProducts(title_id=title, corpus=corpus)
        products.scenes, products.seqs = build_scenes(cfg, corpus)
        by_title[title] = products
    return by_title


def evaluate_from_files(cfg: RunConfig, method: str = "llm") -> EvalReport:
    by_title = rebuild_products(cfg)
    out_dir = Path(cfg.out_dir)
    predictions: list[Prediction] = []
    for title in by_title:
        path = out_dir / "predictions" / f"{title}.{method}.jsonl"
        if path.exists():
            predictions.extend(read_predictions(path))
        else:
            logger.warning("no predictions file for %s (%s)", title, method)
    tag = method if method != "llm" else f"llm_setting_{cfg.setting}"
    report = evaluate_products(list(by_title.values()), predictions, method_tag=tag)
    write_report_files(out_dir, report, method)
    return report


def tts_plan_from_files(cfg: RunConfig, method: str = "llm") -> list[dict]:
    by_title = rebuild_products(cfg)
    out_dir = Path(cfg.out_dir)
    profiles = cfg.voice_profiles()
    narrator = cfg.narrator_profile()
    jobs = []
    for title, products in by_title.items():
        path = out_dir / "predictions" / f"{title}.{method}.jsonl"
        if not path.exists():
            logger.warning("no predictions file for %s (%s); skipped", title, method)
            continue
        rows = read_predictions(path)
        by_page: dict[int, dict[str, TextOutcome]] = {}
        for row in rows:
            by_page.setdefault(row.page_index, {})[row.text_id] = TextOutcome(
                row.speaker, row.emotion
            )
        page_results = []
        for scene, seq in zip(products.scenes, products.seqs):
            entries = by_page.get(scene.page_ref.page_index, {})
            missing = [tid for tid, _b, _c in scene.texts if tid not in entries]
            if missing:
                raise ValueError(
                    f"{title} page {scene.page_ref.page_index}: predictions missing texts {missing}"
                )
            result = AttributionResult(
                page_index=scene.page_ref.page_index,
                entries={tid: entries[tid] for tid, _b, _c in scene.texts},
                new_global_summary="",
                new_local_summary="",
                method_tag=method,
            )
            page_results.append((scene, seq, result))
        jobs.extend(plan_jobs(title, page_results, profiles, narrator))
    client = None
    if cfg.tts_backend == "adapter":
        client = _adapter_factory(cfg)()
    try:
        return dispatch(jobs, out_dir / "manifest.jsonl", backend=cfg.tts_backend, client=client)
    finally:
        if client is not None and not cfg.adapter_url:
            client.close()
