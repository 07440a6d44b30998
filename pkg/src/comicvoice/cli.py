"""Command-line surface: one verb per pipeline stage plus the full run."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, config_from_dict, load_config
from .corpus import dump_corpus
from .tts import ConfigError


def _build_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        if not (args.corpus_dir and args.out_dir):
            raise ConfigError("either --config or both --corpus-dir and --out-dir are required")
        cfg = config_from_dict({"corpus_dir": args.corpus_dir, "out_dir": args.out_dir})
    for key in (
        "corpus_dir", "out_dir", "setting", "pages_per_title", "workers", "seed",
    ):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "titles", None):
        cfg.titles = args.titles
    cfg.validate()
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags below override it")
    p.add_argument("--corpus-dir", dest="corpus_dir", help="directory of <title>.xml + sidecars")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--titles", nargs="*", help="restrict to these titles")
    p.add_argument("--pages", dest="pages_per_title", type=int, help="first N pages per title")
    p.add_argument("--setting", choices=("A", "B", "C"), help="identity/intensity channel setting")
    p.add_argument("--workers", type=int, help="parallel titles")
    p.add_argument("--seed", type=int, help="seed for noisy/sampled backends")


def _cmd_ingest(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    for title in pipeline.discover_titles(cfg):
        corpus = pipeline.load_title(cfg, title)
        dump_corpus(corpus, out / "corpus" / f"{title}.jsonl")
        print(f"{title}: {len(corpus.pages)} pages, {len(corpus.roster)} characters, "
              f"{len(corpus.speaker_links)} speaker links")
    return 0


def _cmd_layout(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    for title in pipeline.discover_titles(cfg):
        corpus = pipeline.load_title(cfg, title)
        scenes, seqs = pipeline.build_scenes(cfg, corpus)
        pipeline.write_layout_file(out, title, scenes, seqs)
        n_frames = sum(len(s.frames) for s in scenes)
        print(f"{title}: {len(scenes)} scenes, {n_frames} frames ordered")
    return 0


def _cmd_baseline(cfg: RunConfig) -> int:
    reports = pipeline.run_baselines(cfg)
    for method, report in reports.items():
        sp = report.speaker
        print(f"{method}: easy {sp.easy_acc} hard {sp.hard_acc} total {sp.total_acc}")
    return 0


def _cmd_attribute(cfg: RunConfig) -> int:
    from .config import save_snapshot

    save_snapshot(cfg, cfg.out_dir)
    llm_backend = pipeline._make_llm_backend(cfg)
    needs_adapter = "adapter" in (
        cfg.identity_backend, cfg.intensity_backend, cfg.ocr_backend
    )
    factory = pipeline._adapter_factory(cfg) if needs_adapter else None
    by_title = pipeline._run_titles(
        cfg,
        lambda t: pipeline.process_title(cfg, t, llm_backend, factory),
        pipeline.discover_titles(cfg),
    )
    code = 0
    for title, products in by_title.items():
        if products.error:
            print(f"{title}: FAILED ({products.error})", file=sys.stderr)
            code = 1
        else:
            print(f"{title}: {len(products.predictions)} texts attributed")
    return code


def _cmd_evaluate(cfg: RunConfig, method: str) -> int:
    report = pipeline.evaluate_from_files(cfg, method)
    sys.stdout.write(
        pipeline.render_report(report, "text_table").decode()
    )
    return 0


def _cmd_tts_plan(cfg: RunConfig, method: str) -> int:
    rows = pipeline.tts_plan_from_files(cfg, method)
    print(f"{len(rows)} jobs -> {Path(cfg.out_dir) / 'manifest.jsonl'}")
    return 0


def _cmd_run(cfg: RunConfig) -> int:
    result = pipeline.run_pipeline(cfg)
    for title, products in result.titles.items():
        if products.error:
            print(f"{title}: FAILED ({products.error})", file=sys.stderr)
    if result.report is not None:
        sp = result.report.speaker
        print(f"speakers: easy {sp.easy_acc} hard {sp.hard_acc} total {sp.total_acc}")
        print(f"joint: {result.report.joint.acc}")
    print(f"{len(result.manifest_rows)} TTS jobs planned")
    return result.exit_code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="comicvoice",
        description="Annotated comic pages to attributed dialogue and TTS job manifests",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("ingest", "layout", "baseline", "attribute", "evaluate", "tts-plan", "run"):
        p = sub.add_parser(verb)
        _add_common(p)
        if verb in ("evaluate", "tts-plan"):
            p.add_argument(
                "--method", default="llm",
                help="predictions to use: llm, rule_short, or rule_frame",
            )
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _build_config(args)
        if args.verb == "ingest":
            return _cmd_ingest(cfg)
        if args.verb == "layout":
            return _cmd_layout(cfg)
        if args.verb == "baseline":
            return _cmd_baseline(cfg)
        if args.verb == "attribute":
            return _cmd_attribute(cfg)
        if args.verb == "evaluate":
            return _cmd_evaluate(cfg, args.method)
        if args.verb == "tts-plan":
            return _cmd_tts_plan(cfg, args.method)
        return _cmd_run(cfg)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
