"""Acceptance gate for the adapter package: one test per promised behavior."""

from __future__ import annotations

from contextlib import contextmanager

import pytest

from comicvoice import synth
from comicvoice.adapter import StdioAdapterClient, run_conformance
from comicvoice.config import RunConfig
from comicvoice.pipeline import run_pipeline

from adapter_helpers import SERVE
from comic_adapters.identity import FinetuneConfig, finetune_identity, write_reference_fixture

STDIO_SERVE = [*SERVE, "--stdio"]


@pytest.fixture
def gate(capsys):
    @contextmanager
    def _gate(name):
        info: list[str] = []
        try:
            yield info
        except BaseException:
            with capsys.disabled():
                print(f"\nACCEPTANCE FAIL  {name}")
            raise
        detail = f"  [{'; '.join(info)}]" if info else ""
        with capsys.disabled():
            print(f"\nACCEPTANCE PASS  {name}{detail}")

    return _gate


def test_echo_adapter_passes_conformance(gate):
    with gate("echo adapter conformance, 1000 randomized requests") as info:
        client = StdioAdapterClient(STDIO_SERVE)
        try:
            ops = client.manifest.ops
            report = run_conformance(client, n_requests=1000, seed=0)
        finally:
            client.close()
        assert report.n_requests == 1000
        assert report.violations == []
        assert report.passed
        info.append(f"0 violations over 1000 requests spanning {', '.join(ops)}")


def test_finetune_identity_beats_chance(gate, tmp_path):
    with gate("identity fine-tune beats chance on the separable fixture") as info:
        refs = write_reference_fixture(
            tmp_path / "refs", classes=("alice", "bob"), per_class=16, seed=7
        )
        cfg = FinetuneConfig(seed=0)
        result = finetune_identity(refs, tmp_path / "identity.pt", cfg)
        assert result.holdout_accuracy > 1.0 / 3.0
        repeat = finetune_identity(refs, tmp_path / "identity_again.pt", cfg)
        assert repeat.holdout_accuracy == result.holdout_accuracy
        assert repeat.final_loss == result.final_loss
        info.append(
            f"held-out accuracy {result.holdout_accuracy:.0%} over"
            f" {len(result.classes)} classes (chance 33%), seed-repeat identical"
        )


def test_pipeline_setting_c_runs_against_echo_adapter(gate, tmp_path):
    with gate("full Setting C run against the echo adapter") as info:
        corpus_dir = tmp_path / "corpus"
        for seed in (91, 92):
            synth.write_title_tree(synth.generate_title(seed, n_pages=3, n_chars=3), corpus_dir)
        cfg = RunConfig(
            corpus_dir=str(corpus_dir),
            out_dir=str(tmp_path / "out"),
            setting="C",
            identity_backend="adapter",
            intensity_backend="adapter",
            adapter_cmd=STDIO_SERVE,
            llm_backend="scripted",
            workers=2,
            min_appearances=0,
            seed=5,
        )
        result = run_pipeline(cfg)
        assert result.exit_code == 0
        assert all(t.error is None for t in result.titles.values())
        n_texts = 0
        for products in result.titles.values():
            text_ids = {tid for s in products.scenes for tid, _b, _c in s.texts}
            assert {p.text_id for p in products.predictions} == text_ids
            n_texts += len(text_ids)
        out = tmp_path / "out"
        assert (out / "report.llm.json").exists()
        assert (out / "manifest.jsonl").exists()
        info.append(
            f"{n_texts} texts across {len(result.titles)} titles attributed"
            " through adapter identity and intensity; exit code 0"
        )
