import json
import random

import pytest

from comicvoice import synth
from comicvoice.corpus import (
    CorpusParseError,
    build_linked_set,
    corpora_equal,
    dump_corpus,
    load_corpus,
    parse_title,
    select_test_titles,
)
from comicvoice.geometry import BBox

from helpers import make_page, make_title


@pytest.fixture
def title_tree(tmp_path):
    corpus = synth.generate_title(seed=3, n_pages=5)
    paths = synth.write_title_tree(corpus, tmp_path)
    return corpus, paths


class TestParseTitle:
    def test_round_trip_through_xml(self, title_tree):
        corpus, paths = title_tree
        parsed = parse_title(paths["annotation"], paths["speakers"], paths["emotions"])
        assert corpora_equal(corpus, parsed)
        assert parsed.warnings == []

    def test_malformed_xml(self, tmp_path):
        bad = tmp_path / "bad.xml"
        bad.write_text("<book><unclosed>")
        with pytest.raises(CorpusParseError):
            parse_title(bad)

    def test_unknown_character_dropped_with_warning(self, tmp_path):
        xml = """<?xml version="1.0"?>
<book title="x">
  <characters><character id="c1" name="A"/></characters>
  <pages><page index="0" width="100" height="100">
    <body id="b1" character="c1" xmin="0" ymin="0" xmax="10" ymax="10"/>
    <body id="b2" character="ghost" xmin="20" ymin="20" xmax="30" ymax="30"/>
  </page></pages>
</book>"""
        path = tmp_path / "x.xml"
        path.write_text(xml)
        corpus = parse_title(path)
        assert [b.id for b in corpus.pages[0].bodies] == ["b1"]
        assert any("ghost" in w for w in corpus.warnings)

    def test_duplicate_id_dropped(self, tmp_path):
        xml = """<?xml version="1.0"?>
<book title="x">
  <characters/>
  <pages><page index="0" width="100" height="100">
    <frame id="f1" xmin="0" ymin="0" xmax="50" ymax="50"/>
    <frame id="f1" xmin="50" ymin="50" xmax="90" ymax="90"/>
  </page></pages>
</book>"""
        path = tmp_path / "x.xml"
        path.write_text(xml)
        corpus = parse_title(path)
        assert len(corpus.pages[0].frames) == 1
        assert any("duplicate" in w for w in corpus.warnings)

    def test_out_of_bounds_box_dropped(self, tmp_path):
        xml = """<?xml version="1.0"?>
<book title="x">
  <characters/>
  <pages><page index="0" width="100" height="100">
    <frame id="f1" xmin="0" ymin="0" xmax="150" ymax="50"/>
  </page></pages>
</book>"""
        path = tmp_path / "x.xml"
        path.write_text(xml)
        corpus = parse_title(path)
        assert corpus.pages[0].frames == ()
        assert any("bounds" in w for w in corpus.warnings)

    def test_link_to_unknown_text_dropped(self, title_tree, tmp_path):
        corpus, paths = title_tree
        extra = tmp_path / "links2.jsonl"
        lines = paths["speakers"].read_text().splitlines()
        lines.append(json.dumps({"title": corpus.title_id, "text_id": "nope", "speaker_id": corpus.roster[0].id}))
        extra.write_text("\n".join(lines) + "\n")
        parsed = parse_title(paths["annotation"], extra, paths["emotions"])
        assert len(parsed.speaker_links) == len(corpus.speaker_links)
        assert any("unknown text" in w for w in parsed.warnings)

    def test_emotion_outside_vocabulary_dropped(self, title_tree, tmp_path):
        corpus, paths = title_tree
        some_face = next(f for p in corpus.pages for f in p.faces)
        bad = tmp_path / "emo2.jsonl"
        bad.write_text(json.dumps({"title": corpus.title_id, "face_id": some_face.id, "label": "ecstatic"}) + "\n")
        parsed = parse_title(paths["annotation"], emotion_file=bad)
        assert all(f.emotion is None for p in parsed.pages for f in p.faces)
        assert any("ecstatic" in w for w in parsed.warnings)


class TestLinkedSet:
    def test_nearest_face_supplies_emotion(self):
        # text center (55,55); c1 faces at distance ~sqrt(5000) vs ~sqrt(245000)
        page = make_page(
            frames=[("f1", BBox(0, 0, 1000, 1000))],
            texts=[("t1", BBox(50, 50, 60, 60), "hi")],
            bodies=[("b1", BBox(0, 0, 20, 20), "c1")],
            faces=[
                ("fa_far", BBox(400, 400, 500, 500), "c1", "anger"),
                ("fa_near", BBox(100, 100, 120, 120), "c1", "sadness"),
                ("fa_other", BBox(52, 52, 58, 58), "c2", "happiness"),
            ],
        )
        corpus = make_title([page], [("c1", "A"), ("c2", "B")], links=[("t1", "c1")])
        samples = build_linked_set(corpus)
        assert len(samples) == 1
        assert samples[0].gt_emotion == "sadness"
        assert samples[0].gt_speaker == "c1"

    def test_no_labeled_face_means_no_emotion(self):
        page = make_page(
            texts=[("t1", BBox(50, 50, 60, 60), "hi")],
            bodies=[("b1", BBox(0, 0, 20, 20), "c1")],
            faces=[("fa1", BBox(0, 0, 10, 10), "c1", None)],
        )
        corpus = make_title([page], [("c1", "A")], links=[("t1", "c1")])
        assert build_linked_set(corpus)[0].gt_emotion is None

    def test_sibling_order_independent(self):
        faces = [
            ("fa1", BBox(100, 100, 120, 120), "c1", "sadness"),
            ("fa2", BBox(400, 400, 500, 500), "c1", "anger"),
            ("fa3", BBox(700, 700, 720, 720), "c1", "surprise"),
        ]
        results = []
        for perm in ([0, 1, 2], [2, 1, 0], [1, 2, 0]):
            page = make_page(
                texts=[("t1", BBox(50, 50, 60, 60), "hi")],
                bodies=[("b1", BBox(0, 0, 20, 20), "c1")],
                faces=[faces[i] for i in perm],
            )
            corpus = make_title([page], [("c1", "A")], links=[("t1", "c1")])
            results.append(build_linked_set(corpus)[0].gt_emotion)
        assert results == ["sadness"] * 3

    def test_equidistant_tie_broken_by_face_id(self):
        page = make_page(
            texts=[("t1", BBox(40, 40, 60, 60), "hi")],
            faces=[
                ("fa_b", BBox(70, 40, 90, 60), "c1", "anger"),
                ("fa_a", BBox(10, 40, 30, 60), "c1", "sadness"),
            ],
        )
        corpus = make_title([page], [("c1", "A")], links=[("t1", "c1")])
        assert build_linked_set(corpus)[0].gt_emotion == "sadness"  # fa_a < fa_b


class TestSelectTestTitles:
    def _corpora(self, counts):
        out = []
        for i, n in enumerate(counts):
            faces = [
                (f"fa{i}_{j}", BBox(j * 10, 0, j * 10 + 5, 5), "c1", "anger") for j in range(n)
            ]
            page = make_page(title_id=f"title{i:02d}", faces=faces, width=5000, height=100)
            out.append(make_title([page], [("c1", "A")], title_id=f"title{i:02d}"))
        return out

    def test_matches_brute_force_selection(self):
        rng = random.Random(5)
        counts = [rng.randint(0, 9) for _ in range(25)]
        corpora = self._corpora(counts)
        got = select_test_titles(corpora, 20)

        # independent route: repeatedly extract the best remaining title
        remaining = {c.title_id: c.emotion_annotation_count() for c in corpora}
        expected = []
        for _ in range(20):
            best = min(remaining, key=lambda t: (-remaining[t], t))
            expected.append(best)
            del remaining[best]
        assert got == expected

    def test_tie_broken_lexicographically(self):
        corpora = self._corpora([3, 3, 1])
        assert select_test_titles(corpora, 2) == ["title00", "title01"]

    def test_asking_for_too_many_raises(self):
        with pytest.raises(ValueError):
            select_test_titles(self._corpora([1, 2]), 5)


class TestCanonicalDump:
    def test_dump_load_round_trip(self, title_tree, tmp_path):
        corpus, _ = title_tree
        path = tmp_path / "dump.jsonl"
        dump_corpus(corpus, path)
        loaded = load_corpus(path)
        assert corpora_equal(corpus, loaded)

    def test_header_line_first_with_schema(self, title_tree, tmp_path):
        corpus, _ = title_tree
        path = tmp_path / "dump.jsonl"
        dump_corpus(corpus, path)
        first = json.loads(path.read_text().splitlines()[0])
        assert first["type"] == "title"
        assert first["schema"] == "corpus_v1"

    def test_dump_bytes_stable(self, title_tree, tmp_path):
        corpus, _ = title_tree
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        dump_corpus(corpus, a)
        dump_corpus(corpus, b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text(json.dumps({"type": "page"}) + "\n")
        with pytest.raises(CorpusParseError):
            load_corpus(path)
