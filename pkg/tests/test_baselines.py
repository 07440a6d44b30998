import math
import random

from comicvoice import synth
from comicvoice.baselines import (
    ABSTAIN,
    UNKNOWN,
    frame_distance,
    short_distance,
)
from comicvoice.geometry import BBox, center_distance, edge_distance
from comicvoice.layout import scene_from_page, sequence_scene

from helpers import make_page


IDS = {"b1": "alice", "b2": "bob", "fa1": "alice"}


def scene_and_seq(page):
    scene = scene_from_page(page)
    return scene, sequence_scene(scene)


class TestShortDistance:
    def test_picks_nearest_center(self):
        page = make_page(
            texts=[("t1", BBox(0, 0, 100, 100), "x")],  # center (50, 50)
            bodies=[("b1", BBox(100, 100, 200, 200), "alice"),   # center dist ~141
                    ("b2", BBox(50, 150, 150, 250), "bob")],     # center dist ~158
        )
        scene, _ = scene_and_seq(page)
        (pred,) = short_distance(scene, IDS)
        assert (pred.instance_id, pred.character_id, pred.method_tag) == ("b1", "alice", "rule_short")

    def test_edge_metric_can_flip_the_answer(self):
        # b2 has the nearer center; b1 has the nearer edge
        page = make_page(
            texts=[("t1", BBox(0, 40, 20, 60), "x")],  # center (10, 50)
            bodies=[("b1", BBox(40, 0, 300, 100), "alice"),   # edge dist 20, center (170,50)
                    ("b2", BBox(100, 40, 140, 60), "bob")],   # edge dist 80, center (120,50)
        )
        scene, _ = scene_and_seq(page)
        (by_center,) = short_distance(scene, IDS, metric="center")
        (by_edge,) = short_distance(scene, IDS, metric="edge")
        assert by_center.instance_id == "b2"
        assert by_edge.instance_id == "b1"

    def test_tie_broken_by_instance_id(self):
        page = make_page(
            texts=[("t1", BBox(40, 40, 60, 60), "x")],
            bodies=[("b9", BBox(70, 40, 90, 60), "alice"), ("b2", BBox(10, 40, 30, 60), "bob")],
        )
        scene, _ = scene_and_seq(page)
        (pred,) = short_distance(scene, IDS | {"b9": "alice"})
        assert pred.instance_id == "b2"

    def test_faces_compete_too(self):
        page = make_page(
            texts=[("t1", BBox(0, 0, 20, 20), "x")],
            bodies=[("b2", BBox(500, 500, 600, 600), "bob")],
            faces=[("fa1", BBox(30, 30, 50, 50), "alice", None)],
        )
        scene, _ = scene_and_seq(page)
        (pred,) = short_distance(scene, IDS)
        assert (pred.instance_id, pred.character_id) == ("fa1", "alice")

    def test_abstain_on_empty_page(self):
        page = make_page(texts=[("t1", BBox(0, 0, 20, 20), "x")])
        scene, _ = scene_and_seq(page)
        (pred,) = short_distance(scene, IDS)
        assert (pred.instance_id, pred.character_id) == (ABSTAIN, UNKNOWN)

    def test_unmapped_instance_resolves_unknown(self):
        page = make_page(
            texts=[("t1", BBox(0, 0, 20, 20), "x")],
            bodies=[("b7", BBox(30, 30, 50, 50), "carol")],
        )
        scene, _ = scene_and_seq(page)
        (pred,) = short_distance(scene, {})
        assert (pred.instance_id, pred.character_id) == ("b7", UNKNOWN)

    def test_matches_brute_force_over_many_pages(self):
        checked = 0
        for seed in range(40):
            corpus = synth.generate_title(seed=seed, n_pages=5)
            for page in corpus.pages:
                scene, _ = scene_and_seq(page)
                for metric, dist in (("center", center_distance), ("edge", edge_distance)):
                    preds = {p.text_id: p for p in short_distance(scene, {}, metric=metric)}
                    for tid, tbox, _ in scene.texts:
                        if not scene.chars:
                            assert preds[tid].instance_id == ABSTAIN
                            continue
                        want = min(
                            ((dist(tbox, cbox), cid) for cid, cbox in scene.chars),
                            key=lambda t: (t[0], t[1]),
                        )[1]
                        assert preds[tid].instance_id == want
                        checked += 1
        assert checked > 200  # corpus actually exercised both metrics


class TestFrameDistance:
    def _page(self):
        # two frames side by side; alice's body is in f_right with the text,
        # bob's body in f_left is geometrically closer to the text box
        return make_page(
            frames=[("f_left", BBox(0, 0, 500, 500)), ("f_right", BBox(500, 0, 1000, 500))],
            texts=[("t1", BBox(510, 200, 590, 300), "x")],
            bodies=[("b_bob", BBox(400, 200, 480, 300), "bob"),
                    ("b_alice", BBox(900, 380, 980, 480), "alice")],
        )

    def test_frame_restriction_beats_raw_distance(self):
        scene, seq = scene_and_seq(self._page())
        (short,) = short_distance(scene, {"b_bob": "bob", "b_alice": "alice"})
        (framed,) = frame_distance(scene, seq, {"b_bob": "bob", "b_alice": "alice"})
        assert short.instance_id == "b_bob"
        assert framed.instance_id == "b_alice"

    def test_empty_frame_borrows_previous_then_next(self):
        # rtl order: f_right, f_mid, f_left; text sits in the empty middle frame
        frames = [
            ("f_left", BBox(0, 0, 300, 500)),
            ("f_mid", BBox(350, 0, 650, 500)),
            ("f_right", BBox(700, 0, 1000, 500)),
        ]
        text = ("t1", BBox(400, 200, 500, 300), "x")
        prev_page = make_page(
            frames=frames, texts=[text],
            bodies=[("b_prev", BBox(710, 10, 790, 90), "alice"),
                    ("b_next", BBox(10, 10, 90, 90), "bob")],
        )
        scene, seq = scene_and_seq(prev_page)
        (pred,) = frame_distance(scene, seq, {})
        assert pred.instance_id == "b_prev"  # previous frame wins over next

        next_page = make_page(
            frames=frames, texts=[text],
            bodies=[("b_next", BBox(10, 10, 90, 90), "bob")],
        )
        scene, seq = scene_and_seq(next_page)
        (pred,) = frame_distance(scene, seq, {})
        assert pred.instance_id == "b_next"

    def test_first_frame_has_no_previous(self):
        # text in the first (rightmost) frame, chars only in the second
        page = make_page(
            frames=[("f_left", BBox(0, 0, 450, 500)), ("f_right", BBox(550, 0, 1000, 500))],
            texts=[("t1", BBox(600, 100, 700, 200), "x")],
            bodies=[("b1", BBox(100, 100, 200, 200), "alice")],
        )
        scene, seq = scene_and_seq(page)
        assert seq.ordered_frames == ("f_right", "f_left")
        (pred,) = frame_distance(scene, seq, IDS)
        assert pred.instance_id == "b1"

    def test_page_wide_fallback_when_neighbors_empty(self):
        # four frames in a row; text in f3 (empty), only f0 has a char:
        # f0 is neither previous nor next, so the page-wide pool catches it
        frames = [(f"f{i}", BBox(i * 250 + 5, 0, i * 250 + 245, 500)) for i in range(4)]
        page = make_page(
            frames=frames,
            texts=[("t1", BBox(760, 100, 830, 160), "x")],
            bodies=[("b1", BBox(10, 10, 90, 90), "alice")],
        )
        scene, seq = scene_and_seq(page)
        assert seq.ordered_frames == ("f3", "f2", "f1", "f0")
        (pred,) = frame_distance(scene, seq, IDS)
        assert pred.instance_id == "b1"

    def test_unassigned_text_uses_offpanel_pool_first(self):
        # one char inside a frame, one floating outside; the floating text
        # should pair with the off-panel char even though the framed one is nearer
        page = make_page(
            frames=[("f0", BBox(0, 0, 500, 500))],
            texts=[("t_out", BBox(510, 510, 590, 560), "x")],
            bodies=[("b_in", BBox(450, 450, 490, 490), "alice"),
                    ("b_out", BBox(700, 800, 780, 900), "bob")],
        )
        scene, seq = scene_and_seq(page)
        (pred,) = frame_distance(scene, seq, {"b_in": "alice", "b_out": "bob"})
        assert pred.instance_id == "b_out"

    def test_unassigned_text_falls_back_page_wide(self):
        page = make_page(
            frames=[("f0", BBox(0, 0, 500, 500))],
            texts=[("t_out", BBox(510, 510, 590, 560), "x")],
            bodies=[("b_in", BBox(450, 450, 490, 490), "alice")],
        )
        scene, seq = scene_and_seq(page)
        (pred,) = frame_distance(scene, seq, IDS | {"b_in": "alice"})
        assert pred.instance_id == "b_in"

    def test_abstain_on_empty_page(self):
        page = make_page(
            frames=[("f0", BBox(0, 0, 500, 500))],
            texts=[("t1", BBox(10, 10, 90, 60), "x")],
        )
        scene, seq = scene_and_seq(page)
        (pred,) = frame_distance(scene, seq, IDS)
        assert (pred.instance_id, pred.character_id, pred.method_tag) == (ABSTAIN, UNKNOWN, "rule_frame")

    def test_single_frame_agrees_with_short_distance(self):
        for seed in range(20):
            rng = random.Random(seed)
            n = rng.randint(1, 4)
            bodies = []
            for i in range(n):
                x, y = rng.randint(0, 900), rng.randint(0, 900)
                bodies.append((f"b{i}", BBox(x, y, x + 60, y + 60), "c"))
            tx, ty = rng.randint(0, 900), rng.randint(0, 900)
            page = make_page(
                frames=[("f0", BBox(0, 0, 1000, 1000))],
                texts=[("t1", BBox(tx, ty, tx + 50, ty + 40), "x")],
                bodies=bodies,
            )
            scene, seq = scene_and_seq(page)
            (a,) = short_distance(scene, {})
            (b,) = frame_distance(scene, seq, {})
            assert a.instance_id == b.instance_id

    def test_agrees_on_generated_corpus_with_brute_force(self):
        # independent reimplementation of the pool walk, via the page geometry
        for seed in range(15):
            corpus = synth.generate_title(seed=100 + seed, n_pages=4)
            for page in corpus.pages:
                scene, seq = scene_and_seq(page)
                preds = {p.text_id: p for p in frame_distance(scene, seq, {})}
                chars_in = {}
                for cid, cbox in scene.chars:
                    chars_in.setdefault(seq.assignment[cid], []).append((cid, cbox))
                for tid, tbox, _ in scene.texts:
                    if not scene.chars:
                        assert preds[tid].instance_id == ABSTAIN
                        continue
                    fid = seq.assignment[tid]
                    pool = chars_in.get(fid, [])
                    if not pool and fid != "UNASSIGNED":
                        idx = seq.ordered_frames.index(fid)
                        neighbors = []
                        if idx > 0:
                            neighbors.append(seq.ordered_frames[idx - 1])
                        if idx + 1 < len(seq.ordered_frames):
                            neighbors.append(seq.ordered_frames[idx + 1])
                        for nb in neighbors:
                            if chars_in.get(nb):
                                pool = chars_in[nb]
                                break
                    if not pool:
                        pool = list(scene.chars)
                    want = min(
                        ((math.dist(tbox.center, cbox.center), cid) for cid, cbox in pool)
                    )[1]
                    assert preds[tid].instance_id == want


class TestInvariance:
    def test_text_order_does_not_change_per_text_answers(self):
        corpus = synth.generate_title(seed=42, n_pages=3)
        rng = random.Random(1)
        for page in corpus.pages:
            scene, seq = scene_and_seq(page)
            base = {p.text_id: p.instance_id for p in frame_distance(scene, seq, {})}
            texts = list(page.texts)
            rng.shuffle(texts)
            shuffled = make_page(
                title_id=page.title_id, page_index=page.page_index,
                width=page.width, height=page.height,
                frames=[(f.id, f.box) for f in page.frames],
                texts=[(t.id, t.box, t.content) for t in texts],
                bodies=[(b.id, b.box, b.character_id) for b in page.bodies],
                faces=[(f.id, f.box, f.character_id, f.emotion) for f in page.faces],
            )
            scene2, seq2 = scene_and_seq(shuffled)
            got = {p.text_id: p.instance_id for p in frame_distance(scene2, seq2, {})}
            assert got == base
