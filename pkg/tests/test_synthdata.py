import json
import os

import numpy as np
import pytest

from tground.data import load_dataset
from tground.synthdata import MIN_CONCEPT_DISTANCE, SynthConfig, TEMPLATES, \
    generate, make_concepts, oracle_ground
from tground.treebank import parse_ptb, segment_clauses
from tground.video_net import load_features_binary


SMALL = dict(num_concepts=6, num_videos=30, num_clips=6, sigma=0.05,
             feature_dim=8, queries_per_video=2, fractions=(0.8, 0.1, 0.1))


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    manifest = generate(SynthConfig(**SMALL, seed=5), str(out))
    return out, manifest


def _all_records(out):
    records = []
    for split in ("train", "val", "test"):
        with open(out / f"{split}.jsonl") as f:
            records += [(split, json.loads(line)) for line in f]
    return records


class TestConfig:
    def test_fraction_sum_enforced(self):
        with pytest.raises(ValueError, match="fractions"):
            SynthConfig(fractions=(0.5, 0.2, 0.2))

    def test_unknown_template_rejected(self):
        with pytest.raises(ValueError, match="unknown templates"):
            SynthConfig(template_mix={"meanwhile": 1.0})

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigma"):
            SynthConfig(sigma=-0.1)

    def test_load_from_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"num_videos": 7, "seed": 3,
                                    "fractions": [0.8, 0.1, 0.1]}))
        cfg = SynthConfig.load(path)
        assert cfg.num_videos == 7 and cfg.seed == 3
        assert cfg.fractions == (0.8, 0.1, 0.1)


class TestConcepts:
    def test_unit_norm_and_separation(self):
        cfg = SynthConfig(**SMALL, seed=0)
        vecs = make_concepts(cfg, np.random.default_rng(0))
        assert vecs.shape == (6, 8)
        np.testing.assert_allclose(np.linalg.norm(vecs, axis=1), 1.0)
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                assert np.linalg.norm(vecs[i] - vecs[j]) >= MIN_CONCEPT_DISTANCE


class TestDeterminism:
    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = SynthConfig(num_concepts=4, num_videos=10, feature_dim=6, seed=9)
        a, b = tmp_path / "a", tmp_path / "b"
        generate(cfg, str(a))
        generate(SynthConfig(num_concepts=4, num_videos=10, feature_dim=6,
                             seed=9), str(b))
        for root, _, files in os.walk(a):
            for name in files:
                pa = os.path.join(root, name)
                pb = pa.replace(str(a), str(b), 1)
                assert open(pa, "rb").read() == open(pb, "rb").read(), pa

    def test_seed_changes_output(self, tmp_path):
        cfg1 = SynthConfig(num_concepts=4, num_videos=10, feature_dim=6, seed=1)
        cfg2 = SynthConfig(num_concepts=4, num_videos=10, feature_dim=6, seed=2)
        generate(cfg1, str(tmp_path / "a"))
        generate(cfg2, str(tmp_path / "b"))
        assert (tmp_path / "a" / "train.jsonl").read_text() != \
            (tmp_path / "b" / "train.jsonl").read_text()


class TestGroundTruth:
    def test_oracle_agrees_with_stored_gt(self, corpus):
        out, manifest = corpus
        for _, rec in _all_records(out):
            assert tuple(rec["gt"]) == oracle_ground(rec["id"], manifest), \
                rec["id"]

    def test_template_target_rules(self, corpus):
        out, manifest = corpus
        seen = set()
        for qid, ex in manifest["examples"].items():
            video = manifest["videos"][ex["video"]]
            span_a, span_b = map(tuple, video["spans"])
            gt = oracle_ground(qid, manifest)
            t = ex["template"]
            seen.add(t)
            if t in ("before", "after_rev"):
                assert gt == span_a
            elif t in ("after", "before_rev"):
                assert gt == span_b
            elif t == "then":
                assert gt == (span_a[0], span_b[1])
            else:
                assert gt in (span_a, span_b)
        assert seen == set(TEMPLATES)

    def test_planted_spans_disjoint_with_buffer(self, corpus):
        _, manifest = corpus
        for video in manifest["videos"].values():
            (a0, a1), (b0, b1) = video["spans"]
            assert a1 < b0 - 1  # at least one buffer clip between spans
            assert 1 <= a1 - a0 + 1 <= 2
            assert 1 <= b1 - b0 + 1 <= 2
            assert a0 >= 0 and b1 < SMALL["num_clips"]


class TestQueries:
    def test_trees_parse_and_match_tokens(self, corpus):
        out, _ = corpus
        for _, rec in _all_records(out):
            tree = parse_ptb(rec["ptb"])
            assert tree.leaves() == rec["tokens"], rec["id"]

    def test_subevent_counts_per_template(self, corpus):
        out, manifest = corpus
        for _, rec in _all_records(out):
            masks = segment_clauses(parse_ptb(rec["ptb"]))
            template = manifest["examples"][rec["id"]]["template"]
            want = 1 if template == "base" else 2
            assert masks.shape[0] == want, (rec["id"], template)

    def test_reversed_templates_marked_by_comma(self, corpus):
        out, manifest = corpus
        for _, rec in _all_records(out):
            template = manifest["examples"][rec["id"]]["template"]
            assert ("," in rec["tokens"]) == template.endswith("_rev")

    def test_labels_match_temporal_words(self, corpus):
        out, manifest = corpus
        for _, rec in _all_records(out):
            template = manifest["examples"][rec["id"]]["template"]
            want = {"base": "base", "before": "before", "before_rev": "before",
                    "after": "after", "after_rev": "after", "then": "then"}
            assert rec["label"] == want[template]

    def test_four_identical_annotations(self, corpus):
        out, _ = corpus
        for _, rec in _all_records(out):
            assert rec["annotations"] == [rec["gt"]] * 4


class TestSplits:
    def test_video_disjointness(self, corpus):
        out, _ = corpus
        by_split = {}
        for split, rec in _all_records(out):
            by_split.setdefault(split, set()).add(rec["video"])
        assert not by_split["train"] & by_split["val"]
        assert not by_split["train"] & by_split["test"]
        assert not by_split["val"] & by_split["test"]

    def test_split_sizes(self, corpus):
        out, _ = corpus
        counts = {}
        for split, rec in _all_records(out):
            counts[split] = counts.get(split, 0) + 1
        q = SMALL["queries_per_video"]
        assert counts == {"train": 24 * q, "val": 3 * q, "test": 3 * q}

    def test_template_proportions_exact_per_split(self, corpus):
        out, manifest = corpus
        for split in ("train",):
            recs = [r for s, r in _all_records(out) if s == split]
            counts = {}
            for rec in recs:
                t = manifest["examples"][rec["id"]]["template"]
                counts[t] = counts.get(t, 0) + 1
            n = len(recs)
            # uniform mix: each template within one of the exact share
            for t in TEMPLATES:
                assert abs(counts.get(t, 0) - n / len(TEMPLATES)) <= 1, counts

    def test_loadable_by_dataset_reader(self, corpus):
        out, _ = corpus
        ds = load_dataset(str(out / "train.jsonl"), ("rgb", "flow"),
                          require_tree=True)
        assert len(ds.examples) == 48
        vid = ds.examples[0].video
        assert ds.num_clips(vid) == SMALL["num_clips"]


class TestFeatures:
    def test_rgb_encodes_planted_concepts(self, corpus):
        out, manifest = corpus
        concepts = np.array(manifest["concepts"])
        for vid, meta in list(manifest["videos"].items())[:5]:
            clips = load_features_binary(out / "features" / "rgb" / f"{vid}.ctgf")
            for (ci, span) in zip(meta["concepts"], meta["spans"]):
                for t in range(span[0], span[1] + 1):
                    err = np.linalg.norm(clips[t] - concepts[ci])
                    assert err < 6 * SMALL["sigma"] * np.sqrt(SMALL["feature_dim"])

    def test_buffer_clips_are_noise(self, corpus):
        out, manifest = corpus
        for vid, meta in list(manifest["videos"].items())[:5]:
            clips = load_features_binary(out / "features" / "rgb" / f"{vid}.ctgf")
            planted = set()
            for span in meta["spans"]:
                planted.update(range(span[0], span[1] + 1))
            for t in set(range(SMALL["num_clips"])) - planted:
                assert np.linalg.norm(clips[t]) < 0.5  # noise only

    def test_flow_pure_noise_when_signal_disabled(self, tmp_path):
        cfg = SynthConfig(num_concepts=4, num_videos=6, feature_dim=8,
                          signal2=False, sigma=0.05, seed=3)
        manifest = generate(cfg, str(tmp_path))
        for vid in manifest["videos"]:
            clips = load_features_binary(tmp_path / "features" / "flow"
                                         / f"{vid}.ctgf")
            assert np.abs(clips).max() < 0.5

    def test_too_few_clips_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="cannot place"):
            generate(SynthConfig(num_concepts=4, num_videos=2, num_clips=2,
                                 feature_dim=8, seed=0), str(tmp_path))
