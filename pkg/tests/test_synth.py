"""
Tests for the synthetic coin corpus
"""
import numpy as np
import pytest

from numisnet.dataset import read_manifest
from numisnet.errors import ConfigError, ManifestError
from numisnet.synth import (
    CONCEPTS,
    GlyphRegistry,
    SynthSpec,
    coin_id,
    describe,
    generate_coin,
    generate_corpus,
    glyphs,
    plan_noise,
    plan_presence,
    read_ground_truth,
)
from numisnet.text import LANGUAGES, POSITIVE, assign_label, lexicon_for, normalize_text


def all_keywords(tables):
    keywords = set()
    for concept in CONCEPTS:
        keywords |= lexicon_for(concept, tables).keywords
    return keywords


def text_labels(text, tables):
    tokens = normalize_text(text)
    return {c: assign_label(tokens, lexicon_for(c, tables)) == POSITIVE for c in CONCEPTS}


class TestSynthSpec:
    """Test SynthSpec validation"""

    def test_defaults(self):
        spec = SynthSpec()
        assert spec.concepts == ("horse", "cornucopia", "patera", "eagle", "shield")

    @pytest.mark.parametrize("kwargs", [
        {"n_samples": 9},
        {"positive_rate": 1.5},
        {"label_noise_rate": -0.1},
        {"concepts": ()},
        {"concepts": ("lion",)},
        {"image_side": 16},
        {"layout": "stacked"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SynthSpec(**kwargs)


class TestGlyphs:
    """Test the glyph registry"""

    def test_every_concept_has_a_glyph(self):
        assert all(concept in glyphs for concept in CONCEPTS)

    def test_shape_families_differ(self):
        masks = {c: np.asarray(glyphs.render(c, 48).getchannel("A")) > 0 for c in CONCEPTS}
        for a in CONCEPTS:
            assert masks[a].any()
            for b in CONCEPTS:
                if a < b:
                    assert (masks[a] != masks[b]).mean() > 0.05, (a, b)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            GlyphRegistry().render("horse", 32)


class TestGenerateCoin:
    """Test generate_coin"""

    def test_same_seed_identical(self, lexicon_tables):
        first = generate_coin(11, ["horse", "shield"], side=64, tables=lexicon_tables)
        second = generate_coin(11, ["horse", "shield"], side=64, tables=lexicon_tables)
        np.testing.assert_array_equal(first.image.pixels, second.image.pixels)
        assert first.text == second.text

    def test_different_seeds_differ(self, lexicon_tables):
        first = generate_coin(1, ["eagle"], side=64, tables=lexicon_tables)
        second = generate_coin(2, ["eagle"], side=64, tables=lexicon_tables)
        assert not np.array_equal(first.image.pixels, second.image.pixels)

    def test_empty_has_no_keywords(self, lexicon_tables):
        keywords = all_keywords(lexicon_tables)
        for seed in range(40):
            for language in LANGUAGES:
                coin = generate_coin(seed, [], side=32, tables=lexicon_tables, language=language)
                assert not normalize_text(coin.text) & keywords, coin.text
                assert not any(coin.truth.values())

    def test_french_horse(self, lexicon_tables):
        coin = generate_coin(4, ["horse"], side=32, tables=lexicon_tables, language="fr")
        assert "cheval" in coin.text

    @pytest.mark.parametrize("language", LANGUAGES)
    def test_text_names_exactly_the_present_concepts(self, lexicon_tables, language):
        for seed in range(10):
            present = [c for i, c in enumerate(CONCEPTS) if (seed >> i) & 1]
            coin = generate_coin(seed, present, side=32, tables=lexicon_tables,
                                 language=language)
            expected = {c: c in present for c in CONCEPTS}
            assert text_labels(coin.text, lexicon_tables) == expected, coin.text
            assert coin.truth == expected

    def test_boxes_inside_image(self, lexicon_tables):
        coin = generate_coin(3, list(CONCEPTS), side=96, tables=lexicon_tables)
        assert set(coin.boxes) == set(CONCEPTS)
        for x0, y0, x1, y1 in coin.boxes.values():
            assert 0 <= x0 < x1 <= 96 and 0 <= y0 < y1 <= 96

    @pytest.mark.parametrize("side", [32, 64, 100, 128, 300])
    def test_glyphs_never_overlap(self, lexicon_tables, side):
        for seed in range(15):
            coin = generate_coin([seed, side], list(CONCEPTS), side=side, tables=lexicon_tables)
            boxes = list(coin.boxes.values())
            for i, (ax0, ay0, ax1, ay1) in enumerate(boxes):
                for bx0, by0, bx1, by1 in boxes[i + 1:]:
                    disjoint = ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0
                    assert disjoint, (seed, coin.boxes)

    def test_left_right_layout(self, lexicon_tables):
        coin = generate_coin(3, ["patera"], side=64, layout="left-right", tables=lexicon_tables)
        assert coin.image.pixels.shape == (64, 128, 3)
        assert coin.boxes["patera"][0] >= 64

    def test_glyph_changes_pixels(self, lexicon_tables):
        with_glyph = generate_coin(8, ["eagle"], side=64, tables=lexicon_tables)
        x0, y0, x1, y1 = with_glyph.boxes["eagle"]
        region = with_glyph.image.pixels[y0:y1, x0:x1].astype(int)
        assert np.abs(region - np.array([176, 141, 87])).mean() > 20

    def test_text_override(self, lexicon_tables):
        coin = generate_coin(5, ["horse"], side=32, tables=lexicon_tables,
                             text_concepts=["eagle"])
        labels = text_labels(coin.text, lexicon_tables)
        assert labels["eagle"] and not labels["horse"]
        assert coin.truth["horse"] and not coin.truth["eagle"]

    def test_unknown_concept(self, lexicon_tables):
        with pytest.raises(ConfigError):
            generate_coin(0, ["lion"], side=32, tables=lexicon_tables)

    def test_describe_unknown_language(self, lexicon_tables):
        with pytest.raises(ConfigError):
            describe(["horse"], "it", np.random.default_rng(0), lexicon_tables)


class TestPlans:
    """Test presence and noise planning"""

    def test_exact_positive_counts(self):
        present = plan_presence(SynthSpec(n_samples=1000, positive_rate=0.2, seed=7))
        for concept in CONCEPTS:
            assert sum(concept in p for p in present) == 200

    def test_presence_seeded(self):
        spec = SynthSpec(n_samples=50, seed=7)
        assert plan_presence(spec) == plan_presence(spec)
        assert plan_presence(spec) != plan_presence(SynthSpec(n_samples=50, seed=8))

    def test_no_noise(self):
        spec = SynthSpec(n_samples=100)
        assert plan_noise(spec, plan_presence(spec)) == {}

    def test_noise_changes_exactly_the_planned_samples(self):
        spec = SynthSpec(n_samples=1000, label_noise_rate=0.1, seed=2)
        present = plan_presence(spec)
        noisy = plan_noise(spec, present)
        assert len(noisy) == 100
        for i, shown in noisy.items():
            assert set(shown) != set(present[i])
            assert len(set(shown) ^ set(present[i])) in (1, 2)

    def test_noisy_agreement(self, lexicon_tables):
        """Labels read back from the noisy descriptions agree on about 90% of samples"""
        spec = SynthSpec(n_samples=1000, label_noise_rate=0.1, seed=2)
        present = plan_presence(spec)
        noisy = plan_noise(spec, present)
        agree = 0
        for i in range(spec.n_samples):
            rng = np.random.default_rng([spec.seed, i])
            text = describe(noisy.get(i, present[i]), LANGUAGES[i % 4], rng, lexicon_tables)
            agree += text_labels(text, lexicon_tables) == {c: c in present[i] for c in CONCEPTS}
        assert abs(agree / spec.n_samples - 0.9) <= 0.02


class TestGenerateCorpus:
    """Test generate_corpus on the shared small corpus"""

    def test_layout_on_disk(self, small_corpus):
        assert len(list((small_corpus / "images").glob("*.png"))) == 40
        assert len(list((small_corpus / "texts").glob("*.txt"))) == 40
        assert (small_corpus / "ground_truth.tsv").is_file()
        for concept in CONCEPTS:
            assert (small_corpus / f"manifest_{concept}.tsv").is_file()

    def test_ground_truth_counts(self, small_corpus):
        truth = read_ground_truth(small_corpus / "ground_truth.tsv")
        assert len(truth) == 40 * len(CONCEPTS)
        for concept in CONCEPTS:
            assert sum(truth[(coin_id(i), concept)].present for i in range(40)) == 20

    def test_boxes_only_for_present(self, small_corpus):
        for entry in read_ground_truth(small_corpus / "ground_truth.tsv").values():
            assert (entry.box is not None) == entry.present

    def test_noise_free_texts_match_truth(self, small_corpus, lexicon_tables):
        truth = read_ground_truth(small_corpus / "ground_truth.tsv")
        for i in range(40):
            text = (small_corpus / "texts" / f"{coin_id(i)}.txt").read_text(encoding="utf-8")
            labels = text_labels(text, lexicon_tables)
            for concept in CONCEPTS:
                assert labels[concept] == truth[(coin_id(i), concept)].present

    def test_manifests_readable(self, small_corpus):
        manifest = read_manifest(small_corpus / "manifest_horse.tsv")
        assert len(manifest.samples) == 40
        assert all(s.split == "unassigned" for s in manifest.samples)
        assert manifest.resolve(manifest.samples[0].image_path).is_file()

    def test_workers_do_not_change_output(self, tmp_path, lexicon_tables):
        spec = SynthSpec(n_samples=10, image_side=32, seed=5, label_noise_rate=0.2)
        one = generate_corpus(spec, tmp_path / "one", tables=lexicon_tables)
        two = generate_corpus(spec, tmp_path / "two", tables=lexicon_tables, jobs=3)
        assert one.noisy == two.noisy
        for path in sorted((tmp_path / "one").rglob("*")):
            if path.is_file():
                twin = tmp_path / "two" / path.relative_to(tmp_path / "one")
                assert path.read_bytes() == twin.read_bytes(), path.name

    def test_bad_ground_truth_header(self, tmp_path):
        path = tmp_path / "ground_truth.tsv"
        path.write_text("id\tconcept\n", encoding="utf-8")
        with pytest.raises(ManifestError):
            read_ground_truth(path)
