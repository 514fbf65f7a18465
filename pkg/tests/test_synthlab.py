"""Synthetic corpus generation: counts, signal channels, determinism."""

import numpy as np
import pytest

from cpsfuse.acoustic import AcousticConfig, compute_llds, summarize
from cpsfuse.base import DataError
from cpsfuse.corpus import Dimension
from cpsfuse.synthlab import (
    SynthAudioSpec,
    SynthSpec,
    generate_corpus,
    mixed6_preset,
    synthesize_clip,
    table1_affective_preset,
    table1_social_preset,
)

FAST = AcousticConfig(frame_step_ms=10.0)


def small_text_spec(noise=0.0, seed=0):
    return SynthSpec(
        class_counts={"A": 40, "B": 40},
        keywords={"A": ("anchor",), "B": ("beacon",)},
        mode="text_only",
        keyword_noise=noise,
        seed=seed,
    )


class TestGenerateCorpus:
    def test_counts_match_spec_exactly(self):
        corpus, gold, clips = generate_corpus(small_text_spec())
        assert len(corpus) == 80
        labels = list(gold.values())
        assert labels.count("A") == 40 and labels.count("B") == 40
        assert clips == {}

    def test_noise_zero_every_instance_has_exactly_one_keyword(self):
        corpus, gold, _ = generate_corpus(small_text_spec())
        keywords = {"A": "anchor", "B": "beacon"}
        for rec in corpus:
            tokens = rec.utterance.text.split()
            label = gold[rec.utterance.id]
            assert tokens.count(keywords[label]) == 1
            other = keywords["B" if label == "A" else "A"]
            assert other not in tokens

    def test_same_seed_identical_corpora(self):
        a, _, _ = generate_corpus(small_text_spec(seed=5))
        b, _, _ = generate_corpus(small_text_spec(seed=5))
        assert [r.utterance.text for r in a] == [r.utterance.text for r in b]
        c, _, _ = generate_corpus(small_text_spec(seed=6))
        assert [r.utterance.text for r in a] != [r.utterance.text for r in c]

    def test_keyword_lookup_classifier_is_bayes_ceiling(self):
        corpus, gold, _ = generate_corpus(small_text_spec())
        correct = 0
        for rec in corpus:
            tokens = set(rec.utterance.text.split())
            guess = "A" if "anchor" in tokens else ("B" if "beacon" in tokens else None)
            correct += guess == gold[rec.utterance.id]
        assert correct == len(corpus)

    def test_mixed_mode_audio_classes_have_no_keywords(self):
        spec, audio = mixed6_preset(seed=3, per_class=12)
        corpus, gold, clips = generate_corpus(spec, audio)
        all_keywords = {w for words in spec.keywords.values() for w in words}
        for rec in corpus:
            label = gold[rec.utterance.id]
            tokens = set(rec.utterance.text.split())
            if label in spec.audio_signal_classes:
                assert not (tokens & all_keywords)
            assert rec.utterance.audio_ref in clips

    def test_tokens_per_text_is_constant(self):
        corpus, _, _ = generate_corpus(small_text_spec())
        assert {len(r.utterance.text.split()) for r in corpus} == {7}

    def test_mixed_needs_audio_spec(self):
        spec, _ = mixed6_preset(per_class=4)
        with pytest.raises(DataError, match="SynthAudioSpec"):
            generate_corpus(spec, None)


class TestSynthesizeClip:
    def test_f0_recovered_by_extractor(self):
        rng = np.random.default_rng(0)
        clip = synthesize_clip(180.0, 0.4, 1.0, 16000, rng)
        vec = summarize(compute_llds(clip, FAST), FAST)
        assert abs(vec[0] - 180.0) <= 10.0

    def test_duration_sample_arithmetic(self):
        rng = np.random.default_rng(1)
        clip = synthesize_clip(200.0, 0.4, 1.0, 16000, rng)
        assert len(clip.samples) == 16000

    def test_two_classes_well_separated(self):
        rng = np.random.default_rng(2)
        low = synthesize_clip(150.0, 0.4, 1.0, 16000, rng)
        high = synthesize_clip(300.0, 0.4, 1.0, 16000, rng)
        f_low = summarize(compute_llds(low, FAST), FAST)[0]
        f_high = summarize(compute_llds(high, FAST), FAST)[0]
        assert f_high - f_low >= 100.0

    def test_nyquist_guard(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DataError, match="Nyquist"):
            synthesize_clip(2000.0, 0.4, 1.0, 16000, rng, harmonics=5)


class TestSpecValidation:
    def test_overlapping_lexicons_rejected(self):
        with pytest.raises(DataError, match="disjoint"):
            SynthSpec(
                class_counts={"A": 5, "B": 5},
                keywords={"A": ("same",), "B": ("same",)},
            )

    def test_keyword_filler_collision_rejected(self):
        with pytest.raises(DataError, match="filler"):
            SynthSpec(
                class_counts={"A": 5},
                keywords={"A": ("triangle",)},
            )

    def test_zero_count_rejected(self):
        with pytest.raises(DataError, match=">= 1"):
            SynthSpec(class_counts={"A": 0}, keywords={"A": ("x",)})

    def test_f0_separation_rule_enforced(self):
        spec = SynthSpec(
            class_counts={"A": 4, "B": 4},
            keywords={},
            mode="audio_only",
        )
        audio = SynthAudioSpec(
            f0_by_class={"A": 150.0, "B": 160.0},
            amplitude_by_class={"A": 0.4, "B": 0.4},
            f0_jitter=5.0,
        )
        with pytest.raises(DataError, match="4x jitter"):
            generate_corpus(spec, audio)

    def test_snr_floor(self):
        with pytest.raises(DataError, match="SNR"):
            SynthAudioSpec(
                f0_by_class={"A": 150.0},
                amplitude_by_class={"A": 0.4},
                snr_db=10.0,
            )


class TestPresets:
    def test_table1_social_counts(self):
        spec = table1_social_preset()
        assert sum(spec.class_counts.values()) == 4556
        assert spec.class_counts["C02"] == 1223
        assert spec.class_counts["C09"] == 1590
        corpus, gold, _ = generate_corpus(spec)
        assert len(corpus) == 4556

    def test_table1_affective_counts(self):
        spec = table1_affective_preset()
        assert tuple(spec.class_counts.values()) == (569, 920, 39)
        assert spec.dimension is Dimension.AFFECTIVE

    def test_mixed6_audio_classes_separated(self):
        spec, audio = mixed6_preset()
        f0s = sorted(audio.f0_by_class[c] for c in spec.audio_signal_classes)
        for a, b in zip(f0s, f0s[1:]):
            assert b - a >= 4 * audio.f0_jitter
