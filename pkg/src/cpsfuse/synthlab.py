"""Synthetic labeled corpora (text and audio) with controllable class-signal
channels, for exercising the full pipeline at desk scale.

Text signal: each instance is filler tokens plus, with probability
1 - keyword_noise, one keyword drawn from its class lexicon. Audio signal:
a harmonic tone at a class-specific fundamental and amplitude plus low-level
noise. In ``mixed`` mode a designated class subset carries signal only in
audio (their texts are all filler). Generation is pure under the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acoustic import AudioClip
from .base import DataError, derived_rng
from .corpus import Corpus, CorpusRecord, Dimension, Utterance

__all__ = [
    "SynthSpec",
    "SynthAudioSpec",
    "generate_corpus",
    "synthesize_clip",
    "table1_social_preset",
    "table1_affective_preset",
    "mixed6_preset",
    "write_gold_csv",
]

MODES = ("text_only", "audio_only", "mixed")

# Table 1 per-class totals: social-cognitive then affective
TABLE1_SOCIAL_COUNTS = (215, 1223, 349, 27, 94, 126, 22, 51, 1590, 859)
TABLE1_AFFECTIVE_COUNTS = (569, 920, 39)

FILLERS = (
    "triangle", "squares", "equation", "answer", "value", "side", "length",
    "formula", "number", "point", "line", "angle", "roots", "term", "step",
    "plan", "group", "task", "question", "problem", "works", "idea", "checks",
    "result", "graph", "chart", "unit", "sums", "parts", "total", "halves",
    "base", "height", "area", "width", "measure", "figure", "draws", "writes",
    "reads", "counts", "lists", "goal", "notes",
)


@dataclass(frozen=True)
class SynthAudioSpec:
    f0_by_class: dict[str, float]
    amplitude_by_class: dict[str, float]
    f0_jitter: float = 5.0
    amplitude_jitter: float = 0.05
    duration_s: float = 0.8
    sample_rate: int = 16000
    harmonics: int = 5
    snr_db: float = 25.0

    def __post_init__(self):
        if self.snr_db < 20.0:
            raise DataError("synthetic audio keeps SNR >= 20 dB")
        for label, f0 in self.f0_by_class.items():
            if f0 <= 0 or f0 * self.harmonics >= self.sample_rate / 2:
                raise DataError(
                    f"class {label!r}: f0 {f0} with {self.harmonics} harmonics "
                    f"exceeds Nyquist at {self.sample_rate} Hz"
                )


@dataclass(frozen=True)
class SynthSpec:
    class_counts: dict[str, int]
    keywords: dict[str, tuple[str, ...]]
    mode: str = "text_only"
    audio_signal_classes: tuple[str, ...] = ()
    keyword_noise: float = 0.0
    fillers: tuple[str, ...] = FILLERS
    tokens_per_text: int = 7
    dimension: Dimension = Dimension.SOCIAL_COGNITIVE
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.keyword_noise < 1.0):
            raise DataError("keyword_noise must lie in [0, 1)")
        if any(n < 1 for n in self.class_counts.values()):
            raise DataError("every class count must be >= 1")
        seen: dict[str, str] = {}
        for label, words in self.keywords.items():
            for w in words:
                if w in seen:
                    raise DataError(
                        f"keyword {w!r} appears in classes {seen[w]!r} and {label!r}; "
                        "lexicons must be pairwise disjoint"
                    )
                if w in self.fillers:
                    raise DataError(f"keyword {w!r} collides with a filler token")
                seen[w] = label
        text_classes = set(self.class_counts) - set(self.audio_signal_classes)
        if self.mode in ("text_only", "mixed"):
            missing = [c for c in sorted(text_classes) if not self.keywords.get(c)]
            if missing:
                raise DataError(f"text-signal classes {missing} need keywords")
        if self.mode == "mixed" and not self.audio_signal_classes:
            raise DataError("mixed mode needs a non-empty audio_signal_classes subset")
        if self.mode == "text_only" and self.audio_signal_classes:
            raise DataError("audio_signal_classes is meaningless in text_only mode")
        unknown = set(self.audio_signal_classes) - set(self.class_counts)
        if unknown:
            raise DataError(f"audio_signal_classes {sorted(unknown)} not in class_counts")


def _validate_separation(spec, audio_spec):
    labels = (
        list(spec.audio_signal_classes)
        if spec.mode == "mixed"
        else sorted(spec.class_counts)
    )
    f0s = sorted(audio_spec.f0_by_class[label] for label in labels)
    for a, b in zip(f0s, f0s[1:]):
        if b - a < 4.0 * audio_spec.f0_jitter:
            raise DataError(
                f"audio-signal f0 means {a} and {b} are closer than 4x jitter "
                f"({audio_spec.f0_jitter})"
            )


def synthesize_clip(f0, amplitude, duration_s, sample_rate, rng, harmonics=5, snr_db=25.0):
    """Harmonic tone (1/k partial amplitudes) plus white noise at snr_db."""
    if f0 * harmonics >= sample_rate / 2:
        raise DataError(f"f0 {f0} with {harmonics} harmonics exceeds Nyquist")
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    phase = rng.uniform(0, 2 * np.pi)
    tone = np.zeros_like(t)
    for k in range(1, harmonics + 1):
        tone += (1.0 / k) * np.sin(2 * np.pi * k * f0 * t + phase * k)
    tone *= amplitude / np.abs(tone).max()
    signal_rms = np.sqrt(np.mean(tone * tone))
    noise_rms = signal_rms / (10.0 ** (snr_db / 20.0))
    noise = rng.standard_normal(len(t)) * noise_rms
    return AudioClip(np.clip(tone + noise, -1.0, 1.0), sample_rate)


def generate_corpus(spec, audio_spec=None, audio_ref_prefix="clip"):
    """Returns (corpus, gold, clips): gold maps utterance id to class label,
    clips maps audio_ref key to AudioClip (empty in text_only mode)."""
    wants_audio = spec.mode in ("audio_only", "mixed")
    if wants_audio:
        if audio_spec is None:
            raise DataError(f"mode {spec.mode!r} needs a SynthAudioSpec")
        missing = set(spec.class_counts) - set(audio_spec.f0_by_class)
        if missing:
            raise DataError(f"audio spec missing f0 for classes {sorted(missing)}")
        _validate_separation(spec, audio_spec)

    records = []
    gold = {}
    clips = {}
    ordered = [
        (label, k)
        for label in spec.class_counts
        for k in range(spec.class_counts[label])
    ]
    duration_ms = int(round((audio_spec.duration_s if wants_audio else 0.8) * 1000))
    for i, (label, _k) in enumerate(ordered):
        rng = derived_rng(spec.seed, "inst", i)
        utt_id = f"u{i:05d}"
        text_signal = spec.mode == "text_only" or (
            spec.mode == "mixed" and label not in spec.audio_signal_classes
        )
        n_tokens = spec.tokens_per_text
        tokens = list(rng.choice(spec.fillers, size=n_tokens))
        if text_signal and rng.random() >= spec.keyword_noise:
            lexicon = spec.keywords[label]
            keyword = lexicon[int(rng.integers(len(lexicon)))]
            tokens[int(rng.integers(n_tokens))] = keyword
        audio_ref = None
        if wants_audio:
            f0 = audio_spec.f0_by_class[label] + rng.uniform(
                -audio_spec.f0_jitter, audio_spec.f0_jitter
            )
            amp = audio_spec.amplitude_by_class[label] * (
                1.0 + rng.uniform(-audio_spec.amplitude_jitter, audio_spec.amplitude_jitter)
            )
            audio_ref = f"{audio_ref_prefix}_{utt_id}"
            clips[audio_ref] = synthesize_clip(
                f0, amp, audio_spec.duration_s, audio_spec.sample_rate, rng,
                harmonics=audio_spec.harmonics, snr_db=audio_spec.snr_db,
            )
        utt = Utterance(
            id=utt_id,
            triad_id=f"t{i % 26:02d}",
            speaker_id=f"s{i % 3}",
            start_ms=i * duration_ms,
            end_ms=(i + 1) * duration_ms,
            text=" ".join(tokens),
            audio_ref=audio_ref,
        )
        records.append(CorpusRecord(utterance=utt, codes=((spec.dimension, label),)))
        gold[utt_id] = label
    return Corpus(records), gold, clips


def write_gold_csv(gold, dimension, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,dimension,class\n")
        for utt_id, label in gold.items():
            fh.write(f"{utt_id},{dimension.value},{label}\n")


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

# Sparse classes get several rare keywords each: dense single-keyword evidence
# is easy for axis-aligned splits, while rare spread-out evidence is where
# depth-limited forests fall back to majority votes.
_TABLE1_KEYWORDS = {
    "C01": ("restate",),
    "C02": ("agrees",),
    "C03": ("propose",),
    "C04": ("hypotenuse", "variable", "coefficient", "denominator", "numerator", "quadratic"),
    "C05": (
        "theorem", "axiom", "lemma", "proofs", "converse", "identity",
        "factor", "exponent", "radical", "integer",
    ),
    "C06": ("confirm",),
    "C07": ("stuck", "confused", "unsure", "puzzled", "baffled"),
    "C08": ("timeline", "deadline", "schedule", "agenda", "roster", "checklist"),
    "C09": ("instruction",),
    "C10": ("monitor",),
}


def table1_social_preset(seed=0, keyword_noise=0.08):
    counts = {f"C{i + 1:02d}": n for i, n in enumerate(TABLE1_SOCIAL_COUNTS)}
    return SynthSpec(
        class_counts=counts,
        keywords=_TABLE1_KEYWORDS,
        mode="text_only",
        keyword_noise=keyword_noise,
        seed=seed,
    )


def table1_affective_preset(seed=0, keyword_noise=0.08):
    counts = {f"A{i + 1}": n for i, n in enumerate(TABLE1_AFFECTIVE_COUNTS)}
    keywords = {"A1": ("thanks",), "A2": ("annoyed",), "A3": ("excited",)}
    return SynthSpec(
        class_counts=counts,
        keywords=keywords,
        mode="text_only",
        keyword_noise=keyword_noise,
        dimension=Dimension.AFFECTIVE,
        seed=seed,
    )


def mixed6_preset(seed=0, per_class=120):
    """Six classes; M4-M6 carry signal only in audio (distinct fundamentals)."""
    labels = [f"M{i}" for i in range(1, 7)]
    counts = {label: per_class for label in labels}
    keywords = {
        "M1": ("perimeter",),
        "M2": ("gradient",),
        "M3": ("velocity",),
    }
    spec = SynthSpec(
        class_counts=counts,
        keywords=keywords,
        mode="mixed",
        audio_signal_classes=("M4", "M5", "M6"),
        keyword_noise=0.0,
        seed=seed,
    )
    audio = SynthAudioSpec(
        f0_by_class={"M1": 150.0, "M2": 210.0, "M3": 330.0,
                     "M4": 120.0, "M5": 180.0, "M6": 270.0},
        amplitude_by_class={"M1": 0.4, "M2": 0.4, "M3": 0.4,
                            "M4": 0.25, "M5": 0.4, "M6": 0.55},
        f0_jitter=5.0,
    )
    return spec, audio
