"""Labeled utterance corpora: loading, masking, instance explosion, filtering,
stratified splitting, and coding-quality statistics (WER, Cohen's kappa).

Corpus files are UTF-8 JSON Lines, one utterance record per line with fields
``{id, triad_id, speaker_id, start_ms, end_ms, text, codes: [{dimension,
class}], audio_ref?}``. Corpora are immutable after load; every operation here
is a pure function of its inputs.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace

from .base import DataError, derived_rng

__all__ = [
    "Dimension",
    "Utterance",
    "CorpusRecord",
    "Corpus",
    "CodedInstance",
    "LabelScheme",
    "MaskLexicon",
    "SplitSpec",
    "DatasetSplit",
    "DEFAULT_MASK_CATEGORIES",
    "DEFAULT_LABEL_SCHEME",
    "load_corpus",
    "save_corpus",
    "load_mask_lexicon",
    "load_rater_codings",
    "apply_masks",
    "explode_multicoded",
    "filter_rare_classes",
    "partition_by_dimension",
    "stratified_split",
    "word_error_rate",
    "word_edit_distance",
    "cohens_kappa",
]


class Dimension(str, enum.Enum):
    SOCIAL_COGNITIVE = "social-cognitive"
    AFFECTIVE = "affective"

    @classmethod
    def parse(cls, value):
        try:
            return cls(value)
        except ValueError:
            raise DataError(
                f"unknown dimension {value!r}; expected one of "
                f"{[d.value for d in cls]}"
            ) from None


@dataclass(frozen=True)
class Utterance:
    id: str
    triad_id: str
    speaker_id: str
    start_ms: int
    end_ms: int
    text: str
    audio_ref: str | None = None

    def validate(self):
        if not self.id:
            raise DataError("utterance id must be non-empty")
        if self.end_ms < self.start_ms:
            raise DataError(
                f"utterance {self.id!r}: end_ms {self.end_ms} < start_ms {self.start_ms}"
            )
        if not self.text.strip():
            raise DataError(f"utterance {self.id!r}: text is empty")


@dataclass(frozen=True)
class CorpusRecord:
    """One corpus line: an utterance plus its (possibly empty) code list."""

    utterance: Utterance
    codes: tuple[tuple[Dimension, str], ...] = ()


class Corpus:
    """Ordered, immutable collection of corpus records with unique ids."""

    def __init__(self, records):
        self.records = tuple(records)
        self._by_id = {}
        for rec in self.records:
            rec.utterance.validate()
            if rec.utterance.id in self._by_id:
                raise DataError(f"duplicate utterance id {rec.utterance.id!r}")
            self._by_id[rec.utterance.id] = rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, utterance_id):
        try:
            return self._by_id[utterance_id]
        except KeyError:
            raise KeyError(f"no utterance with id {utterance_id!r}") from None

    def __contains__(self, utterance_id):
        return utterance_id in self._by_id

    @property
    def utterances(self):
        return [rec.utterance for rec in self.records]

    def ids(self):
        return [rec.utterance.id for rec in self.records]


@dataclass(frozen=True)
class CodedInstance:
    """One (utterance, code) pair; the classification unit."""

    instance_id: str
    utterance: Utterance
    dimension: Dimension
    class_label: str


@dataclass(frozen=True)
class LabelScheme:
    """Ordered class codes per dimension; order drives matrix/report layout."""

    codes: dict[Dimension, tuple[str, ...]]

    def __post_init__(self):
        for dim, labels in self.codes.items():
            if len(set(labels)) != len(labels):
                raise DataError(f"duplicate class codes in dimension {dim.value!r}")

    def codes_for(self, dimension):
        return self.codes.get(dimension, ())

    def contains(self, dimension, class_label):
        return class_label in self.codes.get(dimension, ())

    @classmethod
    def from_instances(cls, instances):
        """Data-driven scheme: codes observed per dimension, natural-sorted."""
        seen = {}
        for inst in instances:
            seen.setdefault(inst.dimension, set()).add(inst.class_label)
        return cls({dim: tuple(sorted(labels, key=_natural_key)) for dim, labels in seen.items()})


def _natural_key(code):
    parts = re.split(r"(\d+)", code)
    return tuple(int(p) if p.isdigit() else p for p in parts)


DEFAULT_LABEL_SCHEME = LabelScheme(
    {
        Dimension.SOCIAL_COGNITIVE: (
            "SS1", "SS2", "SS3", "SS4", "SS5", "SS6", "SS7", "SS8", "SC1", "SC2",
        ),
        Dimension.AFFECTIVE: ("AS1", "AS2", "AS3"),
    }
)

DEFAULT_MASK_CATEGORIES = (
    "name",
    "location",
    "website",
    "app",
    "game",
    "video",
    "music",
    "device",
    "platform",
    "organization",
    "resource",
)

# Existing mask tokens are matched first and passed through unchanged,
# which makes masking idempotent even when a surface string collides
# with a category name.
_MASK_TOKEN_RE = r"\[[A-Z0-9_]+\]"


@dataclass(frozen=True)
class MaskLexicon:
    """Category -> surface strings; matches render as \"[CATEGORY]\"."""

    entries: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {c: () for c in DEFAULT_MASK_CATEGORIES}
    )

    def __post_init__(self):
        if len({c.lower() for c in self.entries}) != len(self.entries):
            raise DataError("mask categories must be unique (case-insensitive)")
        for category, surfaces in self.entries.items():
            if not category:
                raise DataError("mask category names must be non-empty")
            for s in surfaces:
                if not s:
                    raise DataError(f"category {category!r} has an empty surface string")

    def is_empty(self):
        return all(not surfaces for surfaces in self.entries.values())

    def compile(self):
        """Build the longest-match-first, word-boundary, case-insensitive matcher."""
        surface_to_category = {}
        for category, surfaces in self.entries.items():
            for s in surfaces:
                surface_to_category[s.lower()] = category.upper()
        ordered = sorted(surface_to_category, key=lambda s: (-len(s), s))
        alternatives = [_MASK_TOKEN_RE]
        alternatives += [rf"(?<!\w){re.escape(s)}(?!\w)" for s in ordered]
        pattern = re.compile("|".join(alternatives), re.IGNORECASE)
        return pattern, surface_to_category


def load_corpus(path, scheme=None):
    """Load a JSONL corpus file, checking utterance invariants per line.

    With a ``scheme`` given, class codes are validated against it; otherwise
    the class set is taken as data-driven.
    """
    records = []
    seen_ids = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed record: {exc}") from None
            try:
                rec = _parse_record(raw, scheme)
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            if rec.utterance.id in seen_ids:
                raise DataError(
                    f"{path}: line {lineno}: duplicate utterance id {rec.utterance.id!r} "
                    f"(first seen on line {seen_ids[rec.utterance.id]})"
                )
            seen_ids[rec.utterance.id] = lineno
            records.append(rec)
    return Corpus(records)


def _parse_record(raw, scheme):
    if not isinstance(raw, dict):
        raise DataError("record is not an object")
    required = ("id", "triad_id", "speaker_id", "start_ms", "end_ms", "text")
    for key in required:
        if key not in raw:
            raise DataError(f"missing field {key!r}")
    for key in ("start_ms", "end_ms"):
        if not isinstance(raw[key], int) or isinstance(raw[key], bool):
            raise DataError(f"field {key!r} must be an integer")
    utt = Utterance(
        id=str(raw["id"]),
        triad_id=str(raw["triad_id"]),
        speaker_id=str(raw["speaker_id"]),
        start_ms=raw["start_ms"],
        end_ms=raw["end_ms"],
        text=str(raw["text"]),
        audio_ref=raw.get("audio_ref"),
    )
    utt.validate()
    codes = []
    for entry in raw.get("codes", []):
        if not isinstance(entry, dict) or "dimension" not in entry or "class" not in entry:
            raise DataError("each code needs {dimension, class}")
        dim = Dimension.parse(entry["dimension"])
        label = str(entry["class"])
        if scheme is not None and not scheme.contains(dim, label):
            raise DataError(f"unknown class code {label!r} for dimension {dim.value!r}")
        codes.append((dim, label))
    return CorpusRecord(utterance=utt, codes=tuple(codes))


def save_corpus(corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            u = rec.utterance
            obj = {
                "id": u.id,
                "triad_id": u.triad_id,
                "speaker_id": u.speaker_id,
                "start_ms": u.start_ms,
                "end_ms": u.end_ms,
                "text": u.text,
                "codes": [{"dimension": d.value, "class": c} for d, c in rec.codes],
            }
            if u.audio_ref is not None:
                obj["audio_ref"] = u.audio_ref
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def load_mask_lexicon(path):
    """Lexicon file: JSON object mapping category name to surface-string list."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DataError(f"{path}: mask lexicon must be an object")
    return MaskLexicon({str(k): tuple(str(s) for s in v) for k, v in raw.items()})


def apply_masks(corpus, lexicon, overrides=None):
    """Replace lexicon surface strings with "[CATEGORY]" tokens.

    Longest match wins, matches are word-bounded and case-insensitive, and
    text already masked is left alone, so the operation is idempotent.
    ``overrides`` maps utterance id to hand-corrected full replacement text.
    """
    overrides = overrides or {}
    if lexicon.is_empty() and not overrides:
        return corpus
    pattern, surface_to_category = lexicon.compile()

    def _mask_one(text):
        def repl(match):
            token = match.group(0)
            category = surface_to_category.get(token.lower())
            if category is None:
                return token  # an existing [MASK] token
            return f"[{category}]"

        return pattern.sub(repl, text)

    records = []
    for rec in corpus:
        if rec.utterance.id in overrides:
            new_text = overrides[rec.utterance.id]
        else:
            new_text = _mask_one(rec.utterance.text)
        records.append(replace(rec, utterance=replace(rec.utterance, text=new_text)))
    return Corpus(records)


def explode_multicoded(corpus, scheme=None):
    """One CodedInstance per (utterance, code) pair; uncoded records drop out.

    Instance ids are ``<utterance_id>#<ordinal>`` so that multiple codes on
    the same utterance stay distinct.
    """
    instances = []
    for rec in corpus:
        for ordinal, (dim, label) in enumerate(rec.codes):
            if scheme is not None and not scheme.contains(dim, label):
                raise DataError(
                    f"utterance {rec.utterance.id!r}: unknown class code {label!r} "
                    f"for dimension {dim.value!r}"
                )
            instances.append(
                CodedInstance(
                    instance_id=f"{rec.utterance.id}#{ordinal}",
                    utterance=rec.utterance,
                    dimension=dim,
                    class_label=label,
                )
            )
    return instances


def filter_rare_classes(instances, min_class_instances=10):
    """Drop whole classes with fewer than ``min_class_instances`` instances."""
    dims = {inst.dimension for inst in instances}
    if len(dims) > 1:
        raise DataError(
            f"instances span multiple dimensions {sorted(d.value for d in dims)}; "
            "partition first"
        )
    counts = {}
    for inst in instances:
        counts[inst.class_label] = counts.get(inst.class_label, 0) + 1
    keep = {label for label, n in counts.items() if n >= min_class_instances}
    if instances and not keep:
        raise DataError(
            f"all classes have fewer than {min_class_instances} instances; dataset is empty"
        )
    return [inst for inst in instances if inst.class_label in keep]


def partition_by_dimension(instances):
    """Split instances into (social-cognitive, affective) lists."""
    social = [i for i in instances if i.dimension is Dimension.SOCIAL_COGNITIVE]
    affective = [i for i in instances if i.dimension is Dimension.AFFECTIVE]
    return social, affective


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    min_class_instances: int = 10
    cv_folds: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("test_fraction", "val_fraction"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DataError(f"{name} must lie strictly in (0, 1), got {v}")
        if self.min_class_instances < 1:
            raise DataError("min_class_instances must be >= 1")
        if self.cv_folds < 2:
            raise DataError("cv_folds must be >= 2")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]


def stratified_split(instances, spec):
    """Per-class test count = round-half-to-even(n * test_fraction), clamped
    to [1, n-1]; selection within each class is uniform under the seed.
    """
    by_class = {}
    for pos, inst in enumerate(instances):
        by_class.setdefault(inst.class_label, []).append(pos)
    test_positions = set()
    for label in sorted(by_class):
        positions = by_class[label]
        n = len(positions)
        if n < 2:
            raise DataError(
                f"class {label!r} has {n} instance(s); need >= 2 to split "
                "(filter rare classes first)"
            )
        n_test = round(n * spec.test_fraction)
        n_test = min(max(n_test, 1), n - 1)
        rng = derived_rng(spec.seed, "stratified_split", label)
        chosen = rng.permutation(n)[:n_test]
        test_positions.update(positions[i] for i in chosen)
    train, test = [], []
    for pos, inst in enumerate(instances):
        (test if pos in test_positions else train).append(inst.instance_id)
    return DatasetSplit(train=tuple(train), test=tuple(test))


def _tokenize(text):
    return text.lower().split()


def word_edit_distance(ref_tokens, hyp_tokens):
    """Word-level Levenshtein distance with unit costs, by dynamic programming."""
    nr, nh = len(ref_tokens), len(hyp_tokens)
    prev = list(range(nh + 1))
    for i in range(1, nr + 1):
        cur = [i] + [0] * nh
        r = ref_tokens[i - 1]
        for j in range(1, nh + 1):
            sub = prev[j - 1] + (r != hyp_tokens[j - 1])
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, sub)
        prev = cur
    return prev[nh]


def word_error_rate(reference, hypothesis):
    """Word-level edit distance divided by reference word count."""
    ref_tokens = _tokenize(reference)
    if not ref_tokens:
        raise DataError("WER is undefined for an empty reference")
    hyp_tokens = _tokenize(hypothesis)
    return word_edit_distance(ref_tokens, hyp_tokens) / len(ref_tokens)


def load_rater_codings(path):
    """Rater file: CSV-like rows ``id,rater_a,rater_b`` (header optional)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts[:3] == ["id", "rater_a", "rater_b"]:
                continue
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno}: expected id,rater_a,rater_b")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def cohens_kappa(pairs):
    """Chance-corrected inter-rater agreement.

    ``pairs`` may be (rater_a, rater_b) tuples or (id, rater_a, rater_b)
    triples. When both raters are constant and identical (chance agreement 1),
    kappa is defined as 1.0.
    """
    a_codes, b_codes = [], []
    for pair in pairs:
        if len(pair) == 3:
            _, a, b = pair
        elif len(pair) == 2:
            a, b = pair
        else:
            raise DataError("rater pairs must be 2- or 3-tuples")
        a_codes.append(a)
        b_codes.append(b)
    n = len(a_codes)
    if n == 0:
        raise DataError("cohens_kappa needs at least one pair")
    p_o = sum(a == b for a, b in zip(a_codes, b_codes)) / n
    labels = set(a_codes) | set(b_codes)
    p_e = sum(
        (a_codes.count(lbl) / n) * (b_codes.count(lbl) / n) for lbl in labels
    )
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)
