"""Embedding file I/O plus deterministic toy encoders.

The EMB1 container is the boundary between this package and any external
encoder: magic ``EMB1``, u32 version, u8 modality (1=text, 2=audio), u32
dimension, length-prefixed UTF-8 source string, u32 record count, then per
record a length-prefixed id, u32 step count T, and a T x d row-major
little-endian float32 matrix.

Stores quantize to float32 on ingestion and widen to float64 in memory, so a
write/read round trip is bit-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from .base import DataError, derived_rng, fnv1a64
from .acoustic import compute_llds

__all__ = [
    "EmbeddingStore",
    "ToyTextEncoderConfig",
    "ToyAudioEncoderConfig",
    "toy_text_encode",
    "toy_audio_encode",
    "encode_corpus_text",
    "encode_corpus_audio",
    "write_embeddings",
    "read_embeddings",
    "align",
]

MAGIC = b"EMB1"
VERSION = 1
MODALITY_CODES = {"text": 1, "audio": 2}
MODALITY_NAMES = {v: k for k, v in MODALITY_CODES.items()}


class EmbeddingStore:
    """Per-utterance T x d sequences for one modality, in insertion order."""

    def __init__(self, modality, dim, source=""):
        if modality not in MODALITY_CODES:
            raise DataError(f"modality must be one of {sorted(MODALITY_CODES)}")
        if dim < 1:
            raise DataError(f"dimension must be >= 1, got {dim}")
        self.modality = modality
        self.dim = int(dim)
        self.source = source
        self._records: dict[str, np.ndarray] = {}

    def add(self, utterance_id, matrix):
        if utterance_id in self._records:
            raise DataError(f"duplicate embedding record for id {utterance_id!r}")
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.dim:
            raise DataError(
                f"record {utterance_id!r} has shape {matrix.shape}, expected (T, {self.dim})"
            )
        if matrix.shape[0] < 1:
            raise DataError(f"record {utterance_id!r} must have T >= 1")
        if not np.all(np.isfinite(matrix)):
            raise DataError(f"record {utterance_id!r} contains non-finite values")
        # quantize to the on-disk precision so round trips are exact
        self._records[utterance_id] = matrix.astype(np.float32).astype(np.float64)

    def __len__(self):
        return len(self._records)

    def __contains__(self, utterance_id):
        return utterance_id in self._records

    def __getitem__(self, utterance_id):
        try:
            return self._records[utterance_id]
        except KeyError:
            raise KeyError(f"no embedding record for id {utterance_id!r}") from None

    def ids(self):
        return list(self._records)

    def items(self):
        return self._records.items()


def write_embeddings(store, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<B", MODALITY_CODES[store.modality]))
        fh.write(struct.pack("<I", store.dim))
        source = store.source.encode("utf-8")
        fh.write(struct.pack("<I", len(source)) + source)
        fh.write(struct.pack("<I", len(store)))
        for utt_id, matrix in store.items():
            encoded = utt_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)) + encoded)
            fh.write(struct.pack("<I", matrix.shape[0]))
            fh.write(matrix.astype("<f4").tobytes(order="C"))


class _Reader:
    def __init__(self, path):
        with open(path, "rb") as fh:
            self.data = fh.read()
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated file while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what):
        return self.take(1, what)[0]


def read_embeddings(path):
    r = _Reader(path)
    if r.take(4, "magic") != MAGIC:
        raise DataError(f"{path}: bad magic; not an EMB1 file")
    version = r.u32("version")
    if version != VERSION:
        raise DataError(f"{path}: unsupported EMB1 version {version}")
    modality_code = r.u8("modality")
    if modality_code not in MODALITY_NAMES:
        raise DataError(f"{path}: unknown modality code {modality_code}")
    dim = r.u32("dimension")
    if dim < 1:
        raise DataError(f"{path}: dimension must be >= 1")
    source = r.take(r.u32("source length"), "source").decode("utf-8")
    count = r.u32("record count")
    store = EmbeddingStore(MODALITY_NAMES[modality_code], dim, source)
    for _ in range(count):
        utt_id = r.take(r.u32("id length"), "id").decode("utf-8")
        steps = r.u32("step count")
        if steps < 1:
            raise DataError(f"{path}: record {utt_id!r} has T = {steps}")
        raw = r.take(steps * dim * 4, f"record {utt_id!r}")
        matrix = np.frombuffer(raw, dtype="<f4").reshape(steps, dim)
        store.add(utt_id, matrix)
    if r.pos != len(r.data):
        raise DataError(f"{path}: {len(r.data) - r.pos} trailing bytes after last record")
    return store


# ---------------------------------------------------------------------------
# Toy encoders
# ---------------------------------------------------------------------------

class ToyTextEncoderConfig:
    def __init__(self, dim=32, seed=0):
        if dim < 2:
            raise DataError(f"text encoder dimension must be >= 2, got {dim}")
        self.dim = int(dim)
        self.seed = int(seed)

    def describe(self):
        return f"toy-text-encoder(dim={self.dim}, seed={self.seed}, hash=fnv1a64)"


class ToyAudioEncoderConfig:
    def __init__(self, dim=16, window_frames=10, seed=0):
        if dim < 2:
            raise DataError(f"audio encoder dimension must be >= 2, got {dim}")
        if window_frames < 1:
            raise DataError(f"window_frames must be >= 1, got {window_frames}")
        self.dim = int(dim)
        self.window_frames = int(window_frames)
        self.seed = int(seed)

    def describe(self):
        return (
            f"toy-audio-encoder(dim={self.dim}, window={self.window_frames}, "
            f"seed={self.seed})"
        )


def toy_text_encode(text, config):
    """Each whitespace token maps to a fixed unit vector keyed by
    (fnv1a64(token), seed); T = token count."""
    tokens = text.lower().split()
    if not tokens:
        raise DataError("cannot encode empty text")
    rows = np.empty((len(tokens), config.dim))
    cache = {}
    for t, token in enumerate(tokens):
        vec = cache.get(token)
        if vec is None:
            rng = np.random.default_rng([fnv1a64(token), config.seed & 0xFFFFFFFFFFFFFFFF])
            vec = rng.standard_normal(config.dim)
            vec /= np.linalg.norm(vec)
            cache[token] = vec
        rows[t] = vec
    return rows


# frame-level descriptor channels fed to the audio encoder; the first two are
# the only amplitude-dependent ones and map to reserved output coordinates
_SCALE_DEPENDENT = ("loudness",)
_SCALE_INVARIANT = (
    "f0",
    "voiced",
    "hnr",
    "alpha_ratio",
    "hammarberg",
    "slope_0_500",
    "slope_500_1500",
)


def toy_audio_encode(clip, acoustic_config, toy_config):
    """Window the LLD frames and project window means to ``dim`` coordinates.

    Output coordinate 0 carries the (scaled) window loudness; the remaining
    coordinates are a fixed seeded projection of scale-invariant descriptors,
    so two clips differing only by amplitude differ only in coordinate 0.
    """
    series = compute_llds(clip, acoustic_config)
    window = toy_config.window_frames
    n_windows = len(series) // window
    if n_windows < 1:
        raise DataError(
            f"clip yields {len(series)} frames, shorter than one window of {window}"
        )
    channels = {
        "loudness": series.loudness,
        "f0": series.f0,
        "voiced": series.voiced.astype(np.float64),
        "hnr": series.hnr,
        "alpha_ratio": series.alpha_ratio,
        "hammarberg": series.hammarberg,
        "slope_0_500": series.slope_0_500,
        "slope_500_1500": series.slope_500_1500,
    }
    used = len(series) - len(series) % window
    means = {
        name: values[:used].reshape(n_windows, window).mean(axis=1)
        for name, values in channels.items()
    }
    invariant = np.stack([means[name] for name in _SCALE_INVARIANT], axis=1)
    rng = derived_rng(toy_config.seed, "toy_audio_projection")
    projection = rng.standard_normal((len(_SCALE_INVARIANT), toy_config.dim - 1))
    projection /= np.sqrt(len(_SCALE_INVARIANT))
    out = np.empty((n_windows, toy_config.dim))
    out[:, 0] = means["loudness"]
    out[:, 1:] = invariant @ projection
    return out


def encode_corpus_text(corpus, config):
    store = EmbeddingStore("text", config.dim, config.describe())
    for rec in corpus:
        store.add(rec.utterance.id, toy_text_encode(rec.utterance.text, config))
    return store


def encode_corpus_audio(corpus, clips, acoustic_config, config):
    """``clips``: mapping from audio_ref key to AudioClip."""
    store = EmbeddingStore("audio", config.dim, config.describe())
    for rec in corpus:
        ref = rec.utterance.audio_ref
        if ref is None:
            raise DataError(f"utterance {rec.utterance.id!r} has no audio_ref")
        if ref not in clips:
            raise DataError(f"audio_ref {ref!r} not present in clip store")
        store.add(
            rec.utterance.id, toy_audio_encode(clips[ref], acoustic_config, config)
        )
    return store


def align(corpus, store):
    """Coverage report: ids missing from the store and ids unknown to the corpus."""
    corpus_ids = set(corpus.ids())
    store_ids = set(store.ids())
    return {
        "missing": sorted(corpus_ids - store_ids),
        "unknown": sorted(store_ids - corpus_ids),
    }
