"""Experiment pipeline: configuration, model training/evaluation over a
corpus, artifact emission, and model persistence.

The four comparable models are ``rf_tfidf``, ``rf_tfidf_audio``,
``neural_text``, and ``neural_fusion``. A ``compare`` run trains every
selected model on every dimension present in the corpus and emits a marked
comparison table, one classification report and row-normalized heatmap per
model and dimension, checkpoints, and epoch logs. All outputs are
deterministic functions of (config, seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import classical, container, embedio, fusenet, metrics
from .acoustic import AcousticConfig, extract_features, read_wav
from .base import DataError
from .corpus import (
    Dimension,
    LabelScheme,
    SplitSpec,
    explode_multicoded,
    filter_rare_classes,
    load_corpus,
    partition_by_dimension,
    stratified_split,
)

__all__ = [
    "MODEL_NAMES",
    "ExperimentConfig",
    "load_config",
    "prepare_dimension",
    "train_model",
    "evaluate_model",
    "run_compare",
    "save_model",
    "load_model",
]

MODEL_NAMES = ("rf_tfidf", "rf_tfidf_audio", "neural_text", "neural_fusion")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str
    out_dir: str = "out"
    audio_dir: str | None = None
    text_embeddings: str | None = None
    audio_embeddings: str | None = None
    models: tuple[str, ...] = MODEL_NAMES
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    acoustic: AcousticConfig = field(default_factory=AcousticConfig)
    rf: classical.RfConfig = field(default_factory=classical.RfConfig)
    rf_use_grid: bool = False
    epochs: int = 30
    batch_size: int = 16
    lr: float = 2e-5
    eps: float = 1e-8
    weight_decay: float = 0.0
    hidden_text: int = 64
    hidden_audio: int = 64

    def __post_init__(self):
        if not self.models:
            raise DataError("model selection list must be non-empty")
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown:
            raise DataError(f"unknown models {sorted(unknown)}; known: {MODEL_NAMES}")


_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_value(raw):
    raw = raw.strip()
    if raw.lower() in _BOOL:
        return _BOOL[raw.lower()]
    if raw.lower() in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config(path, overrides=None):
    """Parse the ``key = value`` experiment-config format (``#`` comments).

    ``schema_version = 1`` is required. ``overrides`` (a dict) wins over file
    values; use it for command-line flags.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DataError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            values[key.strip()] = _parse_value(raw)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    if values.get("schema_version") != SCHEMA_VERSION:
        raise DataError(
            f"{path}: schema_version must be {SCHEMA_VERSION}, got "
            f"{values.get('schema_version')!r}"
        )
    values.pop("schema_version")
    if "corpus" not in values:
        raise DataError(f"{path}: missing required key 'corpus'")

    def take(key, default):
        return values.pop(key, default)

    models = take("models", ",".join(MODEL_NAMES))
    if isinstance(models, str):
        models = tuple(m.strip() for m in models.split(",") if m.strip())
    seed = int(take("seed", 0))
    split = SplitSpec(
        test_fraction=float(take("split.test_fraction", 0.2)),
        val_fraction=float(take("split.val_fraction", 0.2)),
        min_class_instances=int(take("split.min_class_instances", 10)),
        cv_folds=int(take("split.cv_folds", 3)),
        seed=seed,
    )
    acoustic_cfg = AcousticConfig(
        target_rate=int(take("acoustic.target_rate", 16000)),
        frame_step_ms=float(take("acoustic.frame_step_ms", 1.0)),
        frame_length_ms=float(take("acoustic.frame_length_ms", 25.0)),
    )
    max_depth = take("rf.max_depth", 16)
    rf = classical.RfConfig(
        n_trees=int(take("rf.n_trees", 100)),
        max_depth=None if max_depth is None else int(max_depth),
        min_samples_leaf=int(take("rf.min_samples_leaf", 1)),
        max_features=take("rf.max_features", "sqrt"),
        bootstrap=bool(take("rf.bootstrap", True)),
        seed=seed,
    )
    config = ExperimentConfig(
        corpus=str(take("corpus", None)),
        out_dir=str(take("out_dir", "out")),
        audio_dir=take("audio_dir", None),
        text_embeddings=take("text_embeddings", None),
        audio_embeddings=take("audio_embeddings", None),
        models=tuple(models),
        seed=seed,
        split=split,
        acoustic=acoustic_cfg,
        rf=rf,
        rf_use_grid=bool(take("rf.use_grid", False)),
        epochs=int(take("train.epochs", 30)),
        batch_size=int(take("train.batch_size", 16)),
        lr=float(take("train.lr", 2e-5)),
        eps=float(take("train.eps", 1e-8)),
        weight_decay=float(take("train.weight_decay", 0.0)),
        hidden_text=int(take("train.hidden_text", 64)),
        hidden_audio=int(take("train.hidden_audio", 64)),
    )
    if values:
        raise DataError(f"{path}: unknown config keys {sorted(values)}")
    return config


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------

@dataclass
class DimensionData:
    dimension: Dimension
    classes: tuple[str, ...]
    train: list  # CodedInstance
    test: list


def prepare_dimension(instances, split_spec):
    """Filter rare classes and produce the stratified train/test instance lists."""
    filtered = filter_rare_classes(instances, split_spec.min_class_instances)
    split = stratified_split(filtered, split_spec)
    by_id = {inst.instance_id: inst for inst in filtered}
    train = [by_id[i] for i in split.train]
    test = [by_id[i] for i in split.test]
    scheme = LabelScheme.from_instances(filtered)
    dimension = filtered[0].dimension
    return DimensionData(
        dimension=dimension,
        classes=scheme.codes_for(dimension),
        train=train,
        test=test,
    )


def split_dimensions(corpus):
    instances = explode_multicoded(corpus)
    social, affective = partition_by_dimension(instances)
    out = {}
    if social:
        out[Dimension.SOCIAL_COGNITIVE] = social
    if affective:
        out[Dimension.AFFECTIVE] = affective
    if not out:
        raise DataError("corpus has no coded instances")
    return out


def _worker_count():
    raw = os.environ.get("CPSFUSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DataError(f"CPSFUSE_THREADS must be an integer, got {raw!r}") from None


def load_audio_features(corpus, audio_dir, acoustic_cfg, needed_ids=None):
    """11-dim functional vector per utterance id, computed from wav files.

    Per-clip extraction is pure, so clips may be processed by up to
    CPSFUSE_THREADS workers; results merge in corpus order either way."""
    jobs = []
    for rec in corpus:
        utt = rec.utterance
        if needed_ids is not None and utt.id not in needed_ids:
            continue
        if utt.audio_ref is None:
            raise DataError(f"utterance {utt.id!r} has no audio_ref")
        path = os.path.join(audio_dir, utt.audio_ref + ".wav")
        if not os.path.exists(path):
            raise DataError(f"missing audio file {path}")
        jobs.append((utt.id, path))
    workers = _worker_count()
    if workers == 1:
        return {utt_id: extract_features(read_wav(path), acoustic_cfg) for utt_id, path in jobs}
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        vectors = pool.map(lambda job: extract_features(read_wav(job[1]), acoustic_cfg), jobs)
        return {utt_id: vec for (utt_id, _), vec in zip(jobs, vectors)}


# ---------------------------------------------------------------------------
# Model training / evaluation
# ---------------------------------------------------------------------------

@dataclass
class FittedModel:
    name: str
    dimension: Dimension
    kind: str
    classes: tuple[str, ...]
    vectorizer: classical.TfidfVectorizer | None = None
    scaler: classical.AudioScaler | None = None
    forest: classical.RandomForestClassifier | None = None
    neural: object | None = None
    records: list | None = None
    selected_epoch: int | None = None

    def predict(self, resources, instances):
        if self.kind in ("rf_tfidf", "rf_tfidf_audio"):
            X = _classical_matrix(self, resources, instances)
            return self.forest.predict(X)
        X = _neural_inputs(self.kind, resources, instances)
        return self.neural.predict(X)


def _classical_matrix(fitted, resources, instances):
    texts = [inst.utterance.text for inst in instances]
    X = fitted.vectorizer.transform_matrix(texts)
    if fitted.kind == "rf_tfidf_audio":
        audio = np.stack([resources["audio_features"][i.utterance.id] for i in instances])
        X = np.hstack([X, fitted.scaler.transform(audio)])
    return X


def _neural_inputs(kind, resources, instances):
    text_store = resources.get("text_store")
    audio_store = resources.get("audio_store")
    if kind == "neural_text":
        return [text_store[inst.utterance.id] for inst in instances]
    return [
        (text_store[inst.utterance.id], audio_store[inst.utterance.id])
        for inst in instances
    ]


def train_model(name, data, config, resources):
    """Train one model on one dimension's training split."""
    y_train = [inst.class_label for inst in data.train]
    if name == "rf_tfidf":
        vec = classical.TfidfVectorizer().fit([i.utterance.text for i in data.train])
        X = vec.transform_matrix([i.utterance.text for i in data.train])
        forest = _fit_forest(X, y_train, config)
        return FittedModel(name, data.dimension, name, data.classes, vectorizer=vec, forest=forest)
    if name == "rf_tfidf_audio":
        vec = classical.TfidfVectorizer().fit([i.utterance.text for i in data.train])
        X_text = vec.transform_matrix([i.utterance.text for i in data.train])
        audio = np.stack(
            [resources["audio_features"][i.utterance.id] for i in data.train]
        )
        scaler = classical.AudioScaler().fit(audio)
        X = np.hstack([X_text, scaler.transform(audio)])
        forest = _fit_forest(X, y_train, config)
        return FittedModel(
            name, data.dimension, name, data.classes,
            vectorizer=vec, scaler=scaler, forest=forest,
        )
    if name == "neural_text":
        X = _neural_inputs(name, resources, data.train)
        clf = fusenet.NeuralTextClassifier(
            hidden=config.hidden_text, epochs=config.epochs,
            batch_size=config.batch_size, lr=config.lr, eps=config.eps,
            weight_decay=config.weight_decay, val_fraction=config.split.val_fraction,
            seed=config.seed, classes=data.classes,
        ).fit(X, y_train)
        return FittedModel(
            name, data.dimension, name, data.classes, neural=clf,
            records=clf.records_, selected_epoch=clf.selected_epoch_,
        )
    if name == "neural_fusion":
        X = _neural_inputs(name, resources, data.train)
        clf = fusenet.NeuralFusionClassifier(
            hidden_text=config.hidden_text, hidden_audio=config.hidden_audio,
            epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
            eps=config.eps, weight_decay=config.weight_decay,
            val_fraction=config.split.val_fraction, seed=config.seed,
            classes=data.classes,
        ).fit(X, y_train, transfer_from=resources.get("text_donor"))
        return FittedModel(
            name, data.dimension, name, data.classes, neural=clf,
            records=clf.records_, selected_epoch=clf.selected_epoch_,
        )
    raise DataError(f"unknown model {name!r}")


def _fit_forest(X, y, config):
    if config.rf_use_grid:
        _cfg, info = classical.grid_search_cv(
            X, y, classical.DEFAULT_GRID, base_config=config.rf, seed=config.seed
        )
        return info["model"]
    return classical.RandomForestClassifier.from_config(config.rf).fit(X, y)


def evaluate_model(fitted, data, resources):
    """Test-split evaluation: (summary, report, confusion matrix, predictions)."""
    y_true = [inst.class_label for inst in data.test]
    y_pred = fitted.predict(resources, data.test)
    summary, report = metrics.weighted_metrics(y_true, y_pred, data.classes)
    cm = metrics.confusion(y_true, y_pred, data.classes)
    return summary, report, cm, y_pred


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_model(fitted, path):
    entries = {
        "meta": json.dumps(
            {
                "kind": fitted.kind,
                "model": fitted.name,
                "dimension": fitted.dimension.value,
                "classes": list(fitted.classes),
                "selected_epoch": fitted.selected_epoch,
            },
            sort_keys=True,
        )
    }
    if fitted.kind in ("rf_tfidf", "rf_tfidf_audio"):
        vec = fitted.vectorizer
        vocab = sorted(vec.vocabulary_, key=vec.vocabulary_.get)
        entries["vocab"] = "\n".join(vocab)
        entries["idf"] = vec.idf_
        if fitted.scaler is not None:
            entries["scaler.mean"] = fitted.scaler.mean_
            entries["scaler.std"] = fitted.scaler.std_
        forest = fitted.forest
        entries["forest.params"] = json.dumps(forest.get_params(), sort_keys=True)
        entries["forest.n_features"] = np.array([forest.n_features_])
        for i, tree in enumerate(forest.trees_):
            hist = np.stack(
                [h if h is not None else np.zeros(len(fitted.classes)) for h in tree.hist]
            )
            entries[f"tree/{i}/feature"] = tree.feature
            entries[f"tree/{i}/threshold"] = tree.threshold
            entries[f"tree/{i}/left"] = tree.left
            entries[f"tree/{i}/right"] = tree.right
            entries[f"tree/{i}/hist"] = hist
    else:
        core = fitted.neural.model_
        arch = {
            "hidden": getattr(fitted.neural, "hidden", None),
            "hidden_text": getattr(fitted.neural, "hidden_text", None),
            "hidden_audio": getattr(fitted.neural, "hidden_audio", None),
        }
        entries["arch"] = json.dumps(arch, sort_keys=True)
        for name, tensor_ in core.parameters().items():
            entries[f"param/{name}"] = tensor_.data
    container.write_container(entries, path)


def load_model(path):
    entries = container.read_container(path)
    meta = json.loads(entries["meta"])
    classes = tuple(meta["classes"])
    dimension = Dimension.parse(meta["dimension"])
    fitted = FittedModel(
        name=meta["model"], dimension=dimension, kind=meta["kind"], classes=classes,
        selected_epoch=meta.get("selected_epoch"),
    )
    if meta["kind"] in ("rf_tfidf", "rf_tfidf_audio"):
        vec = classical.TfidfVectorizer()
        vocab = entries["vocab"].split("\n") if entries["vocab"] else []
        vec.vocabulary_ = {t: i for i, t in enumerate(vocab)}
        vec.idf_ = entries["idf"]
        fitted.vectorizer = vec
        if "scaler.mean" in entries:
            scaler = classical.AudioScaler()
            scaler.mean_ = entries["scaler.mean"]
            scaler.std_ = entries["scaler.std"]
            fitted.scaler = scaler
        params = json.loads(entries["forest.params"])
        forest = classical.RandomForestClassifier(**params)
        forest.classes_ = classes
        forest.n_features_ = int(entries["forest.n_features"][0])
        forest.trees_ = []
        i = 0
        while f"tree/{i}/feature" in entries:
            tree = classical._Tree()
            tree.feature = entries[f"tree/{i}/feature"]
            tree.threshold = entries[f"tree/{i}/threshold"]
            tree.left = entries[f"tree/{i}/left"]
            tree.right = entries[f"tree/{i}/right"]
            hist_matrix = entries[f"tree/{i}/hist"]
            tree.hist = [
                hist_matrix[j] if tree.feature[j] == -1 else None
                for j in range(hist_matrix.shape[0])
            ]
            forest.trees_.append(tree)
            i += 1
        fitted.forest = forest
    else:
        arch = json.loads(entries["arch"])
        params = {
            name[len("param/"):]: value
            for name, value in entries.items()
            if name.startswith("param/")
        }
        fitted.neural = _rebuild_neural(meta["kind"], arch, classes, params)
    return fitted


def _rebuild_neural(kind, arch, classes, params):
    from .base import derived_rng

    if kind == "neural_text":
        input_dim = params["fwd.i.Wx"].shape[0]
        clf = fusenet.NeuralTextClassifier(hidden=arch["hidden"], classes=classes)
        clf.model_ = fusenet.TextClassifierCore.create(
            input_dim, arch["hidden"], classes, derived_rng(0, "rebuild")
        )
    else:
        text_dim = params["text.fwd.i.Wx"].shape[0]
        audio_dim = params["audio.fwd.i.Wx"].shape[0]
        clf = fusenet.NeuralFusionClassifier(
            hidden_text=arch["hidden_text"], hidden_audio=arch["hidden_audio"],
            classes=classes,
        )
        clf.model_ = fusenet.FusionClassifierCore.create(
            text_dim, audio_dim, arch["hidden_text"], arch["hidden_audio"],
            classes, derived_rng(0, "rebuild"),
        )
    fusenet.load_checkpoint(clf.model_, params)
    clf.classes_ = classes
    return clf


# ---------------------------------------------------------------------------
# Compare pipeline
# ---------------------------------------------------------------------------

def _model_requirements(models):
    needs_audio_files = "rf_tfidf_audio" in models
    needs_text_emb = bool({"neural_text", "neural_fusion"} & set(models))
    needs_audio_emb = "neural_fusion" in models
    return needs_audio_files, needs_text_emb, needs_audio_emb


def gather_resources(config, corpus, needed_ids):
    """Load and validate every input the selected models require; raises
    DataError before any output is written."""
    needs_audio_files, needs_text_emb, needs_audio_emb = _model_requirements(config.models)
    resources = {}
    if needs_audio_files:
        if not config.audio_dir:
            raise DataError("rf_tfidf_audio requires audio_dir")
        resources["audio_features"] = load_audio_features(
            corpus, config.audio_dir, config.acoustic, needed_ids
        )
    if needs_text_emb:
        if not config.text_embeddings:
            raise DataError("neural models require text_embeddings")
        store = embedio.read_embeddings(config.text_embeddings)
        _require_coverage(corpus, store, needed_ids, "text embeddings")
        resources["text_store"] = store
    if needs_audio_emb:
        if not config.audio_embeddings:
            raise DataError("neural_fusion requires audio_embeddings")
        store = embedio.read_embeddings(config.audio_embeddings)
        _require_coverage(corpus, store, needed_ids, "audio embeddings")
        resources["audio_store"] = store
    return resources


def _require_coverage(corpus, store, needed_ids, what):
    report = embedio.align(corpus, store)
    missing = [i for i in report["missing"] if needed_ids is None or i in needed_ids]
    if missing:
        preview = ", ".join(missing[:5])
        raise DataError(
            f"{what} missing {len(missing)} utterance ids (e.g. {preview})"
        )


def _ordered_models(models):
    return [m for m in MODEL_NAMES if m in models]


def run_compare(config):
    """Full comparison: every selected model on every dimension in the corpus.

    Returns {dimension: {model: summary}} and writes reports/, heatmaps/,
    checkpoints/, and logs/ under config.out_dir.
    """
    corpus = load_corpus(config.corpus)
    by_dimension = split_dimensions(corpus)
    prepared = {
        dim: prepare_dimension(insts, config.split)
        for dim, insts in by_dimension.items()
    }
    needed_ids = {
        inst.utterance.id
        for data in prepared.values()
        for inst in data.train + data.test
    }
    resources = gather_resources(config, corpus, needed_ids)

    out = config.out_dir
    for sub in ("reports", "heatmaps", "checkpoints", "logs"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)

    summaries = {}
    for dim in sorted(prepared, key=lambda d: d.value):
        data = prepared[dim]
        resources.pop("text_donor", None)
        per_model = {}
        for name in _ordered_models(config.models):
            fitted = train_model(name, data, config, resources)
            if name == "neural_text":
                resources["text_donor"] = fitted.neural
            summary, report, cm, _pred = evaluate_model(fitted, data, resources)
            per_model[name] = summary
            tag = f"{name}_{dim.value}"
            with open(os.path.join(out, "reports", f"{tag}.csv"), "w", encoding="utf-8") as fh:
                fh.write(metrics.report_to_csv(report))
            svg = metrics.heatmap_svg(
                metrics.row_normalize(cm), data.classes, tag
            )
            with open(os.path.join(out, "heatmaps", f"{tag}.svg"), "wb") as fh:
                fh.write(svg)
            save_model(fitted, os.path.join(out, "checkpoints", f"{tag}.cps1"))
            if fitted.records is not None:
                _write_epoch_log(
                    fitted.records, os.path.join(out, "logs", f"{tag}_epochs.csv")
                )
        summaries[dim.value] = per_model

    table_input = {
        name: {dim: summaries[dim][name] for dim in sorted(summaries)}
        for name in _ordered_models(config.models)
    }
    if len(config.models) >= 2:
        table = metrics.compare_models(table_input)
        with open(os.path.join(out, "reports", "compare.txt"), "w", encoding="utf-8") as fh:
            fh.write(metrics.render_compare_text(table))
        with open(os.path.join(out, "reports", "compare.csv"), "w", encoding="utf-8") as fh:
            fh.write(metrics.render_compare_csv(table))
    return summaries


def _write_epoch_log(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,val_weighted_f1\n")
        for rec in records:
            fh.write(
                f"{rec.epoch},{rec.train_loss!r},{rec.val_loss!r},{rec.val_weighted_f1!r}\n"
            )
