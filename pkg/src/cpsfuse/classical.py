"""Classical models: TF-IDF vectorization, optional acoustic concatenation,
and a CART random forest with stratified k-fold grid search.

TF-IDF uses smoothed idf ln((1+N)/(1+df)) + 1 over raw term counts with L2
document normalization. Trees split on Gini impurity with per-split random
feature subsets; all randomness derives from explicit seeds, so fits are
reproducible bit for bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .base import BaseEstimator, DataError, check_array, derived_rng

__all__ = [
    "SparseVector",
    "TfidfVectorizer",
    "AudioScaler",
    "concat_features",
    "RfConfig",
    "GridSpec",
    "DEFAULT_GRID",
    "RandomForestClassifier",
    "stratified_kfold",
    "grid_search_cv",
    "load_default_stopwords",
]


def load_default_stopwords():
    """The versioned English stopword list shipped with the package."""
    text = resources.files("cpsfuse").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    )


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if indices.shape != values.shape or indices.ndim != 1:
            raise DataError("indices and values must be equal-length 1-D arrays")
        if indices.size and (
            np.any(np.diff(indices) <= 0) or indices[0] < 0 or indices[-1] >= self.dim
        ):
            raise DataError("indices must be strictly increasing and within [0, dim)")
        if not np.all(np.isfinite(values)):
            raise DataError("sparse vector contains non-finite values")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    def to_dense(self):
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense

    def norm(self):
        return float(np.linalg.norm(self.values))


def _tokenize(text):
    return text.lower().split()


class TfidfVectorizer(BaseEstimator):
    """Term-count TF-IDF with stopword removal and L2 normalization."""

    def __init__(self, stopwords=None):
        self.stopwords = stopwords

    def fit(self, texts):
        stop = self._stopword_set()
        df: dict[str, int] = {}
        n_docs = 0
        for text in texts:
            n_docs += 1
            terms = {t for t in _tokenize(text) if t not in stop}
            for term in terms:
                df[term] = df.get(term, 0) + 1
        if n_docs == 0:
            raise DataError("fit needs at least one document")
        if not df:
            raise DataError("all documents are empty after stopword removal")
        vocab = sorted(df)
        self.vocabulary_ = {term: i for i, term in enumerate(vocab)}
        self.idf_ = np.array(
            [np.log((1.0 + n_docs) / (1.0 + df[t])) + 1.0 for t in vocab]
        )
        return self

    def _stopword_set(self):
        if self.stopwords is None:
            return load_default_stopwords()
        return frozenset(self.stopwords)

    def transform_one(self, text):
        self._check_fitted("vocabulary_")
        counts: dict[int, float] = {}
        for token in _tokenize(text):
            col = self.vocabulary_.get(token)
            if col is not None:
                counts[col] = counts.get(col, 0.0) + 1.0
        if not counts:
            return SparseVector(np.empty(0, np.int64), np.empty(0), len(self.vocabulary_))
        indices = np.array(sorted(counts), dtype=np.int64)
        values = np.array([counts[i] for i in indices]) * self.idf_[indices]
        norm = np.linalg.norm(values)
        if norm > 0:
            values = values / norm
        return SparseVector(indices, values, len(self.vocabulary_))

    def transform(self, texts):
        return [self.transform_one(t) for t in texts]

    def transform_matrix(self, texts):
        self._check_fitted("vocabulary_")
        out = np.zeros((len(texts), len(self.vocabulary_)))
        for row, text in enumerate(texts):
            vec = self.transform_one(text)
            out[row, vec.indices] = vec.values
        return out


class AudioScaler(BaseEstimator):
    """Z-scoring with training-split statistics; zero-variance features map to 0."""

    def __init__(self):
        pass

    def fit(self, X):
        X = check_array(X, name="audio features")
        self.mean_ = X.mean(axis=0)
        self.std_ = X.std(axis=0)
        return self

    def transform(self, X):
        self._check_fitted("mean_")
        X = check_array(X, name="audio features")
        if X.shape[1] != self.mean_.shape[0]:
            raise DataError(
                f"audio feature dimension {X.shape[1]} != fitted {self.mean_.shape[0]}"
            )
        safe = np.where(self.std_ > 0, self.std_, 1.0)
        z = (X - self.mean_) / safe
        return np.where(self.std_ > 0, z, 0.0)

    def transform_one(self, vec):
        return self.transform(np.asarray(vec)[None, :])[0]


def concat_features(text_vec, audio_vec, scaler):
    """Append z-scored acoustic features after the TF-IDF block."""
    audio_vec = np.asarray(audio_vec, dtype=np.float64)
    if audio_vec.ndim != 1:
        raise DataError(f"audio vector must be 1-D, got shape {audio_vec.shape}")
    if audio_vec.shape[0] != scaler.mean_.shape[0]:
        raise DataError(
            f"audio vector length {audio_vec.shape[0]} != scaler dimension "
            f"{scaler.mean_.shape[0]}"
        )
    scaled = scaler.transform_one(audio_vec)
    dim = text_vec.dim + scaled.shape[0]
    extra = np.flatnonzero(scaled != 0.0)
    indices = np.concatenate([text_vec.indices, extra + text_vec.dim])
    values = np.concatenate([text_vec.values, scaled[extra]])
    return SparseVector(indices.astype(np.int64), values, dim)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RfConfig:
    n_trees: int = 100
    max_depth: int | None = 16
    min_samples_leaf: int = 1
    max_features: float | int | str = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise DataError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise DataError("max_depth must be >= 1 or None for unlimited")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter candidates in declaration order; 3-fold by default."""

    candidates: dict[str, tuple]
    folds: int = 3

    def __post_init__(self):
        if not self.candidates or any(len(v) == 0 for v in self.candidates.values()):
            raise DataError("grid must have at least one candidate per parameter")
        if self.folds < 2:
            raise DataError("fold count must be >= 2")
        for name in self.candidates:
            if name not in RfConfig.__dataclass_fields__:
                raise DataError(f"unknown RfConfig parameter {name!r}")

    def points(self, base):
        names = list(self.candidates)
        for combo in itertools.product(*(self.candidates[n] for n in names)):
            yield replace(base, **dict(zip(names, combo)))


DEFAULT_GRID = GridSpec(
    candidates={
        "n_trees": (100, 300),
        "max_depth": (8, 16, None),
        "min_samples_leaf": (1, 3),
        "max_features": ("sqrt", 0.3),
    }
)


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "hist")

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.hist = []

    def add_leaf(self, hist):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.hist.append(hist)
        return len(self.feature) - 1

    def add_split(self, feature, threshold):
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.hist.append(None)
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)


def _resolve_mtry(max_features, n_features):
    if max_features == "sqrt":
        return max(1, int(round(np.sqrt(n_features))))
    if isinstance(max_features, float):
        if not (0.0 < max_features <= 1.0):
            raise DataError(f"fractional max_features must be in (0, 1], got {max_features}")
        return max(1, int(round(max_features * n_features)))
    if isinstance(max_features, int):
        return min(max(1, max_features), n_features)
    raise DataError(f"bad max_features {max_features!r}")


def _gini(counts):
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


def _best_split(X, y_codes, node_idx, features, n_classes, min_leaf):
    """Best (feature, threshold, gain); ties resolve to the smallest feature
    index, then the smallest threshold."""
    y_node = y_codes[node_idx]
    n = len(node_idx)
    parent_counts = np.bincount(y_node, minlength=n_classes).astype(np.float64)
    parent_gini = _gini(parent_counts)
    best = None
    for f in np.sort(features):
        x = X[node_idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = y_node[order]
        cuts = np.flatnonzero(xs[1:] > xs[:-1]) + 1  # split before these positions
        if cuts.size == 0:
            continue
        valid = (cuts >= min_leaf) & (cuts <= n - min_leaf)
        cuts = cuts[valid]
        if cuts.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        left_cum = onehot.cumsum(axis=0)
        left_counts = left_cum[cuts - 1]
        right_counts = parent_counts[None, :] - left_counts
        nl = cuts.astype(np.float64)
        nr = n - nl
        gini_l = 1.0 - (left_counts**2).sum(axis=1) / (nl * nl)
        gini_r = 1.0 - (right_counts**2).sum(axis=1) / (nr * nr)
        weighted = (nl * gini_l + nr * gini_r) / n
        gains = parent_gini - weighted
        k = int(np.argmax(gains))
        gain = float(gains[k])
        if gain <= 1e-12:
            continue
        threshold = 0.5 * (xs[cuts[k] - 1] + xs[cuts[k]])
        if best is None or gain > best[2] + 1e-15:
            best = (int(f), float(threshold), gain)
    return best


def _grow_tree(X, y_codes, sample_idx, config, n_classes, rng):
    tree = _Tree()
    mtry = _resolve_mtry(config.max_features, X.shape[1])
    max_depth = config.max_depth if config.max_depth is not None else np.inf

    def build(node_idx, depth):
        y_node = y_codes[node_idx]
        counts = np.bincount(y_node, minlength=n_classes).astype(np.float64)
        if (
            depth >= max_depth
            or len(node_idx) < 2 * config.min_samples_leaf
            or len(node_idx) < 2
            or np.count_nonzero(counts) == 1
        ):
            return tree.add_leaf(counts)
        features = rng.choice(X.shape[1], size=mtry, replace=False)
        found = _best_split(X, y_codes, node_idx, features, n_classes, config.min_samples_leaf)
        if found is None:
            return tree.add_leaf(counts)
        feature, threshold, _ = found
        node = tree.add_split(feature, threshold)
        go_left = X[node_idx, feature] <= threshold
        left_id = build(node_idx[go_left], depth + 1)
        right_id = build(node_idx[~go_left], depth + 1)
        tree.left[node] = left_id
        tree.right[node] = right_id
        return node

    build(sample_idx, 0)
    tree.finalize()
    return tree


def _tree_leaf_probs(tree, X):
    """Leaf class distribution per row, walking all rows level by level.

    The first node created by _grow_tree is always the root (index 0)."""
    n = X.shape[0]
    node_of = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(tree.feature[node_of] != -1)
    while active.size:
        nodes = node_of[active]
        go_left = X[active, tree.feature[nodes]] <= tree.threshold[nodes]
        node_of[active] = np.where(go_left, tree.left[nodes], tree.right[nodes])
        active = active[tree.feature[node_of[active]] != -1]
    k = next(len(h) for h in tree.hist if h is not None)
    hist_matrix = np.zeros((len(tree.hist), k))
    for i, h in enumerate(tree.hist):
        if h is not None:
            total = h.sum()
            hist_matrix[i] = h / total if total > 0 else 1.0 / k
    return hist_matrix[node_of]


class RandomForestClassifier(BaseEstimator):
    """Bagged CART trees on Gini impurity, deterministic under the seed."""

    def __init__(self, n_trees=100, max_depth=16, min_samples_leaf=1,
                 max_features="sqrt", bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    @classmethod
    def from_config(cls, config):
        return cls(
            n_trees=config.n_trees,
            max_depth=config.max_depth,
            min_samples_leaf=config.min_samples_leaf,
            max_features=config.max_features,
            bootstrap=config.bootstrap,
            seed=config.seed,
        )

    def config(self):
        return RfConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            max_features=self.max_features,
            bootstrap=self.bootstrap,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = check_array(X)
        y = list(y)
        if len(y) != X.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {len(y)} labels")
        if len(y) < 2:
            raise DataError("need at least two training instances")
        cfg = self.config()
        self.classes_ = tuple(sorted(set(y)))
        code_of = {c: i for i, c in enumerate(self.classes_)}
        y_codes = np.array([code_of[label] for label in y], dtype=np.int64)
        self.n_features_ = X.shape[1]
        n = X.shape[0]
        self.trees_ = []
        for i in range(cfg.n_trees):
            rng = derived_rng(cfg.seed, "tree", i)
            if cfg.bootstrap:
                sample_idx = rng.integers(0, n, size=n)
            else:
                sample_idx = np.arange(n)
            self.trees_.append(_grow_tree(X, y_codes, sample_idx, cfg, len(self.classes_), rng))
        return self

    def predict_proba(self, X):
        self._check_fitted("trees_")
        X = check_array(X)
        if X.shape[1] != self.n_features_:
            raise DataError(
                f"feature dimension {X.shape[1]} != fitted dimension {self.n_features_}"
            )
        probs = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.trees_:
            probs += _tree_leaf_probs(tree, X)
        return probs / len(self.trees_)

    def predict(self, X):
        probs = self.predict_proba(X)
        # exact vote ties resolve to the lexicographically smallest class code
        best = probs.max(axis=1, keepdims=True)
        labels = []
        for row, b in zip(probs, best[:, 0]):
            tied = [self.classes_[j] for j in np.flatnonzero(row == b)]
            labels.append(min(tied))
        return labels


def stratified_kfold(y, folds, seed):
    """Per-class round-robin assignment after a seeded shuffle; per class,
    fold sizes differ by at most one."""
    y = list(y)
    assignment = np.empty(len(y), dtype=np.int64)
    by_class: dict[object, list[int]] = {}
    for pos, label in enumerate(y):
        by_class.setdefault(label, []).append(pos)
    for label in sorted(by_class, key=str):
        positions = np.array(by_class[label])
        if len(positions) < folds:
            raise DataError(
                f"class {label!r} has {len(positions)} instances; "
                f"needs >= {folds} for {folds}-fold stratified CV"
            )
        rng = derived_rng(seed, "cv", str(label))
        shuffled = positions[rng.permutation(len(positions))]
        for k, pos in enumerate(shuffled):
            assignment[pos] = k % folds
    return assignment


def grid_search_cv(X, y, grid=None, base_config=None, seed=0):
    """Score each grid point by mean stratified-CV accuracy; ties go to the
    earliest point in declaration order; refit the winner on all data."""
    grid = grid if grid is not None else DEFAULT_GRID
    base = base_config if base_config is not None else RfConfig()
    X = check_array(X)
    y = list(y)
    fold_of = stratified_kfold(y, grid.folds, seed)
    y_arr = np.array(y, dtype=object)
    report = []
    best_idx, best_score, best_cfg = -1, -np.inf, None
    for gi, cfg in enumerate(grid.points(base)):
        fold_acc = []
        for k in range(grid.folds):
            train_mask = fold_of != k
            fold_seed = int(derived_rng(seed, "gridfit", gi, k).integers(2**31))
            model = RandomForestClassifier.from_config(replace(cfg, seed=fold_seed))
            model.fit(X[train_mask], list(y_arr[train_mask]))
            pred = model.predict(X[~train_mask])
            truth = list(y_arr[~train_mask])
            fold_acc.append(sum(p == t for p, t in zip(pred, truth)) / len(truth))
        mean_acc = float(np.mean(fold_acc))
        report.append({"config": cfg, "fold_accuracy": fold_acc, "mean_accuracy": mean_acc})
        if mean_acc > best_score:
            best_idx, best_score, best_cfg = gi, mean_acc, cfg
    final_cfg = replace(best_cfg, seed=seed)
    model = RandomForestClassifier.from_config(final_cfg).fit(X, y)
    return final_cfg, {"report": report, "best_index": best_idx, "best_score": best_score, "model": model}
