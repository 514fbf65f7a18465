"""Neural utterance classifiers over precomputed embedding sequences.

Two architectures share one trunk design: a text-only classifier (BiLSTM over
token embeddings, self-attention pooling, linear head) and a late-fusion
classifier with parallel text and audio branches whose pooled vectors are
concatenated before the head. Training is minibatch cross-entropy descent
with AdamW, an 80/20 stratified fit/validation split, per-epoch checkpoints,
and F1-then-loss epoch selection. The fusion model's text branch can be
transfer-initialized from a trained text model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradnet as gn
from .base import BaseEstimator, DataError, check_seed, derived_rng
from .metrics import weighted_metrics

__all__ = [
    "BiLstmParams",
    "AttnPoolParams",
    "TrainConfig",
    "EpochRecord",
    "TextClassifierCore",
    "FusionClassifierCore",
    "NeuralTextClassifier",
    "NeuralFusionClassifier",
    "bilstm_forward",
    "attention_pool",
    "fuse",
    "train",
    "select_epoch",
    "transfer_init",
    "predict_neural",
]

_GATES = ("i", "f", "g", "o")


class BiLstmParams:
    """Gate weights for both directions; forget-gate biases start at 1."""

    def __init__(self, input_dim, hidden, tensors):
        self.input_dim = input_dim
        self.hidden = hidden
        self.tensors = tensors  # name -> Tensor, insertion-ordered

    @classmethod
    def create(cls, input_dim, hidden, rng):
        tensors = {}
        for direction in ("fwd", "bwd"):
            for gate in _GATES:
                tensors[f"{direction}.{gate}.Wx"] = gn.tensor(
                    gn.init_uniform((input_dim, hidden), input_dim, rng), requires_grad=True
                )
                tensors[f"{direction}.{gate}.Wh"] = gn.tensor(
                    gn.init_uniform((hidden, hidden), hidden, rng), requires_grad=True
                )
                bias = np.ones(hidden) if gate == "f" else np.zeros(hidden)
                tensors[f"{direction}.{gate}.b"] = gn.tensor(bias, requires_grad=True)
        return cls(input_dim, hidden, tensors)

    def gate(self, direction, gate):
        t = self.tensors
        return (
            t[f"{direction}.{gate}.Wx"],
            t[f"{direction}.{gate}.Wh"],
            t[f"{direction}.{gate}.b"],
        )


class AttnPoolParams:
    """Score projection mapping a 2h state to a scalar."""

    def __init__(self, weight):
        self.weight = weight  # Tensor (2h, 1)

    @classmethod
    def create(cls, hidden2, rng):
        return cls(gn.tensor(gn.init_uniform((hidden2, 1), hidden2, rng), requires_grad=True))


def _lstm_direction(steps, params, direction):
    """Run one direction over a list of (B, d) step tensors; returns per-step
    hidden states in input order."""
    batch = steps[0].data.shape[0]
    hidden = params.hidden
    h = gn.tensor(np.zeros((batch, hidden)))
    c = gn.tensor(np.zeros((batch, hidden)))
    ordered = steps if direction == "fwd" else list(reversed(steps))
    states = []
    for x_t in ordered:
        wx_i, wh_i, b_i = params.gate(direction, "i")
        wx_f, wh_f, b_f = params.gate(direction, "f")
        wx_g, wh_g, b_g = params.gate(direction, "g")
        wx_o, wh_o, b_o = params.gate(direction, "o")
        i_t = gn.sigmoid(gn.add(gn.add(gn.matmul(x_t, wx_i), gn.matmul(h, wh_i)), b_i))
        f_t = gn.sigmoid(gn.add(gn.add(gn.matmul(x_t, wx_f), gn.matmul(h, wh_f)), b_f))
        g_t = gn.tanh(gn.add(gn.add(gn.matmul(x_t, wx_g), gn.matmul(h, wh_g)), b_g))
        o_t = gn.sigmoid(gn.add(gn.add(gn.matmul(x_t, wx_o), gn.matmul(h, wh_o)), b_o))
        c = gn.add(gn.mul(f_t, c), gn.mul(i_t, g_t))
        h = gn.mul(o_t, gn.tanh(c))
        states.append(h)
    if direction == "bwd":
        states.reverse()
    return states


def _bilstm_steps(steps, params):
    """Per-step [forward || backward] states for a list of (B, d) tensors."""
    fwd = _lstm_direction(steps, params, "fwd")
    bwd = _lstm_direction(steps, params, "bwd")
    return [gn.concat([f, b], axis=1) for f, b in zip(fwd, bwd)]


def bilstm_forward(seq, params):
    """Single sequence (T, d) -> (T, 2h) Tensor of concatenated states."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != params.input_dim:
        raise DataError(
            f"sequence shape {seq.shape} does not match input dim {params.input_dim}"
        )
    steps = [gn.tensor(seq[t : t + 1]) for t in range(seq.shape[0])]
    rows = _bilstm_steps(steps, params)
    return gn.concat(rows, axis=0)


def _attention_pool_steps(h_steps, attn):
    """Pool per-step (B, 2h) states into one (B, 2h) vector per instance."""
    scores = gn.concat([gn.matmul(h_t, attn.weight) for h_t in h_steps], axis=1)
    alpha = gn.softmax(scores, axis=1)
    pooled = None
    for t, h_t in enumerate(h_steps):
        term = gn.mul(gn.narrow(alpha, 1, t, 1), h_t)
        pooled = term if pooled is None else gn.add(pooled, term)
    return pooled, alpha


def attention_pool(states, params):
    """(T, 2h) states -> (pooled (1, 2h) Tensor, weights length T)."""
    if isinstance(states, gn.Tensor):
        rows = [gn.narrow(states, 0, t, 1) for t in range(states.data.shape[0])]
    else:
        states = np.asarray(states, dtype=np.float64)
        rows = [gn.tensor(states[t : t + 1]) for t in range(states.shape[0])]
    pooled, alpha = _attention_pool_steps(rows, params)
    return pooled, alpha.data.reshape(-1).copy()


def fuse(text_vec, audio_vec):
    """Concatenate pooled branch vectors, text block first."""
    if isinstance(text_vec, gn.Tensor) or isinstance(audio_vec, gn.Tensor):
        a = text_vec if isinstance(text_vec, gn.Tensor) else gn.tensor(text_vec)
        b = audio_vec if isinstance(audio_vec, gn.Tensor) else gn.tensor(audio_vec)
        return gn.concat([a, b], axis=a.data.ndim - 1)
    a = np.asarray(text_vec, dtype=np.float64)
    b = np.asarray(audio_vec, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("fuse inputs must be finite")
    return np.concatenate([a, b], axis=a.ndim - 1)


class TextClassifierCore:
    """BiLSTM + attention pooling + linear head over one embedding sequence."""

    def __init__(self, bilstm, attn, head_w, head_b, classes):
        self.bilstm = bilstm
        self.attn = attn
        self.head_w = head_w
        self.head_b = head_b
        self.classes = tuple(classes)

    @classmethod
    def create(cls, input_dim, hidden, classes, rng):
        bilstm = BiLstmParams.create(input_dim, hidden, rng)
        attn = AttnPoolParams.create(2 * hidden, rng)
        head_w = gn.tensor(
            gn.init_uniform((2 * hidden, len(classes)), 2 * hidden, rng), requires_grad=True
        )
        head_b = gn.tensor(np.zeros(len(classes)), requires_grad=True)
        return cls(bilstm, attn, head_w, head_b, classes)

    def parameters(self):
        params = dict(self.bilstm.tensors)
        params["attn.w"] = self.attn.weight
        params["head.W"] = self.head_w
        params["head.b"] = self.head_b
        return params

    def group_key(self, x):
        return np.asarray(x).shape[0]

    def stack(self, xs):
        return np.stack([np.asarray(x, dtype=np.float64) for x in xs])

    def forward_batch(self, batch):
        """batch: (B, T, d) array -> (B, K) logits Tensor."""
        steps = [gn.tensor(batch[:, t, :]) for t in range(batch.shape[1])]
        h_steps = _bilstm_steps(steps, self.bilstm)
        pooled, _ = _attention_pool_steps(h_steps, self.attn)
        return gn.add(gn.matmul(pooled, self.head_w), self.head_b)


class FusionClassifierCore:
    """Dual-branch late fusion: text and audio BiLSTM+attention, concatenated."""

    def __init__(self, text_bilstm, text_attn, audio_bilstm, audio_attn,
                 head_w, head_b, classes):
        self.text_bilstm = text_bilstm
        self.text_attn = text_attn
        self.audio_bilstm = audio_bilstm
        self.audio_attn = audio_attn
        self.head_w = head_w
        self.head_b = head_b
        self.classes = tuple(classes)

    @classmethod
    def create(cls, text_dim, audio_dim, text_hidden, audio_hidden, classes, rng):
        text_bilstm = BiLstmParams.create(text_dim, text_hidden, rng)
        text_attn = AttnPoolParams.create(2 * text_hidden, rng)
        audio_bilstm = BiLstmParams.create(audio_dim, audio_hidden, rng)
        audio_attn = AttnPoolParams.create(2 * audio_hidden, rng)
        head_in = 2 * text_hidden + 2 * audio_hidden
        head_w = gn.tensor(
            gn.init_uniform((head_in, len(classes)), head_in, rng), requires_grad=True
        )
        head_b = gn.tensor(np.zeros(len(classes)), requires_grad=True)
        return cls(text_bilstm, text_attn, audio_bilstm, audio_attn, head_w, head_b, classes)

    def parameters(self):
        params = {}
        for name, t in self.text_bilstm.tensors.items():
            params[f"text.{name}"] = t
        params["text.attn.w"] = self.text_attn.weight
        for name, t in self.audio_bilstm.tensors.items():
            params[f"audio.{name}"] = t
        params["audio.attn.w"] = self.audio_attn.weight
        params["head.W"] = self.head_w
        params["head.b"] = self.head_b
        return params

    def group_key(self, x):
        text_seq, audio_seq = x
        return (np.asarray(text_seq).shape[0], np.asarray(audio_seq).shape[0])

    def stack(self, xs):
        text = np.stack([np.asarray(t, dtype=np.float64) for t, _ in xs])
        audio = np.stack([np.asarray(a, dtype=np.float64) for _, a in xs])
        return text, audio

    def forward_batch(self, batch):
        text, audio = batch
        text_steps = [gn.tensor(text[:, t, :]) for t in range(text.shape[1])]
        audio_steps = [gn.tensor(audio[:, t, :]) for t in range(audio.shape[1])]
        text_pooled, _ = _attention_pool_steps(
            _bilstm_steps(text_steps, self.text_bilstm), self.text_attn
        )
        audio_pooled, _ = _attention_pool_steps(
            _bilstm_steps(audio_steps, self.audio_bilstm), self.audio_attn
        )
        fused = fuse(text_pooled, audio_pooled)
        return gn.add(gn.matmul(fused, self.head_w), self.head_b)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 2e-5
    eps: float = 1e-8
    weight_decay: float = 0.0
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if not (0.0 < self.val_fraction < 1.0):
            raise DataError("val_fraction must lie strictly in (0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_weighted_f1: float


def _stratified_indices(y, fraction, seed, scope):
    """Held-out index set: per class round-half-even(n * fraction) in [0, n-1]."""
    by_class = {}
    for pos, label in enumerate(y):
        by_class.setdefault(label, []).append(pos)
    held = set()
    for label in sorted(by_class, key=str):
        positions = by_class[label]
        n = len(positions)
        n_held = min(max(round(n * fraction), 1), n - 1) if n > 1 else 0
        rng = derived_rng(seed, scope, str(label))
        chosen = rng.permutation(n)[:n_held]
        held.update(positions[i] for i in chosen)
    return held


def _grouped_batches(indices, X, model):
    """Split batch member indices into equal-shape groups, canonically ordered."""
    groups = {}
    for idx in sorted(indices):
        groups.setdefault(model.group_key(X[idx]), []).append(idx)
    return [groups[k] for k in sorted(groups)]


def _batch_loss(model, X, y_codes, member_indices):
    """Cross-entropy averaged over the batch, built from equal-shape groups."""
    total = None
    n = len(member_indices)
    for group in _grouped_batches(member_indices, X, model):
        batch = model.stack([X[i] for i in group])
        logits = model.forward_batch(batch)
        loss = gn.cross_entropy(logits, [y_codes[i] for i in group])
        weighted = gn.mul(loss, gn.tensor(np.asarray(len(group) / n)))
        total = weighted if total is None else gn.add(total, weighted)
    return total


def _forward_labels_probs(model, X, indices):
    """Inference pass: per-instance class probabilities, grouped by shape."""
    probs = np.empty((len(indices), len(model.classes)))
    pos_of = {idx: row for row, idx in enumerate(indices)}
    with gn.no_grad():
        for group in _grouped_batches(indices, X, model):
            batch = model.stack([X[i] for i in group])
            logits = model.forward_batch(batch).data
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            p = e / e.sum(axis=1, keepdims=True)
            for row_in_group, idx in enumerate(group):
                probs[pos_of[idx]] = p[row_in_group]
    return probs


def _argmax_label(classes, prob_row):
    best = prob_row.max()
    return min(classes[j] for j in np.flatnonzero(prob_row == best))


def train(model, X, y, config):
    """Fit ``model`` in place; returns (checkpoints, records).

    ``checkpoints[e]`` is a name->array snapshot taken after epoch e+1;
    records carry train loss, validation loss, and validation weighted F1.
    """
    check_seed(config.seed)
    classes = model.classes
    code_of = {c: i for i, c in enumerate(classes)}
    unknown = set(y) - set(classes)
    if unknown:
        raise DataError(f"labels {sorted(unknown)} not in model classes {classes}")
    if len(set(y)) < 2:
        raise DataError("training needs at least two distinct classes")
    y_codes = [code_of[label] for label in y]

    val_idx = _stratified_indices(y, config.val_fraction, config.seed, "val")
    fit_idx = [i for i in range(len(y)) if i not in val_idx]
    val_idx = sorted(val_idx)
    missing = set(classes) & set(y) - {y[i] for i in fit_idx}
    if missing:
        raise DataError(f"classes {sorted(missing)} absent from the fit split")

    params = model.parameters()
    param_list = list(params.values())
    state = gn.AdamWState(
        lr=config.lr, eps=config.eps, weight_decay=config.weight_decay
    )
    checkpoints = []
    records = []
    y_val = [y[i] for i in val_idx]
    for epoch in range(1, config.epochs + 1):
        rng = derived_rng(config.seed, "epoch", epoch)
        order = [fit_idx[i] for i in rng.permutation(len(fit_idx))]
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            members = order[start : start + config.batch_size]
            gn.zero_grads(param_list)
            loss = _batch_loss(model, X, y_codes, members)
            gn.backward(loss)
            gn.adamw_step(state, param_list)
            epoch_loss += float(loss.data) * len(members)
        train_loss = epoch_loss / len(order)

        val_probs = _forward_labels_probs(model, X, val_idx)
        val_pred = [_argmax_label(classes, row) for row in val_probs]
        eps = 1e-300  # probabilities can underflow to exactly 0
        val_loss = float(
            -np.mean(
                [
                    np.log(max(val_probs[row, code_of[y[i]]], eps))
                    for row, i in enumerate(val_idx)
                ]
            )
        )
        summary, _ = weighted_metrics(y_val, val_pred, classes)
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                val_weighted_f1=summary.f1,
            )
        )
        checkpoints.append({name: t.data.copy() for name, t in params.items()})
    return checkpoints, records


def select_epoch(records):
    """Highest validation weighted F1; ties by lower validation loss, then
    earliest epoch. Returns the 1-based epoch index."""
    if not records:
        raise DataError("select_epoch needs at least one record")
    best = records[0]
    for rec in records[1:]:
        if rec.val_weighted_f1 > best.val_weighted_f1 or (
            rec.val_weighted_f1 == best.val_weighted_f1 and rec.val_loss < best.val_loss
        ):
            best = rec
    return best.epoch


def load_checkpoint(model, checkpoint):
    params = model.parameters()
    if set(params) != set(checkpoint):
        raise DataError("checkpoint parameter names do not match the model")
    for name, tensor_ in params.items():
        if tensor_.data.shape != checkpoint[name].shape:
            raise DataError(
                f"checkpoint shape {checkpoint[name].shape} != model shape "
                f"{tensor_.data.shape} for {name!r}"
            )
        tensor_.data = checkpoint[name].copy()


def transfer_init(fusion, text_model):
    """Copy the trained text branch (BiLSTM + attention) into the fusion
    model; the audio branch and head keep their fresh initialization."""
    if fusion.text_bilstm.input_dim != text_model.bilstm.input_dim or (
        fusion.text_bilstm.hidden != text_model.bilstm.hidden
    ):
        raise DataError(
            "text-branch dimensions do not match: fusion "
            f"({fusion.text_bilstm.input_dim}, {fusion.text_bilstm.hidden}) vs donor "
            f"({text_model.bilstm.input_dim}, {text_model.bilstm.hidden})"
        )
    for name, src in text_model.bilstm.tensors.items():
        fusion.text_bilstm.tensors[name].data = src.data.copy()
    fusion.text_attn.weight.data = text_model.attn.weight.data.copy()
    return fusion


def predict_neural(model, x):
    """Single instance -> (class label, probability vector over model.classes)."""
    probs = _forward_labels_probs(model, [x], [0])[0]
    return _argmax_label(model.classes, probs), probs


# ---------------------------------------------------------------------------
# Estimator wrappers
# ---------------------------------------------------------------------------

class NeuralTextClassifier(BaseEstimator):
    """Sequence classifier over per-token embedding matrices."""

    def __init__(self, hidden=64, epochs=30, batch_size=16, lr=2e-5, eps=1e-8,
                 weight_decay=0.0, val_fraction=0.2, seed=0, classes=None):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.eps = eps
        self.weight_decay = weight_decay
        self.val_fraction = val_fraction
        self.seed = seed
        self.classes = classes

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            eps=self.eps,
            weight_decay=self.weight_decay,
            val_fraction=self.val_fraction,
            seed=self.seed,
        )

    def fit(self, X, y):
        classes = tuple(self.classes) if self.classes else tuple(sorted(set(y)))
        input_dim = np.asarray(X[0]).shape[1]
        rng = derived_rng(self.seed, "init_text")
        self.model_ = TextClassifierCore.create(input_dim, self.hidden, classes, rng)
        self.checkpoints_, self.records_ = train(self.model_, X, y, self._train_config())
        self.selected_epoch_ = select_epoch(self.records_)
        load_checkpoint(self.model_, self.checkpoints_[self.selected_epoch_ - 1])
        self.classes_ = classes
        return self

    def predict_proba(self, X):
        self._check_fitted("model_")
        return _forward_labels_probs(self.model_, X, list(range(len(X))))

    def predict(self, X):
        probs = self.predict_proba(X)
        return [_argmax_label(self.classes_, row) for row in probs]


class NeuralFusionClassifier(BaseEstimator):
    """Late-fusion classifier over (text sequence, audio sequence) pairs."""

    def __init__(self, hidden_text=64, hidden_audio=64, epochs=30, batch_size=16,
                 lr=2e-5, eps=1e-8, weight_decay=0.0, val_fraction=0.2, seed=0,
                 classes=None):
        self.hidden_text = hidden_text
        self.hidden_audio = hidden_audio
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.eps = eps
        self.weight_decay = weight_decay
        self.val_fraction = val_fraction
        self.seed = seed
        self.classes = classes

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            eps=self.eps,
            weight_decay=self.weight_decay,
            val_fraction=self.val_fraction,
            seed=self.seed,
        )

    def fit(self, X, y, transfer_from=None):
        """``X``: list of (text T x d_t, audio T' x d_a) pairs. When
        ``transfer_from`` is a fitted NeuralTextClassifier, its selected-epoch
        text branch seeds this model's text branch before training."""
        classes = tuple(self.classes) if self.classes else tuple(sorted(set(y)))
        text_dim = np.asarray(X[0][0]).shape[1]
        audio_dim = np.asarray(X[0][1]).shape[1]
        rng = derived_rng(self.seed, "init_fusion")
        self.model_ = FusionClassifierCore.create(
            text_dim, audio_dim, self.hidden_text, self.hidden_audio, classes, rng
        )
        if transfer_from is not None:
            transfer_from._check_fitted("model_")
            transfer_init(self.model_, transfer_from.model_)
        self.checkpoints_, self.records_ = train(self.model_, X, y, self._train_config())
        self.selected_epoch_ = select_epoch(self.records_)
        load_checkpoint(self.model_, self.checkpoints_[self.selected_epoch_ - 1])
        self.classes_ = classes
        return self

    def predict_proba(self, X):
        self._check_fitted("model_")
        return _forward_labels_probs(self.model_, X, list(range(len(X))))

    def predict(self, X):
        probs = self.predict_proba(X)
        return [_argmax_label(self.classes_, row) for row in probs]
