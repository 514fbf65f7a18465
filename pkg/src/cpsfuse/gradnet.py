"""Minimal reverse-mode automatic differentiation with the AdamW optimizer.

Tensors hold float64 data and build an acyclic tape when any input requires
gradients. Every op traps non-finite results. A tape may be walked backward
at most once; parameters (leaf tensors) are reusable across steps.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .base import DataError

__all__ = [
    "Tensor",
    "tensor",
    "no_grad",
    "matmul",
    "add",
    "mul",
    "tanh",
    "sigmoid",
    "concat",
    "softmax",
    "transpose",
    "narrow",
    "forward_op",
    "cross_entropy",
    "backward",
    "zero_grads",
    "finite_diff_check",
    "AdamWState",
    "adamw_step",
    "init_uniform",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / numeric probes)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, Tensor(np.full((), -1.0)))

    def __sub__(self, other):
        return add(self, -_as_tensor(other))


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, backward_fn):
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError("operation produced non-finite values")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DataError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")

    def backward_fn(out):
        if a.requires_grad:
            _accumulate(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ out.grad)

    return _make(a.data @ b.data, (a, b), backward_fn)


def _check_elementwise(a, b, op_name):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DataError(
            f"{op_name} shape mismatch: {a.data.shape} vs {b.data.shape}"
        ) from None


def _reduce_to_shape(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, (have, want) in enumerate(zip(grad.shape, shape)):
        if want == 1 and have != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")

    def backward_fn(out):
        if a.requires_grad:
            _accumulate(a, _reduce_to_shape(out.grad, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _reduce_to_shape(out.grad, b.data.shape))

    return _make(a.data + b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")

    def backward_fn(out):
        if a.requires_grad:
            _accumulate(a, _reduce_to_shape(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _reduce_to_shape(out.grad * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward_fn)


def tanh(x):
    x = _as_tensor(x)
    value = np.tanh(x.data)

    def backward_fn(out):
        if x.requires_grad:
            _accumulate(x, out.grad * (1.0 - value * value))

    return _make(value, (x,), backward_fn)


def sigmoid(x):
    x = _as_tensor(x)
    value = 1.0 / (1.0 + np.exp(-x.data))

    def backward_fn(out):
        if x.requires_grad:
            _accumulate(x, out.grad * value * (1.0 - value))

    return _make(value, (x,), backward_fn)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DataError("concat needs at least one tensor")
    ref = tensors[0].data.shape
    for t in tensors[1:]:
        ts = t.data.shape
        if len(ts) != len(ref) or any(
            i != axis and ts[i] != ref[i] for i in range(len(ref))
        ):
            raise DataError(f"concat shape mismatch off axis {axis}: {ref} vs {ts}")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(out):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * out.grad.ndim
                index[axis] = slice(start, stop)
                _accumulate(t, out.grad[tuple(index)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn)


def softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    value = exp / exp.sum(axis=axis, keepdims=True)

    def backward_fn(out):
        if x.requires_grad:
            inner = (out.grad * value).sum(axis=axis, keepdims=True)
            _accumulate(x, value * (out.grad - inner))

    return _make(value, (x,), backward_fn)


def transpose(x):
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DataError(f"transpose expects a matrix, got shape {x.data.shape}")

    def backward_fn(out):
        if x.requires_grad:
            _accumulate(x, out.grad.T)

    return _make(x.data.T, (x,), backward_fn)


def narrow(x, axis, start, length):
    """Contiguous slice along one axis; backward zero-pads."""
    x = _as_tensor(x)
    if not (0 <= start and start + length <= x.data.shape[axis]):
        raise DataError(
            f"narrow out of range: axis {axis} start {start} length {length} "
            f"on shape {x.data.shape}"
        )
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward_fn(out):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[index] = out.grad
            _accumulate(x, full)

    return _make(x.data[index], (x,), backward_fn)


_OPS = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "concat": concat,
    "softmax": softmax,
}


def forward_op(kind, inputs, axis=None):
    """Dispatch by op name; ``concat``/``softmax`` take an axis."""
    if kind not in _OPS:
        raise DataError(f"unknown op kind {kind!r}; expected one of {sorted(_OPS)}")
    if kind == "concat":
        return concat(inputs, axis=0 if axis is None else axis)
    if kind == "softmax":
        (x,) = inputs
        return softmax(x, axis=-1 if axis is None else axis)
    return _OPS[kind](*inputs)


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label], log-sum-exp stable."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise DataError(f"cross_entropy expects (B, K) logits, got {logits.data.shape}")
    batch, k = logits.data.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch,):
        raise DataError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise DataError(f"label out of range [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    value = -log_probs[np.arange(batch), labels].mean()

    def backward_fn(out):
        if logits.requires_grad:
            grad = np.exp(log_probs)
            grad[np.arange(batch), labels] -= 1.0
            _accumulate(logits, out.grad * grad / batch)

    return _make(value, (logits,), backward_fn)


def _accumulate(t, grad):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def backward(loss):
    """Populate gradients of every requires_grad leaf reachable from ``loss``."""
    if loss.data.shape != ():
        raise DataError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise DataError("loss does not require grad; nothing to differentiate")

    topo, visited = [], set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        if node._parents and node._consumed:
            raise DataError("this graph was already consumed by a previous backward")
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad:
                stack.append((parent, False))

    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node)
            node._consumed = True


def zero_grads(params):
    for p in params:
        p.grad = None


def finite_diff_check(fn, params, h=1e-5):
    """Max relative error between backward() gradients and central differences.

    ``fn`` must be a deterministic closure over ``params`` returning a scalar
    Tensor. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    zero_grads(params)
    loss = fn()
    if not np.isfinite(loss.data):
        raise DataError("function value is not finite")
    backward(loss)
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            a_flat = a.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                f_plus = float(fn().data)
                flat[i] = original - h
                f_minus = float(fn().data)
                flat[i] = original
                numeric = (f_plus - f_minus) / (2.0 * h)
                denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(a_flat[i] - numeric) / denom)
    zero_grads(params)
    return worst


@dataclass
class AdamWState:
    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def ensure(self, params):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in params]
            self.v = [np.zeros_like(p.data) for p in params]


def adamw_step(state, params, grads=None):
    """One decoupled-weight-decay Adam update, in place on ``params``.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
    """
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    state.ensure(params)
    if len(grads) != len(params):
        raise DataError(f"{len(params)} params but {len(grads)} grads")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise DataError(f"grad shape {g.shape} != param shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise DataError("non-finite gradient")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if state.weight_decay:
            step = step + state.lr * state.weight_decay * p.data
        p.data -= step
    return params


def init_uniform(shape, fan_in, rng):
    """uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape)
