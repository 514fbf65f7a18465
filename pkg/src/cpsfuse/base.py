"""Estimator base class and input-validation helpers shared across the toolkit.

The estimators follow the scikit-learn parameter conventions (constructor
arguments stored verbatim, ``get_params``/``set_params``, trailing-underscore
fitted attributes) without depending on scikit-learn itself.
"""

from __future__ import annotations

import inspect

import numpy as np


class NotFittedError(RuntimeError):
    """Raised when predict/transform is called before fit."""


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class BaseEstimator:
    """Minimal sklearn-style estimator: introspectable constructor params."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p.name for p in sig.parameters.values() if p.name != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def _check_fitted(self, attr):
        if not hasattr(self, attr):
            raise NotFittedError(
                f"{type(self).__name__} is not fitted yet; call fit() first"
            )

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({params})"


def check_array(X, *, ndim=2, dtype=np.float64, name="X"):
    """Coerce to a finite ndarray of the requested rank."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_X_y(X, y):
    X = check_array(X)
    y = list(y)
    if len(y) != X.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but y has {len(y)} labels")
    return X, y


def check_seed(seed):
    if not isinstance(seed, (int, np.integer)):
        raise DataError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed)


def derived_rng(seed, *scope):
    """Deterministic per-scope generator: seed plus a stable scope tuple.

    Strings in scope are folded to stable 64-bit values so generators do not
    depend on Python's randomized string hashing.
    """
    words = [np.uint64(seed & 0xFFFFFFFFFFFFFFFF)]
    for item in scope:
        if isinstance(item, str):
            words.append(np.uint64(fnv1a64(item)))
        else:
            words.append(np.uint64(int(item) & 0xFFFFFFFFFFFFFFFF))
    return np.random.default_rng([int(w) for w in words])


def fnv1a64(text):
    """64-bit FNV-1a of the UTF-8 encoding; stable across platforms."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
