"""Fully-connected head without bias, softmax cross-entropy and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .prng import SplitMix64
from .quanvolution import FeatureMap

NUM_CLASSES = 10


@dataclass
class ClassifierHead:
    weights: np.ndarray  # (classes, features)

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def initialize(cls, num_features: int, seed: int, num_classes: int = NUM_CLASSES) -> "ClassifierHead":
        """Uniform on [-a, a] with a = 1/sqrt(num_features), splitmix64 stream."""
        rng = SplitMix64(seed)
        a = 1.0 / np.sqrt(num_features)
        draws = np.array([rng.uniform() for _ in range(num_classes * num_features)])
        return cls(((2.0 * draws - 1.0) * a).reshape(num_classes, num_features))


def head_forward(features: np.ndarray, head: ClassifierHead) -> np.ndarray:
    """Logits for one flattened feature vector or a ``(batch, features)`` array.

    A :class:`FeatureMap` is accepted and flattened channel-major.
    """
    x = features.flatten() if isinstance(features, FeatureMap) else np.asarray(features)
    if x.shape[-1] != head.num_features:
        raise ContractError(f"head expects {head.num_features} features, got {x.shape[-1]}")
    return x @ head.weights.T


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape[0] != logits.shape[0]:
        raise ContractError("one label per logit row required")
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise ContractError("label out of range")
    batch = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(batch)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / batch


def predict(logits: np.ndarray) -> np.ndarray:
    """Argmax; ties go to the lowest class index."""
    return np.argmax(logits, axis=-1)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64), **hyper)


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new arrays, inputs are untouched."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ContractError("params, grads and moments must share a shape")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_params, new_state
