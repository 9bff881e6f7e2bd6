"""Multinomial logistic regression on a flat parameter vector.

The model for ``c`` classes over ``f`` features is a single weight matrix
plus bias, flattened row-major as [W(0,0)..W(0,f-1), W(1,0).., ..., bias],
giving d = c*f + c (7850 for 10 classes on 784 features). Users compute
local updates as a learning-rate multiple of the negative loss gradient
on their shard.
"""

from __future__ import annotations

import numpy as np

from .core import GlobalModel, InvalidInputError

__all__ = [
    "accuracy",
    "gradient",
    "init_model",
    "local_update",
    "loss",
    "model_dim",
    "predict_logits",
    "unpack",
]


def model_dim(features: int, classes: int) -> int:
    return classes * features + classes


def init_model(features: int, classes: int) -> GlobalModel:
    """Zero-initialized model (the symmetric starting point)."""
    return GlobalModel(theta=np.zeros(model_dim(features, classes)), round=0)


def unpack(theta: np.ndarray, features: int, classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Split the flat vector into (weights[classes, features], bias[classes])."""
    if theta.shape[0] != model_dim(features, classes):
        raise InvalidInputError(
            f"theta has dimension {theta.shape[0]}, expected {model_dim(features, classes)}"
        )
    split = classes * features
    return theta[:split].reshape(classes, features), theta[split:]


def predict_logits(theta: np.ndarray, x: np.ndarray, classes: int) -> np.ndarray:
    weights, bias = unpack(theta, x.shape[1], classes)
    return x @ weights.T + bias


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss(theta: np.ndarray, x: np.ndarray, y: np.ndarray, classes: int) -> float:
    """Mean cross-entropy of the shard."""
    logits = predict_logits(theta, x, classes)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(y)), y]))


def gradient(theta: np.ndarray, x: np.ndarray, y: np.ndarray, classes: int) -> np.ndarray:
    """Flat gradient of the mean cross-entropy over the shard."""
    if len(y) == 0:
        raise InvalidInputError("cannot take a gradient on an empty shard")
    probs = _softmax(predict_logits(theta, x, classes))
    probs[np.arange(len(y)), y] -= 1.0
    probs /= len(y)
    grad_w = probs.T @ x
    grad_b = probs.sum(axis=0)
    return np.concatenate([grad_w.ravel(), grad_b])


def local_update(
    model: GlobalModel, x: np.ndarray, y: np.ndarray, classes: int, lr: float
) -> np.ndarray:
    """One user's local update: lr times the negative shard gradient."""
    return -lr * gradient(model.theta, x, y, classes)


def accuracy(theta: np.ndarray, x: np.ndarray, y: np.ndarray, classes: int) -> float:
    logits = predict_logits(theta, x, classes)
    return float(np.mean(logits.argmax(axis=1) == y))
