"""Small trainable models: multinomial logistic regression and a one-hidden-
layer MLP, with flat-parameter gradients for softmax cross-entropy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class Model:
    """Architecture descriptor; parameters travel separately as flat vectors.

    arch "logreg": W (L, p) + b (L,); arch "mlp": W1 (h, p) + b1 + W2 (L, h)
    + b2 with ReLU hidden activation.  Loss is mean softmax cross-entropy.
    """

    arch: str
    n_features: int
    n_classes: int
    hidden: int = 128
    shapes: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        if self.arch == "logreg":
            shapes = ((self.n_classes, self.n_features), (self.n_classes,))
        elif self.arch == "mlp":
            shapes = (
                (self.hidden, self.n_features),
                (self.hidden,),
                (self.n_classes, self.hidden),
                (self.n_classes,),
            )
        else:
            raise ValueError(f"unknown architecture {self.arch!r}")
        object.__setattr__(self, "shapes", shapes)

    @property
    def dim(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Zero init for logreg (convex); scaled Gaussian init for the MLP."""
        if self.arch == "logreg":
            return np.zeros(self.dim)
        w1 = rng.standard_normal((self.hidden, self.n_features))
        w1 *= np.sqrt(2.0 / self.n_features)
        w2 = rng.standard_normal((self.n_classes, self.hidden))
        w2 *= np.sqrt(2.0 / self.hidden)
        return flatten([w1, np.zeros(self.hidden), w2, np.zeros(self.n_classes)])

    def unflatten(self, flat: np.ndarray) -> list[np.ndarray]:
        return unflatten(flat, self.shapes)

    def logits(self, flat: np.ndarray, features: np.ndarray) -> np.ndarray:
        if features.shape[1] != self.n_features:
            raise ShapeMismatch(
                f"model expects {self.n_features} features, got {features.shape[1]}"
            )
        if self.arch == "logreg":
            w, b = self.unflatten(flat)
            return features @ w.T + b
        w1, b1, w2, b2 = self.unflatten(flat)
        hidden = np.maximum(features @ w1.T + b1, 0.0)
        return hidden @ w2.T + b2

    def loss(self, flat: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
        logp = _log_softmax(self.logits(flat, features))
        return float(-np.mean(logp[np.arange(len(labels)), labels]))

    def grad(self, flat: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Mean cross-entropy gradient, flattened to length dim."""
        if len(labels) == 0:
            raise ShapeMismatch("gradient of an empty batch")
        n = len(labels)
        probs = _softmax(self.logits(flat, features))
        delta = probs
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        if self.arch == "logreg":
            return flatten([delta.T @ features, delta.sum(axis=0)])
        w1, b1, w2, b2 = self.unflatten(flat)
        pre = features @ w1.T + b1
        act = np.maximum(pre, 0.0)
        d_w2 = delta.T @ act
        d_b2 = delta.sum(axis=0)
        back = (delta @ w2) * (pre > 0.0)
        d_w1 = back.T @ features
        d_b1 = back.sum(axis=0)
        return flatten([d_w1, d_b1, d_w2, d_b2])

    def predict(self, flat: np.ndarray, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(flat, features), axis=1)

    def accuracy(self, flat: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(flat, features) == labels))


def flatten(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])


def unflatten(flat: np.ndarray, shapes: tuple[tuple[int, ...], ...]) -> list[np.ndarray]:
    parts = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        parts.append(flat[offset:offset + size].reshape(shape))
        offset += size
    if offset != flat.shape[0]:
        raise ShapeMismatch(f"flat vector length {flat.shape[0]}, model needs {offset}")
    return parts


def local_grad(model: Model, params: np.ndarray, features: np.ndarray,
               labels: np.ndarray) -> np.ndarray:
    """Gradient of mean cross-entropy over the batch at the given params."""
    return model.grad(params, features, labels)


def sgd_step(params: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """One descent step: params - eta * grad."""
    if params.shape != grad.shape:
        raise ShapeMismatch(f"params {params.shape} vs grad {grad.shape}")
    return params - eta * grad


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
