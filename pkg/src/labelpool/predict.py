"""Linear soft-label predictor for downstream evaluation of poolings.

A softmax regressor maps item features to label distributions and is
trained against refined target distributions with a mean-KL objective.
It stands in for heavier architectures; the point of the module is a
consistent, deterministic downstream learner for comparing poolings,
not state-of-the-art accuracy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from labelpool.core import LabelDistribution, _atomic_write_text

__all__ = ["TrainConfig", "SoftmaxModel", "train", "predict", "evaluate"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class SoftmaxModel:
    """Affine map + softmax over labels.

    Parameters start at zero (uniform output), so a model trained for
    zero epochs predicts the uniform distribution. The seed is carried
    in the config for artifact provenance; training itself is
    deterministic.
    """

    weights: np.ndarray
    bias: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)
    labels: tuple | None = None
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be a matrix and bias a vector")
        if self.weights.shape[1] != self.bias.size:
            raise ValueError("weights and bias disagree on label count")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("model parameters must be finite")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.bias.size

    def predict_proba(self, features) -> np.ndarray:
        """Row-wise softmax(features @ weights + bias)."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ValueError(
                f"feature dimension mismatch: model expects {self.n_features}, "
                f"got {x.shape[1]}"
            )
        logits = x @ self.weights + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        expz = np.exp(logits)
        return expz / expz.sum(axis=1, keepdims=True)

    def predict_one(self, features) -> LabelDistribution:
        return LabelDistribution(self.predict_proba(features)[0])

    def to_json_dict(self) -> dict:
        return {
            "format": "labelpool.model",
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "config": asdict(self.config),
            "labels": list(self.labels) if self.labels is not None else None,
            "loss_trace": np.asarray(self.loss_trace).tolist(),
        }

    def save(self, path) -> None:
        _atomic_write_text(path, json.dumps(self.to_json_dict(), indent=1) + "\n")

    @classmethod
    def from_json_dict(cls, payload: dict) -> "SoftmaxModel":
        labels = payload.get("labels")
        return cls(
            weights=np.array(payload["weights"], dtype=np.float64),
            bias=np.array(payload["bias"], dtype=np.float64),
            config=TrainConfig(**payload["config"]),
            labels=tuple(labels) if labels is not None else None,
            loss_trace=np.array(payload.get("loss_trace", []), dtype=np.float64),
        )

    @classmethod
    def load(cls, path) -> "SoftmaxModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _mean_kl_loss(targets: np.ndarray, probs: np.ndarray) -> float:
    # Sum t*log(t) with the 0*log(0) = 0 convention, minus t*log(p);
    # softmax output is strictly positive so log(p) is always defined.
    tlogt = np.where(targets > 0, targets * np.log(np.where(targets > 0, targets, 1.0)), 0.0)
    return float(np.mean(np.sum(tlogt - targets * np.log(probs), axis=1)))


def _check_training_inputs(features, targets) -> tuple[np.ndarray, np.ndarray]:
    if features is None:
        raise ValueError("training requires features; dataset has none")
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or t.ndim != 2 or x.shape[0] != t.shape[0]:
        raise ValueError("features and targets must be matrices with matching rows")
    if x.shape[0] == 0:
        raise ValueError("training set is empty")
    if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("targets must be rows on the probability simplex")
    return x, t


def train(features, targets, config: TrainConfig = TrainConfig(), labels=None) -> SoftmaxModel:
    """Fit by full-batch gradient descent on mean KL(target || prediction).

    The step is halved whenever a proposed update would increase the
    loss, so the recorded loss trace is non-increasing. Gradient of the
    objective in the logits is (prediction - target) / n, hence
    grad_W = X^T (P - T) / n and grad_b = column sums of (P - T) / n.
    """
    x, t = _check_training_inputs(features, targets)
    n, d = t.shape
    model = SoftmaxModel(
        weights=np.zeros((x.shape[1], d)), bias=np.zeros(d), config=config, labels=labels
    )
    w, bias = model.weights, model.bias
    probs = model.predict_proba(x)
    loss = _mean_kl_loss(t, probs)
    trace = [loss]
    step = config.learning_rate
    for _ in range(config.epochs):
        diff = (probs - t) / n
        grad_w = x.T @ diff
        grad_b = diff.sum(axis=0)
        while True:
            w_new = w - step * grad_w
            bias_new = bias - step * grad_b
            candidate = SoftmaxModel(w_new, bias_new, config=config, labels=labels)
            probs_new = candidate.predict_proba(x)
            loss_new = _mean_kl_loss(t, probs_new)
            if loss_new <= loss or step < 1e-12:
                break
            step *= 0.5
        w, bias, probs = w_new, bias_new, probs_new
        previous, loss = loss, loss_new
        trace.append(loss)
        if abs(previous - loss) <= config.tol * (1.0 + abs(loss)):
            break
    model = SoftmaxModel(w, bias, config=config, labels=labels)
    model.loss_trace = np.array(trace)
    return model


def predict(model: SoftmaxModel, features) -> LabelDistribution:
    """Distribution for a single feature vector."""
    return model.predict_one(features)


def evaluate(model: SoftmaxModel, features, targets) -> tuple[float, float]:
    """Mean KL(target || prediction) and argmax accuracy over an
    evaluation set. Argmax ties resolve to the lowest label index on
    both sides.
    """
    x, t = _check_training_inputs(features, targets)
    probs = model.predict_proba(x)
    mean_kl = _mean_kl_loss(t, probs)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == np.argmax(t, axis=1)))
    return mean_kl, accuracy
