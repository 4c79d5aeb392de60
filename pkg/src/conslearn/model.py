"""Single-hidden-layer MLP (ReLU hidden, softmax output) trained with Adam.

Parameters live in one flat float64 vector laid out layer-major, weights
before biases:

    W1 (input_dim x hidden_dim, row-major) | b1 (hidden_dim)
    W2 (hidden_dim x output_dim, row-major) | b2 (output_dim)

Every node uses the same layout, which is what makes the vectors
exchangeable over the network.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, UsageError
from .params import as_param_vector

DEFAULT_HIDDEN = 72
DEFAULT_CLASSES = 10


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dim: int = DEFAULT_HIDDEN
    output_dim: int = DEFAULT_CLASSES

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if int(getattr(self, name)) < 1:
                raise DimensionError(f"{name} must be positive")

    @property
    def n_params(self) -> int:
        d, h, k = self.input_dim, self.hidden_dim, self.output_dim
        return d * h + h + h * k + k

    def unflatten(self, params: np.ndarray):
        """Split a flat vector into (W1, b1, W2, b2) views (no copies)."""
        if params.shape != (self.n_params,):
            raise DimensionError(
                f"expected {self.n_params} parameters for {self}, got shape {params.shape}")
        d, h, k = self.input_dim, self.hidden_dim, self.output_dim
        o = 0
        w1 = params[o:o + d * h].reshape(d, h); o += d * h
        b1 = params[o:o + h]; o += h
        w2 = params[o:o + h * k].reshape(h, k); o += h * k
        b2 = params[o:o + k]
        return w1, b1, w2, b2

    def flatten(self, w1, b1, w2, b2) -> np.ndarray:
        out = np.concatenate([np.ravel(w1), np.ravel(b1), np.ravel(w2), np.ravel(b2)]).astype(np.float64)
        if out.shape != (self.n_params,):
            raise DimensionError(f"layer shapes do not match {self}")
        return out


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise DimensionError(f"inputs must be a matrix, got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise DimensionError(
                f"{self.inputs.shape[0]} input rows but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.labels.shape[0]


def init_params(arch: Architecture, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    d, h, k = arch.input_dim, arch.hidden_dim, arch.output_dim
    lim1 = np.sqrt(6.0 / (d + h))
    lim2 = np.sqrt(6.0 / (h + k))
    w1 = rng.uniform(-lim1, lim1, size=(d, h))
    w2 = rng.uniform(-lim2, lim2, size=(h, k))
    return arch.flatten(w1, np.zeros(h), w2, np.zeros(k))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MlpModel:
    arch: Architecture
    params: np.ndarray

    def __post_init__(self):
        self.params = as_param_vector(self.params)
        self.arch.unflatten(self.params)

    @classmethod
    def initialized(cls, arch: Architecture, seed: int) -> "MlpModel":
        return cls(arch, init_params(arch, seed))

    def _check_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.arch.input_dim:
            raise DimensionError(
                f"expected inputs with {self.arch.input_dim} columns, got shape {inputs.shape}")
        return inputs

    def _check_labels(self, labels: np.ndarray) -> None:
        if labels.size and (labels.min() < 0 or labels.max() >= self.arch.output_dim):
            raise UsageError(f"labels must lie in [0, {self.arch.output_dim})")

    def _logits(self, inputs):
        w1, b1, w2, b2 = self.arch.unflatten(self.params)
        pre = inputs @ w1 + b1
        hidden = np.maximum(pre, 0.0)
        return pre, hidden, hidden @ w2 + b2

    def forward(self, inputs) -> np.ndarray:
        inputs = self._check_inputs(inputs)
        return softmax(self._logits(inputs)[2])

    def loss(self, batch: Batch) -> float:
        """Mean sparse categorical cross-entropy, computed via log-sum-exp."""
        inputs = self._check_inputs(batch.inputs)
        self._check_labels(batch.labels)
        logits = self._logits(inputs)[2]
        return float(np.mean(_per_sample_nll(logits, batch.labels)))

    def gradient(self, batch: Batch) -> np.ndarray:
        """Exact gradient of :meth:`loss` w.r.t. the flat parameter vector."""
        inputs = self._check_inputs(batch.inputs)
        self._check_labels(batch.labels)
        _, b1, w2, _ = self.arch.unflatten(self.params)
        pre, hidden, logits = self._logits(inputs)
        n = inputs.shape[0]
        dlogits = softmax(logits)
        dlogits[np.arange(n), batch.labels] -= 1.0
        dlogits /= n
        dw2 = hidden.T @ dlogits
        db2 = dlogits.sum(axis=0)
        dpre = (dlogits @ w2.T) * (pre > 0.0)
        dw1 = inputs.T @ dpre
        db1 = dpre.sum(axis=0)
        return self.arch.flatten(dw1, db1, dw2, db2)

    def evaluate(self, inputs, labels) -> tuple[float, float]:
        """(mean loss, accuracy) over a dataset; argmax ties go to the lowest class."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            raise UsageError("cannot evaluate on an empty dataset")
        inputs = self._check_inputs(inputs)
        if inputs.shape[0] != labels.shape[0]:
            raise DimensionError(f"{inputs.shape[0]} input rows but {labels.shape[0]} labels")
        self._check_labels(labels)
        logits = self._logits(inputs)[2]
        loss = float(np.mean(_per_sample_nll(logits, labels)))
        acc = float(np.mean(np.argmax(logits, axis=1) == labels))
        return loss, acc


def _per_sample_nll(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    top = logits.max(axis=1)
    lse = top + np.log(np.exp(logits - top[:, None]).sum(axis=1))
    return lse - logits[np.arange(labels.shape[0]), labels]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **hyper) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), **hyper)

    def copy(self) -> "AdamState":
        return replace(self, m=self.m.copy(), v=self.v.copy())


def adam_step(params: np.ndarray, grad: np.ndarray, adam: AdamState) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update. Returns new arrays; inputs are not mutated."""
    if not (params.shape == grad.shape == adam.m.shape == adam.v.shape):
        raise DimensionError("params, gradient and Adam moments must share one length")
    t = adam.t + 1
    m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad
    v = adam.beta2 * adam.v + (1.0 - adam.beta2) * (grad * grad)
    m_hat = m / (1.0 - adam.beta1 ** t)
    v_hat = v / (1.0 - adam.beta2 ** t)
    new_params = params - adam.alpha * m_hat / (np.sqrt(v_hat) + adam.epsilon)
    return new_params, replace(adam, m=m, v=v, t=t)


def train_on_batch(arch: Architecture, params: np.ndarray, adam: AdamState,
                   batch: Batch) -> tuple[np.ndarray, AdamState]:
    grad = MlpModel(arch, params).gradient(batch)
    return adam_step(params, grad, adam)
