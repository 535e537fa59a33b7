"""Small feedforward regressor with direct, Gaussian, and quantile heads.

The network maps an input vector through a tanh/relu trunk to a feature
vector g(x) (penultimate layer), followed by a single linear head. Trained
from scratch with Adam; gradients are hand-derived and checked against
finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .statkit import substream

HEADS = ("direct", "gaussian", "quantile")
ACTIVATIONS = ("tanh", "relu")

CHECKPOINT_FORMAT = "shiftbench-model-v1"


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple = (64, 64)
    feature_dim: int = 32
    head: str = "direct"
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.hidden:
            # degenerate architecture: no trunk, g(x) = x
            object.__setattr__(self, "feature_dim", self.input_dim)
        elif self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")

    @property
    def n_outputs(self) -> int:
        return 1 if self.head == "direct" else 2

    def layer_dims(self):
        """(in, out) pairs for trunk layers followed by the head layer."""
        trunk = [self.input_dim] + list(self.hidden) + ([self.feature_dim] if self.hidden else [])
        pairs = list(zip(trunk[:-1], trunk[1:]))
        pairs.append((trunk[-1], self.n_outputs))
        return pairs


@dataclass
class TrainHyper:
    epochs: int = 75
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainedModel:
    architecture: Architecture
    weights: list  # [(W, b), ...] trunk layers then head layer
    seed: int = 0
    train_loss_history: list = field(default_factory=list)
    # train-split target statistics; predictions are mapped back to raw units
    target_mean: float = 0.0
    target_std: float = 1.0


def _activation(arch):
    if arch.activation == "tanh":
        return np.tanh, lambda a: 1.0 - a * a
    return lambda z: np.maximum(z, 0.0), lambda a: (a > 0.0).astype(float)


def init_model(arch: Architecture, seed: int) -> TrainedModel:
    """Glorot-uniform init: W ~ U(-sqrt(6/(fan_in+fan_out)), +...), b = 0."""
    rng = substream(seed, "init")
    weights = []
    for fan_in, fan_out in arch.layer_dims():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        weights.append((W, b))
    return TrainedModel(architecture=arch, weights=weights, seed=int(seed))


def flatten_weights(model: TrainedModel) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in model.weights])


def set_flat_weights(model: TrainedModel, flat: np.ndarray) -> None:
    i = 0
    for li, (W, b) in enumerate(model.weights):
        nW, nb = W.size, b.size
        model.weights[li] = (flat[i:i + nW].reshape(W.shape).copy(), flat[i + nW:i + nW + nb].copy())
        i += nW + nb
    if i != flat.size:
        raise ValueError("weight count mismatch")


def _forward_cached(model: TrainedModel, X: np.ndarray):
    """Trunk + head forward pass; returns (head_out, activations per layer)."""
    act, _ = _activation(model.architecture)
    a = X
    activations = [a]
    for W, b in model.weights[:-1]:
        a = act(a @ W.T + b)
        activations.append(a)
    Wh, bh = model.weights[-1]
    out = a @ Wh.T + bh
    return out, activations


def _check_input(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.architecture.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} != architecture input_dim {model.architecture.input_dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    return X


@dataclass
class HeadOutput:
    head: str
    values: tuple  # (f,) | (mu, sigma2) | (q_lo, q_up), raw target units
    features: np.ndarray


def forward(model: TrainedModel, x) -> HeadOutput:
    """Single-input forward pass in raw target units."""
    X = _check_input(model, x)
    out, activations = _forward_cached(model, X)
    m, s = model.target_mean, model.target_std
    head = model.architecture.head
    if head == "direct":
        values = (float(m + s * out[0, 0]),)
    elif head == "gaussian":
        values = (float(m + s * out[0, 0]), float(s * s * np.exp(out[0, 1])))
    else:
        values = (float(m + s * out[0, 0]), float(m + s * out[0, 1]))
    return HeadOutput(head=head, values=values, features=activations[-1][0])


def predict(model: TrainedModel, X):
    """Batched head outputs in raw target units.

    Returns f for direct, (mu, sigma2) for gaussian, (q_lo, q_up) for quantile.
    """
    X = _check_input(model, X)
    out, _ = _forward_cached(model, X)
    m, s = model.target_mean, model.target_std
    head = model.architecture.head
    if head == "direct":
        return m + s * out[:, 0]
    if head == "gaussian":
        return m + s * out[:, 0], s * s * np.exp(out[:, 1])
    return m + s * out[:, 0], m + s * out[:, 1]


def extract_features(model: TrainedModel, X) -> np.ndarray:
    """Penultimate-layer activations g(x), one row per input."""
    X = _check_input(model, X)
    _, activations = _forward_cached(model, X)
    return activations[-1]


def _loss_and_grad_out(head: str, out: np.ndarray, y: np.ndarray, alpha: float):
    """Mean batch loss and its gradient wrt the raw head outputs."""
    n = y.size
    if head == "direct":
        r = out[:, 0] - y
        return float(np.mean(r * r)), (2.0 * r / n)[:, None]
    if head == "gaussian":
        mu, s = out[:, 0], out[:, 1]
        sigma2 = np.exp(s)
        r = y - mu
        losses = 0.5 * (np.log(2.0 * np.pi) + s) + r * r / (2.0 * sigma2)
        g = np.empty_like(out)
        g[:, 0] = -r / sigma2 / n
        g[:, 1] = (0.5 - r * r / (2.0 * sigma2)) / n
        return float(np.mean(losses)), g
    if head == "quantile":
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha outside (0, 1)")
        a_lo, a_up = alpha / 2.0, 1.0 - alpha / 2.0
        g = np.empty_like(out)
        losses = np.zeros(n)
        for col, tau in ((0, a_lo), (1, a_up)):
            u = y - out[:, col]
            losses += 0.5 * u * (tau - (u < 0.0))
            g[:, col] = -0.5 * (tau - (u < 0.0)) / n
        return float(np.mean(losses)), g
    raise ValueError(f"unknown head {head!r}")


def loss(head: str, output, y: float, alpha: float = 0.1) -> float:
    """Per-example loss; `output` is the head value tuple.

    L2 = (y-f)^2; Gaussian NLL = 0.5 log(2 pi sigma2) + (y-mu)^2/(2 sigma2);
    pinball = mean of the two check losses at alpha/2 and 1-alpha/2.
    """
    if head == "gaussian":
        mu, sigma2 = output
        if sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")
        out = np.array([[mu, np.log(sigma2)]])
    else:
        out = np.array([list(np.atleast_1d(np.asarray(output, dtype=float)))])
    value, _ = _loss_and_grad_out(head, out, np.array([float(y)]), alpha)
    return value


def loss_and_gradient(model: TrainedModel, X, y, alpha: float = 0.1):
    """Mean loss over the batch and the flat weight gradient (backprop)."""
    X = _check_input(model, X)
    y = np.asarray(y, dtype=float)
    arch = model.architecture
    _, dact = _activation(arch)
    out, activations = _forward_cached(model, X)
    value, g_out = _loss_and_grad_out(arch.head, out, y, alpha)

    grads = [None] * len(model.weights)
    Wh, _ = model.weights[-1]
    a_last = activations[-1]
    grads[-1] = (g_out.T @ a_last, g_out.sum(axis=0))
    da = g_out @ Wh
    for li in range(len(model.weights) - 2, -1, -1):
        dz = da * dact(activations[li + 1])
        W, _ = model.weights[li]
        grads[li] = (dz.T @ activations[li], dz.sum(axis=0))
        da = dz @ W
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return value, flat


def train(model: TrainedModel, X, y, hyper: TrainHyper, alpha: float = 0.1,
          standardize: bool = True) -> TrainedModel:
    """Adam training on (X, y); returns a new model, input model untouched.

    Deterministic given hyper.seed (fixed shuffle stream). Targets are
    z-scored with train statistics when `standardize`; predictions map back
    to raw units.
    """
    X = _check_input(model, X)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty training set")
    if standardize:
        t_mean = float(np.mean(y))
        t_std = float(np.std(y))
        if t_std <= 0.0:
            t_std = 1.0
    else:
        t_mean, t_std = 0.0, 1.0
    y_std = (y - t_mean) / t_std

    trained = TrainedModel(
        architecture=model.architecture,
        weights=[(W.copy(), b.copy()) for W, b in model.weights],
        seed=model.seed,
        target_mean=t_mean,
        target_std=t_std,
    )
    flat = flatten_weights(trained)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    t = 0
    rng = substream(hyper.seed, "shuffle")
    n = y.size
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            batch_loss, grad = loss_and_gradient(trained, X[idx], y_std[idx], alpha)
            if not np.isfinite(batch_loss):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            epoch_losses.append(batch_loss * idx.size)
            t += 1
            m = hyper.adam_beta1 * m + (1.0 - hyper.adam_beta1) * grad
            v = hyper.adam_beta2 * v + (1.0 - hyper.adam_beta2) * grad * grad
            m_hat = m / (1.0 - hyper.adam_beta1 ** t)
            v_hat = v / (1.0 - hyper.adam_beta2 ** t)
            flat = flat - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
            set_flat_weights(trained, flat)
        history.append(float(np.sum(epoch_losses) / n))
    trained.train_loss_history = history
    return trained


def save_model(model: TrainedModel, path) -> None:
    arch = model.architecture
    payload = {
        "format": CHECKPOINT_FORMAT,
        "architecture": {
            "input_dim": arch.input_dim,
            "hidden": list(arch.hidden),
            "feature_dim": arch.feature_dim,
            "head": arch.head,
            "activation": arch.activation,
        },
        "seed": model.seed,
        "target_mean": model.target_mean,
        "target_std": model.target_std,
        "train_loss_history": model.train_loss_history,
        "weights": flatten_weights(model).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unknown checkpoint format in {path}")
    a = payload["architecture"]
    arch = Architecture(input_dim=a["input_dim"], hidden=tuple(a["hidden"]),
                        feature_dim=a["feature_dim"], head=a["head"],
                        activation=a["activation"])
    model = init_model(arch, payload["seed"])
    set_flat_weights(model, np.asarray(payload["weights"], dtype=float))
    model.target_mean = payload["target_mean"]
    model.target_std = payload["target_std"]
    model.train_loss_history = payload["train_loss_history"]
    return model
