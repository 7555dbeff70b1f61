"""Single-hidden-layer regressor from KL coordinates to eigenvector stacks,
trained with Moller's scaled conjugate gradient.

Inputs and targets are z-scored per coordinate with statistics frozen at
training time; the loss is the mean squared error on normalized targets.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


@dataclass
class Normalizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        scale = X.std(axis=0)
        scale = np.where(scale > SCALE_FLOOR, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    @classmethod
    def identity(cls, width):
        return cls(np.zeros(width), np.ones(width))

    def forward(self, X):
        return (X - self.mean) / self.scale

    def inverse(self, Z):
        return Z * self.scale + self.mean


@dataclass
class MlpNetwork:
    """``y = W2 tanh(W1 x + b1) + b2`` on normalized data."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x_norm: Normalizer = None
    y_norm: Normalizer = None

    def __post_init__(self):
        if self.x_norm is None:
            self.x_norm = Normalizer.identity(self.W1.shape[1])
        if self.y_norm is None:
            self.y_norm = Normalizer.identity(self.W2.shape[0])

    @property
    def sizes(self):
        return (self.W1.shape[1], self.W1.shape[0], self.W2.shape[0])

    @property
    def num_weights(self):
        R, h, O = self.sizes
        return h * R + h + O * h + O

    def get_flat(self):
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_flat(self, w):
        R, h, O = self.sizes
        w = np.asarray(w, dtype=float)
        if w.size != self.num_weights:
            raise ValueError(f"expected {self.num_weights} weights, got {w.size}")
        a = 0
        self.W1 = w[a : a + h * R].reshape(h, R).copy(); a += h * R  # noqa: E702
        self.b1 = w[a : a + h].copy(); a += h  # noqa: E702
        self.W2 = w[a : a + O * h].reshape(O, h).copy(); a += O * h  # noqa: E702
        self.b2 = w[a : a + O].copy()

    def with_flat(self, w):
        net = MlpNetwork(self.W1, self.b1, self.W2, self.b2, self.x_norm, self.y_norm)
        net.set_flat(w)
        return net

    def forward_normalized(self, Z):
        H = np.tanh(Z @ self.W1.T + self.b1)
        return H @ self.W2.T + self.b2

    def forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {X.shape[1]} != network input size {self.sizes[0]}")
        return self.y_norm.inverse(self.forward_normalized(self.x_norm.forward(X)))

    __call__ = forward


def init_network(sizes, seed=0):
    """Glorot-uniform weights, zero biases."""
    R, h, O = sizes
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    W1 = glorot(h, R)
    W2 = glorot(O, h)
    return MlpNetwork(W1, np.zeros(h), W2, np.zeros(O))


def forward(net, xi):
    return net.forward(xi)


def _loss_grad_normalized(net, Z, T):
    """MSE over all normalized target entries and its exact gradient."""
    M, O = T.shape
    A = Z @ net.W1.T + net.b1
    H = np.tanh(A)
    E = H @ net.W2.T + net.b2 - T
    mse = float(np.sum(E * E) / (M * O))
    dY = (2.0 / (M * O)) * E
    gW2 = dY.T @ H
    gb2 = dY.sum(axis=0)
    dA = (dY @ net.W2) * (1.0 - H * H)
    gW1 = dA.T @ Z
    gb1 = dA.sum(axis=0)
    return mse, np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def loss_and_gradient(net, inputs, targets):
    """MSE (on normalized targets) and its backpropagated gradient w.r.t. the flat weights."""
    Z = net.x_norm.forward(np.atleast_2d(inputs))
    T = net.y_norm.forward(np.atleast_2d(targets))
    return _loss_grad_normalized(net, Z, T)


@dataclass
class TrainConfig:
    grad_min: float = 1e-6
    max_epochs: int = 20000
    seed: int = 0
    sigma: float = 1e-4
    lambda0: float = 1e-6

    def __post_init__(self):
        if not self.grad_min > 0:
            raise ValueError("grad_min must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass
class ScgHistory:
    epochs: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    stop_reason: str = ""


def scg_minimize(fun_grad, w0, grad_min=1e-6, max_epochs=1000, sigma=1e-4, lambda0=1e-6):
    """Moller's scaled conjugate gradient.

    `fun_grad(w)` returns ``(E(w), E'(w))``.  One epoch is one SCG iteration.
    Stops when ``|E'(w)| < grad_min`` or after `max_epochs` iterations.
    Returns ``(w, history)``.
    """
    w = np.array(w0, dtype=float)
    N = w.size
    E, g = fun_grad(w)
    r = -g
    p = r.copy()
    lam, lam_bar = lambda0, 0.0
    success = True
    delta = 0.0
    hist = ScgHistory()

    def record(epoch, loss, gnorm, accepted):
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch} (|grad|={gnorm:.3e}, lambda={lam:.3e})")
        hist.epochs.append(epoch)
        hist.loss.append(loss)
        hist.grad_norm.append(gnorm)
        hist.accepted.append(accepted)

    record(0, E, float(np.linalg.norm(r)), True)
    if np.linalg.norm(r) < grad_min:
        hist.stop_reason = "grad_min"
        return w, hist

    k = 1
    while True:
        p2 = float(p @ p)
        if success:
            sig = sigma / math.sqrt(p2)
            _, g_sig = fun_grad(w + sig * p)
            s = (g_sig - (-r)) / sig
            delta = float(p @ s)
        delta += (lam - lam_bar) * p2
        if delta <= 0:
            lam_bar = 2.0 * (lam - delta / p2)
            delta = -delta + lam * p2
            lam = lam_bar
        mu = float(p @ r)
        if mu <= 0:
            # lost descent (round-off); restart along steepest descent
            p = r.copy()
            p2 = float(p @ p)
            mu = p2
            success = True
            sig = sigma / math.sqrt(p2)
            _, g_sig = fun_grad(w + sig * p)
            delta = float(p @ ((g_sig + r) / sig)) + lam * p2
            if delta <= 0:
                delta = lam * p2 + abs(delta)
        alpha = mu / delta
        w_new = w + alpha * p
        E_new, g_new = fun_grad(w_new)
        Delta = 2.0 * delta * (E - E_new) / (mu * mu)
        if Delta >= 0 and math.isfinite(E_new):
            w, E = w_new, E_new
            r_new = -g_new
            lam_bar = 0.0
            success = True
            if k % N == 0:
                p_next = r_new.copy()
            else:
                beta = (float(r_new @ r_new) - float(r_new @ r)) / mu
                p_next = r_new + beta * p
            r = r_new
            if Delta >= 0.75:
                lam = 0.25 * lam
        else:
            lam_bar = lam
            success = False
            p_next = p
        if Delta < 0.25:
            lam = lam + delta * (1.0 - Delta) / p2
        lam = min(lam, 1e300)
        p = p_next
        gnorm = float(np.linalg.norm(r))
        record(k, E, gnorm, success)
        if gnorm < grad_min:
            hist.stop_reason = "grad_min"
            break
        if k >= max_epochs:
            hist.stop_reason = "max_epochs"
            break
        k += 1
    return w, hist


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets have different row counts")
        O = self.meta.get("O")
        if O is not None and O != self.targets.shape[1]:
            raise ValueError(f"target width {self.targets.shape[1]} != layout O={O}")

    def __len__(self):
        return self.inputs.shape[0]


def scg_train(net, dataset, config=None):
    """Fit normalization statistics, then train all weights with SCG."""
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    net.x_norm = Normalizer.fit(dataset.inputs)
    net.y_norm = Normalizer.fit(dataset.targets)
    Z = net.x_norm.forward(dataset.inputs)
    T = net.y_norm.forward(dataset.targets)
    work = net.with_flat(net.get_flat())

    def fun_grad(w):
        work.set_flat(w)
        return _loss_grad_normalized(work, Z, T)

    w, hist = scg_minimize(
        fun_grad, net.get_flat(), config.grad_min, config.max_epochs, config.sigma, config.lambda0
    )
    net.set_flat(w)
    log.info("SCG stopped after %d epochs (%s), mse=%.3e", hist.epochs[-1], hist.stop_reason, hist.loss[-1])
    return net, hist


def nrmse(targets, predictions):
    """RMSE over samples (per-output mean) divided by the largest absolute residual.

    Defined as 0 when every residual is exactly zero.
    """
    Y = np.atleast_2d(np.asarray(targets, dtype=float))
    P = np.atleast_2d(np.asarray(predictions, dtype=float))
    if Y.shape != P.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {P.shape}")
    res = Y - P
    M, O = res.shape
    peak = np.abs(res).max() if res.size else 0.0
    if peak == 0.0:
        return 0.0
    rmse = math.sqrt(np.sum(np.sum(res * res, axis=1) / O) / M)
    return rmse / peak


# -- serialization -----------------------------------------------------------


def save_model(net, path, layout_hash="", extra=None):
    """JSON header plus the flat weight array as text (shortest round-trip repr)."""
    header = {
        "sizes": list(net.sizes),
        "activation": "tanh",
        "output": "linear",
        "layout_hash": layout_hash,
        "x_mean": net.x_norm.mean.tolist(),
        "x_scale": net.x_norm.scale.tolist(),
        "y_mean": net.y_norm.mean.tolist(),
        "y_scale": net.y_norm.scale.tolist(),
    }
    if extra:
        header.update(extra)
    doc = {"header": header, "weights": net.get_flat().tolist()}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path):
    doc = json.loads(Path(path).read_text())
    h = doc["header"]
    net = init_network(h["sizes"], seed=0)
    net.set_flat(np.array(doc["weights"], dtype=float))
    net.x_norm = Normalizer(np.array(h["x_mean"]), np.array(h["x_scale"]))
    net.y_norm = Normalizer(np.array(h["y_mean"]), np.array(h["y_scale"]))
    return net, h
