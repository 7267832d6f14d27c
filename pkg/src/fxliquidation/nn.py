"""Small numpy feedforward network with analytic backprop and Adam.

Every learner in the package shares this: ReLU hidden layers, identity
outputs, per-sample losses averaged over a minibatch.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_HIDDEN = (256, 128)
PROB_CLAMP = 1e-7


class MLP:
    """Feedforward net ``layer_dims[0] -> ... -> layer_dims[-1]`` with ReLU hidden units.

    Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with a seeded
    generator, so the same ``(layer_dims, seed)`` always gives the same net.
    """

    def __init__(self, layer_dims, seed: int = 0):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer_dims {layer_dims!r}")
        self.layer_dims = dims
        rng = np.random.default_rng(seed)
        self.params = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @staticmethod
    def count_params(layer_dims) -> int:
        return sum((a + 1) * b for a, b in zip(layer_dims[:-1], layer_dims[1:]))

    def copy(self) -> "MLP":
        clone = MLP.__new__(MLP)
        clone.layer_dims = self.layer_dims
        clone.params = [p.copy() for p in self.params]
        return clone

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {X.shape[-1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite network input")
        return X

    def forward(self, X) -> np.ndarray:
        """Forward pass on a single vector or a batch of row vectors."""
        X = self._check_input(X)
        single = X.ndim == 1
        h = np.atleast_2d(X)
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    __call__ = forward

    def forward_cached(self, X):
        h = np.atleast_2d(self._check_input(X))
        acts = [h]
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out) -> list:
        """Parameter gradients given cached activations and dLoss/dOutput."""
        grads = [None] * len(self.params)
        delta = grad_out
        n_layers = len(self.params) // 2
        for i in reversed(range(n_layers)):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.params[2 * i].T) * (acts[i] > 0.0)
        return grads


class TargetNetwork:
    """Frozen parameter snapshot of an :class:`MLP` used for bootstrap targets."""

    def __init__(self, model: MLP):
        self._net = model.copy()
        self.staleness = 0

    @property
    def layer_dims(self):
        return self._net.layer_dims

    def forward(self, X):
        return self._net.forward(X)

    __call__ = forward

    def tick(self) -> None:
        self.staleness += 1

    def sync(self, model: MLP) -> "TargetNetwork":
        if model.layer_dims != self._net.layer_dims:
            raise ValueError("target and model shapes differ")
        self._net.params = [p.copy() for p in model.params]
        self.staleness = 0
        return self


def sync_target(model: MLP, target: TargetNetwork) -> TargetNetwork:
    return target.sync(model)


class Adam:
    def __init__(self, model: MLP, learning_rate: float = 0.003, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in model.params]
        self.v = [np.zeros_like(p) for p in model.params]

    def step(self, params, grads) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


# -- losses -----------------------------------------------------------------

@dataclass(frozen=True)
class Loss:
    """Per-sample loss selector.

    ``mse`` and ``weighted_topk`` regress identity outputs (optionally masked
    per output); ``cross_entropy`` and ``focal`` read a single logit output
    and a 0/1 target.
    """

    kind: str = "mse"
    k: int = 1
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("mse", "weighted_topk", "cross_entropy", "focal"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.k < 1 or self.gamma < 0:
            raise ValueError("need k >= 1 and gamma >= 0")

    @classmethod
    def mse(cls):
        return cls("mse")

    @classmethod
    def weighted_topk(cls, k: int):
        return cls("weighted_topk", k=k)

    @classmethod
    def cross_entropy(cls):
        return cls("cross_entropy")

    @classmethod
    def focal(cls, gamma: float = 2.0):
        return cls("focal", gamma=gamma)

    def per_sample(self, pred, target, mask=None):
        """Return ``(loss of each row, dLoss/dpred of each row)``."""
        pred = np.atleast_2d(pred)
        target = np.atleast_2d(np.asarray(target, dtype=float))
        if pred.shape != target.shape:
            raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
        if self.kind in ("mse", "weighted_topk"):
            if mask is None:
                mask = np.ones_like(pred)
            diff = pred - target
            if self.kind == "weighted_topk":
                if pred.shape[1] != self.k:
                    raise ValueError(f"expected {self.k} outputs, got {pred.shape[1]}")
                w = mask / np.arange(1, self.k + 1)
            else:
                w = mask
            return (w * diff * diff).sum(axis=1), 2.0 * w * diff
        if pred.shape[1] != 1:
            raise ValueError("classification losses expect one logit output")
        z = pred[:, 0]
        y = target[:, 0]
        if self.kind == "cross_entropy":
            loss = np.where(y > 0.5, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))
            p = 0.5 * (1.0 + np.tanh(0.5 * z))
            return loss, (p - y)[:, None]
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        sign = np.where(y > 0.5, 1.0, -1.0)
        p_t = np.where(y > 0.5, p, 1.0 - p)
        inside = (p_t > PROB_CLAMP) & (p_t < 1.0 - PROB_CLAMP)
        pc = np.clip(p_t, PROB_CLAMP, 1.0 - PROB_CLAMP)
        q = 1.0 - pc
        loss = -(q ** self.gamma) * np.log(pc)
        dldp = -(q ** self.gamma) / pc
        if self.gamma > 0:
            dldp = dldp + self.gamma * q ** (self.gamma - 1.0) * np.log(pc)
        grad = np.where(inside, dldp * sign * pc * q, 0.0)
        return loss, grad[:, None]

    def __call__(self, pred, target, mask=None) -> float:
        return float(np.mean(self.per_sample(pred, target, mask)[0]))


def weighted_topk_loss(pred, targets) -> float:
    """Rank-weighted squared error; only the first ``len(targets)`` ranks count."""
    pred = np.asarray(pred, dtype=float)
    targets = np.asarray(targets, dtype=float)
    J = targets.size
    if J == 0:
        raise ValueError("need at least one target rank")
    if J > pred.size:
        raise ValueError("more targets than predicted ranks")
    diff = pred[:J] - targets
    return float(np.sum(diff * diff / np.arange(1, J + 1)))


def focal_loss(prob_of_target: float, gamma: float) -> float:
    p = min(max(float(prob_of_target), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return float(-((1.0 - p) ** gamma) * np.log(p))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


# -- training ---------------------------------------------------------------

def loss_and_grads(model: MLP, X, Y, loss: Loss, mask=None):
    out, acts = model.forward_cached(X)
    per_sample, dout = loss.per_sample(out, Y, mask)
    batch = out.shape[0]
    return float(np.mean(per_sample)), model.backward(acts, dout / batch)


def train_step(model: MLP, opt: Adam, X, Y, loss: Loss, mask=None) -> float:
    """One Adam step on the mean minibatch loss; returns the loss before the update."""
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    value, grads = loss_and_grads(model, X, Y, loss, mask)
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value} ({loss.kind}, batch {X.shape[0]})")
    opt.step(model.params, grads)
    return value


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def fit_supervised(model: MLP, X, Y, loss: Loss, mask=None, epochs: int = 30,
                   batch_size: int = 128, learning_rate: float = 0.003,
                   seed: int = 0, step=train_step) -> list:
    """Shuffled minibatch Adam over fixed targets. Returns per-epoch mean losses."""
    if len(X) == 0:
        raise ValueError("empty training set")
    opt = Adam(model, learning_rate)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        losses = []
        for idx in minibatches(len(X), batch_size, rng):
            losses.append(step(model, opt, X[idx], Y[idx], loss,
                               None if mask is None else mask[idx]))
        history.append(float(np.mean(losses)))
    return history


def gradient_check(model: MLP, X, Y, loss: Loss, mask=None, step: float = 1e-5) -> float:
    """Max relative gap between backprop and central-difference gradients."""
    _, analytic = loss_and_grads(model, X, Y, loss, mask)
    worst = 0.0
    for p, g in zip(model.params, analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss(model.forward(np.atleast_2d(X)), Y, mask)
            flat[i] = orig - step
            down = loss(model.forward(np.atleast_2d(X)), Y, mask)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            rel = abs(gflat[i] - numeric) / max(1e-8, abs(gflat[i]) + abs(numeric))
            worst = max(worst, rel)
    return worst


# -- checkpoints ------------------------------------------------------------

_MAGIC = b"FXMLP"
_VERSION = 1


def dump_model(model: MLP, fh) -> None:
    dims = model.layer_dims
    fh.write(_MAGIC)
    fh.write(struct.pack("<II", _VERSION, len(dims)))
    fh.write(struct.pack(f"<{len(dims)}I", *dims))
    for p in model.params:
        fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def read_model(fh) -> MLP:
    if fh.read(len(_MAGIC)) != _MAGIC:
        raise ValueError("not a model checkpoint")
    version, n_dims = struct.unpack("<II", fh.read(8))
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
    model = MLP.__new__(MLP)
    model.layer_dims = tuple(dims)
    model.params = []
    for a, b in zip(dims[:-1], dims[1:]):
        for shape in ((a, b), (b,)):
            size = int(np.prod(shape))
            raw = fh.read(8 * size)
            model.params.append(np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape))
    return model


def save_models(models, path) -> None:
    """Write one or more networks to a single file (count header, then each net)."""
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<I", len(models)))
        for m in models:
            dump_model(m, fh)


def load_models(path) -> list:
    with Path(path).open("rb") as fh:
        (count,) = struct.unpack("<I", fh.read(4))
        return [read_model(fh) for _ in range(count)]


def model_bytes(model: MLP) -> bytes:
    buf = io.BytesIO()
    dump_model(model, buf)
    return buf.getvalue()
