"""Dense ReLU networks with hand-written backprop and an Adam optimizer.

Two heads are supported: ``softmax`` (action probabilities) and ``tanh``
(a scalar in (-1, 1)).  Inputs are batched as ``(batch, features)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

HIDDEN = (128, 64, 64)
HEADS = ("softmax", "tanh")


class StaleCache(RuntimeError):
    pass


@dataclass
class Cache:
    inputs: list  # input to each layer
    preacts: list  # pre-activation of each layer
    output: np.ndarray
    version: int


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Mlp:
    def __init__(self, dims, head: str, seed: int = 0, init: bool = True):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if head == "tanh" and dims[-1] != 1:
            raise ValueError("tanh head is scalar")
        self.dims = tuple(int(d) for d in dims)
        self.head = head
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        rng = np.random.default_rng(seed)
        for i, (n_in, n_out) in enumerate(zip(self.dims, self.dims[1:])):
            bound = 1.0 / np.sqrt(n_in) if init else 0.0
            if i == len(self.dims) - 2:
                bound *= 0.1  # near-uniform initial policy / near-zero value
            self.weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))
        self.m = [np.zeros_like(p) for p in self.parameters()]
        self.v = [np.zeros_like(p) for p in self.parameters()]
        self.step = 0
        self._version = 0

    @classmethod
    def build(cls, n_in: int, n_out: int, head: str, hidden=HIDDEN, seed: int = 0) -> Mlp:
        return cls((n_in, *hidden, n_out), head, seed=seed)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_in(self) -> int:
        return self.dims[0]

    def forward(self, x, return_logits: bool = False):
        """Returns ``(output, cache)``; output is probabilities or a ``(batch,)`` value."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} features, got {x.shape[1]}")
        if not np.isfinite(x).all():
            raise ValueError("non-finite input")
        inputs, preacts = [], []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            preacts.append(z)
            h = np.maximum(z, 0.0) if i < last else z
        out = softmax(h) if self.head == "softmax" else np.tanh(h[:, 0])
        cache = Cache(inputs, preacts, out, self._version)
        if single:
            out = out[0]
        return out, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: Cache, grad, wrt: str = "output") -> list[np.ndarray]:
        """Parameter gradients given dL/d(output) or, with ``wrt="logits"``,
        dL/d(final pre-activation).  Order matches :meth:`parameters`."""
        if cache.version != self._version:
            raise StaleCache("cache predates a parameter update")
        grad = np.asarray(grad, dtype=float)
        out = cache.output
        if wrt == "logits":
            dz = grad.reshape(cache.preacts[-1].shape)
        elif self.head == "softmax":
            g = grad.reshape(out.shape)
            dz = out * (g - (g * out).sum(axis=1, keepdims=True))
        else:
            dz = (grad.reshape(out.shape) * (1.0 - out ** 2))[:, None]
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            grads[2 * i] = cache.inputs[i].T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            if i:
                dz = (dz @ self.weights[i].T) * (cache.preacts[i - 1] > 0)
        return grads

    def optim_step(self, grads, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> bool:
        """Adam update in place.  Returns False (and leaves everything untouched)
        when any gradient is non-finite."""
        if not all(np.isfinite(g).all() for g in grads):
            log.warning("non-finite gradient; update refused")
            return False
        self.step += 1
        c1 = 1 - beta1 ** self.step
        c2 = 1 - beta2 ** self.step
        for p, g, m, v in zip(self.parameters(), grads, self.m, self.v):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        self._version += 1
        return True

    def copy(self) -> Mlp:
        return Mlp.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "head": self.head,
            "params": [p.ravel().tolist() for p in self.parameters()],
            "adam_m": [a.ravel().tolist() for a in self.m],
            "adam_v": [a.ravel().tolist() for a in self.v],
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Mlp:
        net = cls(doc["dims"], doc["head"], init=False)
        shapes = [p.shape for p in net.parameters()]
        if len(doc["params"]) != len(shapes):
            raise ValueError("checkpoint layer count does not match dims")
        arrays = [np.asarray(a, dtype=float).reshape(s) for a, s in zip(doc["params"], shapes)]
        net.weights = arrays[0::2]
        net.biases = arrays[1::2]
        net.m = [np.asarray(a, dtype=float).reshape(s) for a, s in zip(doc.get("adam_m", []), shapes)] \
            or [np.zeros(s) for s in shapes]
        net.v = [np.asarray(a, dtype=float).reshape(s) for a, s in zip(doc.get("adam_v", []), shapes)] \
            or [np.zeros(s) for s in shapes]
        net.step = int(doc.get("step", 0))
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> Mlp:
        return cls.from_dict(json.loads(Path(path).read_text()))
