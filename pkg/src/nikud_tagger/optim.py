"""Adam and plain SGD over named numpy arrays (updated in place)."""

from __future__ import annotations

import numpy as np


class SGD:
    def __init__(self, lr: float):
        self.lr = lr
        self.t = 0

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray], names) -> None:
        self.t += 1
        for k in names:
            weights[k] -= self.lr * grads[k]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def state_scalars(self) -> dict:
        return {"t": self.t}

    def load_state(self, scalars: dict, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(scalars["t"])


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray], names) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k in names:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            weights[k] -= scale * m / (np.sqrt(v) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def state_scalars(self) -> dict:
        return {"t": self.t}

    def load_state(self, scalars: dict, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(scalars["t"])
        self.m = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("v/")}


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {name!r}")
