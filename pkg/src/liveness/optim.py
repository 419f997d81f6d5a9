"""Parameter-update rules. Updates are in place and deterministic given state."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError


class SGD:
    """Stochastic gradient descent with optional classical momentum.

    v <- momentum * v + g ; p <- p - lr * v
    """

    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.step_count = 0
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, params_and_grads) -> None:
        self.step_count += 1
        for key, param, grad in params_and_grads:
            if grad is None:
                continue
            if grad.shape != param.shape:
                raise ShapeError(f"{key}: grad shape {grad.shape} != param shape {param.shape}")
            if self.momentum:
                v = self._velocity.get(key)
                if v is None:
                    v = np.zeros_like(param)
                    self._velocity[key] = v
                v *= self.momentum
                v += grad
                param -= self.lr * v
            else:
                param -= self.lr * grad.astype(param.dtype, copy=False)


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params_and_grads) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for key, param, grad in params_and_grads:
            if grad is None:
                continue
            if grad.shape != param.shape:
                raise ShapeError(f"{key}: grad shape {grad.shape} != param shape {param.shape}")
            g = grad.astype(param.dtype, copy=False)
            m = self._m.get(key)
            if m is None:
                m = np.zeros_like(param)
                v = np.zeros_like(param)
                self._m[key] = m
                self._v[key] = v
            else:
                v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            param -= self.lr * mhat / (np.sqrt(vhat) + self.epsilon)


def make_optimizer(kind: str, lr: float, momentum: float = 0.9):
    if kind == "sgd":
        return SGD(lr, momentum=momentum)
    if kind == "adam":
        return Adam(lr)
    raise ShapeError(f"unknown optimizer kind: {kind!r}")
