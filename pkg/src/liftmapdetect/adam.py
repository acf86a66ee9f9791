"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np


class NanGradient(FloatingPointError):
    """Raised when a parameter's gradient contains NaN; the update is aborted."""

    def __init__(self, name):
        super().__init__(f"NaN gradient for parameter '{name}'; update aborted")


class Adam:
    """Per-parameter first/second moment accumulators with bias correction.

    Parameters are (name, Tensor) pairs; moments always match parameter
    shapes and the step counter advances by exactly 1 per update.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self):
        grads = {}
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if np.isnan(g).any():
                raise NanGradient(name)
            grads[name] = g
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(np.float32)

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()


def clip_global_norm(params, max_norm=1.0):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float(np.square(p.grad, dtype=np.float64).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = np.float32(max_norm / norm)
        for _, p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm
