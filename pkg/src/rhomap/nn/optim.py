"""Adam and RMSProp with decoupled weight decay and exponential LR decay.

Both optimizers step on the :class:`Param` list of a network. The learning
rate schedule is multiplicative: :meth:`decay_lr` applies ``gamma`` once per
decay event, and the training loop decides the event granularity (per epoch
by default).
"""

from __future__ import annotations

import numpy as np


class _OptimizerBase:
    kind = "base"

    def __init__(self, params, lr=1e-3, weight_decay=0.0, decay_gamma=0.9):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = float(lr)
        self.initial_lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.decay_gamma = float(decay_gamma)
        self.step_count = 0

    def decay_lr(self, n_events: int = 1):
        self.lr *= self.decay_gamma**n_events

    def state_scalars(self):
        return {
            "kind": self.kind,
            "lr": self.lr,
            "initial_lr": self.initial_lr,
            "weight_decay": self.weight_decay,
            "decay_gamma": self.decay_gamma,
            "step_count": self.step_count,
        }

    def _decay(self, p):
        if self.weight_decay:
            p.data -= self.lr * self.weight_decay * p.data


class Adam(_OptimizerBase):
    """Bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8)."""

    kind = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, **kw):
        super().__init__(params, lr=lr, **kw)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g.shape != p.data.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {p.data.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g**2
            m_hat = self.m[i] / (1 - self.beta1**t)
            v_hat = self.v[i] / (1 - self.beta2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            self._decay(p)


class RMSProp(_OptimizerBase):
    """RMSProp (alpha=0.99, eps=1e-8) with decoupled weight decay."""

    kind = "rmsprop"

    def __init__(self, params, lr=1e-3, alpha=0.99, eps=1e-8, **kw):
        super().__init__(params, lr=lr, **kw)
        self.alpha, self.eps = alpha, eps
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g.shape != p.data.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {p.data.shape}")
            self.v[i] = self.alpha * self.v[i] + (1 - self.alpha) * g**2
            p.data -= self.lr * g / (np.sqrt(self.v[i]) + self.eps)
            self._decay(p)


def make_optimizer(kind, params, **kw):
    if kind == "adam":
        return Adam(params, **kw)
    if kind == "rmsprop":
        return RMSProp(params, **kw)
    raise ValueError(f"unknown optimizer kind {kind!r}")
