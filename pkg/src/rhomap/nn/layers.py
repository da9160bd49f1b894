"""Layer vocabulary with hand-derived backward passes.

The set is exactly what the two fitter architectures need: 3x3/1x1
convolutions, 2x2 max pooling, nearest x2 upsampling, channel concat and
additive skips, fully connected, batch norm, ReLU, and the output limiter.
Backward passes assign parameter gradients (no accumulation across passes);
each layer instance caches what its own backward needs, so an instance
belongs to one network position.
"""

from __future__ import annotations

import numpy as np

from .tensor import Param, he_uniform

_REGISTRY = {}


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def layer_from_config(kind, config):
    if kind not in _REGISTRY:
        raise ValueError(f"unknown layer kind {kind!r}")
    return _REGISTRY[kind].from_config(config)


class Layer:
    kind = "layer"
    n_inputs = 1

    def params(self):
        return []

    def buffers(self):
        """Non-trainable state persisted in checkpoints (e.g. BN running stats)."""
        return []

    def config(self):
        return {}

    @classmethod
    def from_config(cls, config):
        return cls(**config)

    def forward(self, *xs, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _need_cache(self, cache):
        if cache is None:
            raise RuntimeError(f"{self.kind}: backward called without a prior forward")
        return cache


@register
class Conv2d(Layer):
    """2D convolution, stride 1, 'same' padding (pad = k // 2); k in {1, 3}.

    Implemented as one GEMM per kernel tap on (C, N*H*W) matrices: the only
    data movement is outer-axis transposes with long contiguous runs, which
    keeps the layer memory-bound copies cheap.
    """

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, k=3, rng=None, bias_init=0.0):
        if k not in (1, 3):
            raise ValueError("conv kernel must be 1 or 3")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.k = int(k)
        rng = rng or np.random.default_rng(0)
        fan_in = self.in_channels * self.k * self.k
        # weight layout: (out, in, k, k) flattened taps last for tap GEMMs
        self.weight = Param(
            "weight", he_uniform(rng, (self.out_channels, self.in_channels, self.k, self.k), fan_in)
        )
        self.bias = Param("bias", np.full(self.out_channels, float(bias_init)))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels, "k": self.k}

    def _weight_matrix(self):
        """(O, k*k*C) view of the weights, tap-major to match the col matrix."""
        return np.ascontiguousarray(self.weight.data.transpose(0, 2, 3, 1)).reshape(
            self.out_channels, -1
        )

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"conv2d expected (N,{self.in_channels},H,W), got {x.shape}")
        n, c, h, w = x.shape
        if self.k == 1:
            xp = x
        else:
            xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="constant")
        cols = np.empty((self.k * self.k * c, n * h * w))
        for t in range(self.k * self.k):
            i, j = divmod(t, self.k)
            tap = xp[:, :, i : i + h, j : j + w].transpose(1, 0, 2, 3)
            cols[t * c : (t + 1) * c].reshape(c, n, h, w)[:] = tap
        out = self._weight_matrix() @ cols + self.bias.data[:, None]
        self._cache = (cols, x.shape)
        return np.ascontiguousarray(
            out.reshape(self.out_channels, n, h, w).transpose(1, 0, 2, 3)
        )

    def backward(self, dy):
        cols, (n, c, h, w) = self._need_cache(self._cache)
        dy_mat = np.ascontiguousarray(dy.transpose(1, 0, 2, 3)).reshape(
            self.out_channels, n * h * w
        )
        self.bias.grad = dy_mat.sum(axis=1)
        dw_mat = dy_mat @ cols.T  # (O, k*k*C)
        self.weight.grad = np.ascontiguousarray(
            dw_mat.reshape(self.out_channels, self.k, self.k, c).transpose(0, 3, 1, 2)
        )
        dcols = self._weight_matrix().T @ dy_mat
        pad = self.k // 2
        dxp = np.zeros((c, n, h + 2 * pad, w + 2 * pad))
        for t in range(self.k * self.k):
            i, j = divmod(t, self.k)
            dxp[:, :, i : i + h, j : j + w] += dcols[t * c : (t + 1) * c].reshape(c, n, h, w)
        dx = dxp[:, :, pad : pad + h, pad : pad + w]
        return (np.ascontiguousarray(dx.transpose(1, 0, 2, 3)),)


@register
class MaxPool2(Layer):
    """2x2 max pooling, stride 2; requires even spatial dims."""

    kind = "max_pool"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        if x.ndim != 4:
            raise ValueError(f"max_pool expected 4D input, got {x.shape}")
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"max_pool needs even spatial dims, got {h}x{w}")
        windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = windows.reshape(n, c, h // 2, w // 2, 4)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return out

    def backward(self, dy):
        idx, (n, c, h, w) = self._need_cache(self._cache)
        dflat = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(dflat, idx[..., None], dy[..., None], axis=-1)
        dx = dflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (dx.reshape(n, c, h, w),)


@register
class NearestUpsample2(Layer):
    """Nearest-neighbor x2 upsampling."""

    kind = "nearest_upsample"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        if x.ndim != 4:
            raise ValueError(f"nearest_upsample expected 4D input, got {x.shape}")
        self._cache = x.shape
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, dy):
        n, c, h, w = self._need_cache(self._cache)
        return (dy.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)


@register
class ConcatSkip(Layer):
    """Channel concatenation of two feature maps with equal spatial dims."""

    kind = "concat_skip"
    n_inputs = 2

    def __init__(self):
        self._cache = None

    def forward(self, a, b, train=False):
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise ValueError(f"concat_skip spatial/batch mismatch: {a.shape} vs {b.shape}")
        self._cache = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, dy):
        c_a = self._need_cache(self._cache)
        return dy[:, :c_a], dy[:, c_a:]


@register
class AddSkip(Layer):
    """Elementwise addition of two equal-shape tensors."""

    kind = "add_skip"
    n_inputs = 2

    def __init__(self):
        self._cache = None

    def forward(self, a, b, train=False):
        if a.shape != b.shape:
            raise ValueError(f"add_skip shape mismatch: {a.shape} vs {b.shape}")
        self._cache = True
        return a + b

    def backward(self, dy):
        self._need_cache(self._cache)
        return dy, dy


@register
class FullyConnected(Layer):
    kind = "fully_connected"

    def __init__(self, in_features, out_features, rng=None, bias_init=0.0):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        rng = rng or np.random.default_rng(0)
        self.weight = Param(
            "weight", he_uniform(rng, (self.out_features, self.in_features), self.in_features)
        )
        self.bias = Param("bias", np.full(self.out_features, float(bias_init)))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"fully_connected expected (N,{self.in_features}), got {x.shape}")
        self._cache = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, dy):
        x = self._need_cache(self._cache)
        self.weight.grad = dy.T @ x
        self.bias.grad = dy.sum(axis=0)
        return (dy @ self.weight.data,)


@register
class BatchNorm(Layer):
    """Batch normalization over (N,) for 2D inputs or (N,H,W) for 4D inputs.

    Train mode normalizes with batch statistics and updates running stats;
    eval mode uses the running statistics, leaving state untouched.
    """

    kind = "batch_norm"

    def __init__(self, num_features, eps=1e-5, momentum=0.1):
        self.num_features = int(num_features)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma = Param("gamma", np.ones(self.num_features))
        self.beta = Param("beta", np.zeros(self.num_features))
        self.running_mean = np.zeros(self.num_features)
        self.running_var = np.ones(self.num_features)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def config(self):
        return {"num_features": self.num_features, "eps": self.eps, "momentum": self.momentum}

    def _axes_and_shape(self, x):
        if x.ndim == 2:
            return (0,), (1, self.num_features)
        if x.ndim == 4:
            return (0, 2, 3), (1, self.num_features, 1, 1)
        raise ValueError(f"batch_norm expected 2D or 4D input, got {x.shape}")

    def forward(self, x, train=False):
        axes, shape = self._axes_and_shape(x)
        if x.shape[1] != self.num_features:
            raise ValueError(f"batch_norm expected {self.num_features} channels, got {x.shape}")
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            n = x.size // self.num_features
            unbiased = var * n / max(n - 1, 1)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._cache = (xhat, inv_std, axes, shape, train, x.size // self.num_features)
        return self.gamma.data.reshape(shape) * xhat + self.beta.data.reshape(shape)

    def backward(self, dy):
        xhat, inv_std, axes, shape, train, n = self._need_cache(self._cache)
        self.gamma.grad = (dy * xhat).sum(axis=axes)
        self.beta.grad = dy.sum(axis=axes)
        g = self.gamma.data.reshape(shape)
        if not train:
            return (dy * g * inv_std.reshape(shape),)
        dxhat = dy * g
        term = dxhat - dxhat.mean(axis=axes, keepdims=True) - xhat * (dxhat * xhat).mean(
            axis=axes, keepdims=True
        )
        return (term * inv_std.reshape(shape),)


@register
class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, dy):
        mask = self._need_cache(self._cache)
        return (dy * mask,)


@register
class Limiter(Layer):
    """Output range limiter: ``clamp(relu(x) + y_min, y_min, y_max)``.

    Gradient is 1 exactly when the pre-activation is in the open interval
    (0, y_max - y_min) and 0 on both saturated regions.
    """

    kind = "limiter"

    def __init__(self, y_min=10.0, y_max=100.0):
        if not y_min < y_max:
            raise ValueError("limiter needs y_min < y_max")
        self.y_min = float(y_min)
        self.y_max = float(y_max)
        self._cache = None

    def config(self):
        return {"y_min": self.y_min, "y_max": self.y_max}

    def forward(self, x, train=False):
        self._cache = (x > 0) & (x < self.y_max - self.y_min)
        return np.clip(np.where(x > 0, x, 0.0) + self.y_min, self.y_min, self.y_max)

    def backward(self, dy):
        mask = self._need_cache(self._cache)
        return (dy * mask,)
