"""The two learned fitter architectures: 2D U-Net + limiter, and skip MLP.

Both map a (baseline-like, spin-lock-weighted) intensity pair to a t1rho
value in ms and end in the same output limiter so predictions stay inside
the physiological range by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn

# limiter midpoint: start the regressor bias inside the pass-through band so
# every output voxel carries gradient from the first step
_REGRESSOR_BIAS = 35.0


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 2
    depth: int = 4  # encoder levels including the bottleneck
    base_channels: int = 16
    y_min: float = 10.0
    y_max: float = 100.0
    patch: tuple[int, int] = (64, 64)
    loss_mask_mode: str = "unmasked"  # or "roi_masked"

    def __post_init__(self):
        if self.loss_mask_mode not in ("unmasked", "roi_masked"):
            raise ValueError(f"unknown loss_mask_mode {self.loss_mask_mode!r}")
        if not self.y_min < self.y_max:
            raise ValueError("limiter needs y_min < y_max")
        divisor = 2 ** (self.depth - 1)
        if self.patch[0] % divisor or self.patch[1] % divisor:
            raise ValueError(f"patch {self.patch} not divisible by 2^(depth-1)={divisor}")


@dataclass(frozen=True)
class MlpConfig:
    in_features: int = 2
    width: int = 64
    hidden_blocks: int = 4
    batch_size: int = 512
    y_min: float = 10.0
    y_max: float = 100.0


def _double_conv(net, rng, cin, cout, src):
    i = net.add(nn.Conv2d(cin, cout, k=3, rng=rng), (src,))
    i = net.add(nn.BatchNorm(cout), (i,))
    i = net.add(nn.ReLU(), (i,))
    i = net.add(nn.Conv2d(cout, cout, k=3, rng=rng), (i,))
    i = net.add(nn.BatchNorm(cout), (i,))
    return net.add(nn.ReLU(), (i,))


def build_unet(cfg: UNetConfig, seed=0) -> nn.Network:
    """Encoder-decoder with concat skips, a 1x1 regressor, and the limiter."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    net = nn.Network()
    channels = [cfg.base_channels * 2**i for i in range(cfg.depth)]

    skips = []
    src = -1
    cin = cfg.in_channels
    for level, cout in enumerate(channels):
        if level > 0:
            src = net.add(nn.MaxPool2(), (src,))
        src = _double_conv(net, rng, cin, cout, src)
        cin = cout
        if level < cfg.depth - 1:
            skips.append(src)

    for level in range(cfg.depth - 2, -1, -1):
        cout = channels[level]
        src = net.add(nn.NearestUpsample2(), (src,))
        src = net.add(nn.ConcatSkip(), (src, skips[level]))
        src = _double_conv(net, rng, cin + cout, cout, src)
        cin = cout

    src = net.add(nn.Conv2d(cin, 1, k=1, rng=rng, bias_init=_REGRESSOR_BIAS), (src,))
    net.add(nn.Limiter(cfg.y_min, cfg.y_max), (src,))
    return net


def build_mlp(cfg: MlpConfig, seed=0) -> nn.Network:
    """FC-ReLU-BN blocks with additive skips between equal-width blocks."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 202]))
    net = nn.Network()
    i = net.add(nn.FullyConnected(cfg.in_features, cfg.width, rng=rng), (-1,))
    i = net.add(nn.ReLU(), (i,))
    block_out = net.add(nn.BatchNorm(cfg.width), (i,))
    for _ in range(cfg.hidden_blocks - 1):
        i = net.add(nn.FullyConnected(cfg.width, cfg.width, rng=rng), (block_out,))
        i = net.add(nn.ReLU(), (i,))
        i = net.add(nn.BatchNorm(cfg.width), (i,))
        block_out = net.add(nn.AddSkip(), (i, block_out))
    i = net.add(nn.FullyConnected(cfg.width, 1, rng=rng, bias_init=_REGRESSOR_BIAS), (block_out,))
    net.add(nn.Limiter(cfg.y_min, cfg.y_max), (i,))
    return net
