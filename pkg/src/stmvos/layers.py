"""Parameterized building blocks: convolution and residual layers."""

from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from .tensor import Tensor, conv2d, kaiming_uniform, residual_block


class Conv2d:
    """3x3 (by default) convolution with bias, Kaiming-uniform initialized."""

    def __init__(self, cin: int, cout: int, ksize: int = 3, stride: int = 1,
                 pad: int | None = None, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.pad = ksize // 2 if pad is None else pad
        fan_in = cin * ksize * ksize
        self.w = Tensor(kaiming_uniform((cout, cin, ksize, ksize), fan_in, rng), requires_grad=True)
        self.b = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def named_params(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield prefix + "/w", self.w
        yield prefix + "/b", self.b


class ResidualBlock:
    """x + conv(relu(conv(relu(x)))) with channel-preserving 3x3 convolutions."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng=rng)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng)

    def __call__(self, x: Tensor) -> Tensor:
        return residual_block(x, self.conv1.w, self.conv1.b, self.conv2.w, self.conv2.b)

    def named_params(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield from self.conv1.named_params(prefix + "/conv1")
        yield from self.conv2.named_params(prefix + "/conv2")


def collect_params(*sources) -> Dict[str, Tensor]:
    out: Dict[str, Tensor] = {}
    for src in sources:
        for name, t in src:
            out[name] = t
    return out
