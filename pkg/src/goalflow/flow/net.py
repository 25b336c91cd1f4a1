"""Time-conditioned convolutional velocity network."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class NetConfig:
    channels: int = 8
    widths: tuple[int, int, int, int] = (32, 64, 64, 32)
    time_dim: int = 32
    time_hidden: int = 128
    max_frequency: float = 1e4

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> NetConfig:
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d)


def time_embedding(t: torch.Tensor, dim: int, max_frequency: float = 1e4) -> torch.Tensor:
    """Sinusoidal features of ``t`` with frequencies log-spaced over 1..max_frequency."""
    half = dim // 2
    freqs = torch.logspace(0.0, math.log10(max_frequency), half, dtype=t.dtype, device=t.device)
    angles = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class VelocityNet(nn.Module):
    """Encoder-decoder predicting the map-space velocity at time ``t``.

    Four 3x3 hidden convolutions (the second halves the resolution, the third
    is dilated), each modulated by a per-channel scale and shift computed from
    the time embedding; the decoder upsamples, concatenates the first-layer
    features and the raw input, and a zero-initialized 3x3 convolution emits
    the velocity.
    """

    def __init__(self, config: NetConfig = NetConfig()):
        super().__init__()
        self.config = config
        c, (w0, w1, w2, w3) = config.channels, config.widths
        self.conv1 = nn.Conv2d(c, w0, 3, padding=1)
        self.conv2 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(w1, w2, 3, padding=2, dilation=2)
        self.conv4 = nn.Conv2d(w2, w3, 3, padding=1)
        self.out = nn.Conv2d(w3 + w0 + c, c, 3, padding=1)
        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_dim, config.time_hidden),
            nn.SiLU(),
            nn.Linear(config.time_hidden, 2 * sum(config.widths)),
        )
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x: torch.Tensor, t: torch.Tensor | float) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.config.channels:
            raise ShapeMismatch(f"expected (B, {self.config.channels}, H, W), got {tuple(x.shape)}")
        if not torch.is_tensor(t):
            t = torch.full((x.shape[0],), float(t), dtype=x.dtype, device=x.device)
        elif t.dim() == 0:
            t = t.expand(x.shape[0])
        film = self.time_mlp(time_embedding(t.to(x.dtype), self.config.time_dim, self.config.max_frequency))
        mods = torch.split(film, [2 * w for w in self.config.widths], dim=1)

        def mod(h: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
            scale, shift = m.chunk(2, dim=1)
            return F.silu(h * (1 + scale[:, :, None, None]) + shift[:, :, None, None])

        h1 = mod(self.conv1(x), mods[0])
        h = mod(self.conv2(h1), mods[1])
        h = mod(self.conv3(h), mods[2])
        h = mod(self.conv4(h), mods[3])
        h = F.interpolate(h, size=x.shape[-2:], mode="nearest")
        return self.out(torch.cat([h, h1, x], dim=1))



def parameter_summary(net: VelocityNet) -> str:
    n = net.num_parameters()
    return f"VelocityNet widths={net.config.widths} params={n} ({n / 1e3:.1f}k)"
