"""Flow-matching objective, optimizer schedule, and EMA bookkeeping."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..errors import DomainError, NonFiniteGradient
from .net import NetConfig, VelocityNet


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1.5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    ema_decay: float = 0.999
    epochs: int = 20
    warmup_epochs: int = 2
    steps_per_epoch: int = 100
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.steps_per_epoch < 1 or self.epochs < 1 or self.batch_size < 1:
            raise DomainError("lr, epochs, steps_per_epoch and batch_size must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise DomainError("ema_decay must lie in [0, 1]")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise DomainError("warmup_epochs must lie in [0, epochs]")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.steps_per_epoch

    def to_dict(self) -> dict:
        return asdict(self)


def learning_rate(cfg: TrainConfig, step: int) -> float:
    """Linear warmup to ``cfg.lr``, then cosine decay to zero at ``total_steps``."""
    warm, total = cfg.warmup_steps, cfg.total_steps
    if step < warm:
        return cfg.lr * (step + 1) / warm
    span = max(total - warm, 1)
    progress = min((step - warm) / span, 1.0)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def fm_loss(net, x0: torch.Tensor, x1: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
    """Mean squared error between ``x1 - x0`` and the predicted velocity at ``x_t``."""
    tb = t.to(x0.dtype).reshape(-1, *([1] * (x0.dim() - 1)))
    xt = (1 - tb) * x0 + tb * x1
    return torch.mean(((x1 - x0) - net(xt, t.to(x0.dtype))) ** 2)


def sample_times(batch: int, generator: torch.Generator, dtype=torch.float32) -> torch.Tensor:
    return torch.rand(batch, generator=generator, dtype=dtype)


class TrainState:
    """Weights, EMA shadow, AdamW moments, and the step counter."""

    def __init__(self, net: VelocityNet, cfg: TrainConfig = TrainConfig(), seed: int = 0):
        self.net = net
        self.cfg = cfg
        self.ema = copy.deepcopy(net)
        for p in self.ema.parameters():
            p.requires_grad_(False)
        self.optimizer = torch.optim.AdamW(net.parameters(), lr=learning_rate(cfg, 0),
                                           betas=cfg.betas, weight_decay=cfg.weight_decay)
        self.step = 0
        self.generator = torch.Generator().manual_seed(seed)

    @classmethod
    def create(cls, net_cfg: NetConfig, cfg: TrainConfig = TrainConfig(), seed: int = 0) -> TrainState:
        torch.manual_seed(seed)
        return cls(VelocityNet(net_cfg), cfg, seed)

    @property
    def lr(self) -> float:
        return learning_rate(self.cfg, self.step)

    def update_ema(self) -> None:
        d = self.cfg.ema_decay
        with torch.no_grad():
            for shadow, p in zip(self.ema.parameters(), self.net.parameters()):
                shadow.mul_(d).add_(p, alpha=1.0 - d)


def backward_and_step(state: TrainState, x0, x1, t: torch.Tensor | None = None) -> float:
    """One AdamW step on the batch-mean loss; returns the loss before the update.

    Raises NonFiniteGradient without touching the weights when any gradient
    entry is NaN or infinite.
    """
    x0 = torch.as_tensor(np.asarray(x0) if not torch.is_tensor(x0) else x0)
    x1 = torch.as_tensor(np.asarray(x1) if not torch.is_tensor(x1) else x1)
    if t is None:
        t = sample_times(x0.shape[0], state.generator, x0.dtype)
    state.net.train()
    state.optimizer.zero_grad(set_to_none=True)
    loss = fm_loss(state.net, x0, x1, t)
    loss.backward()
    for name, p in state.net.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            state.optimizer.zero_grad(set_to_none=True)
            raise NonFiniteGradient(f"non-finite gradient in {name} at step {state.step}")
    for group in state.optimizer.param_groups:
        group["lr"] = state.lr
    state.optimizer.step()
    state.update_ema()
    state.step += 1
    return float(loss.detach())
