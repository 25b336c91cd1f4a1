"""Forward Euler integration of the learned velocity field."""
from __future__ import annotations

import torch

from ..errors import DomainError, NonFiniteState

DEFAULT_STEPS = 96


@torch.no_grad()
def euler_sample(velocity, x0: torch.Tensor, n: int = DEFAULT_STEPS) -> torch.Tensor:
    """Integrate ``dx/dt = velocity(x, t)`` from ``x0`` with ``n`` uniform steps.

    The field is evaluated at ``t_k = k / n`` for ``k = 1..n``. ``velocity``
    may be a network or any callable with the same signature.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    x = x0.clone()
    h = 1.0 / n
    for k in range(1, n + 1):
        x = x + h * velocity(x, k / n)
        if not torch.isfinite(x).all():
            raise NonFiniteState(f"state became non-finite at step {k} of {n}")
    return x
