"""Central finite-difference check of the flow-matching gradients."""
from __future__ import annotations

import numpy as np
import torch
from torch.func import functional_call, vmap

from .train import fm_loss


def relative_errors(net, x0: torch.Tensor, x1: torch.Tensor, t: torch.Tensor,
                    eps: float = 1e-4, chunk: int = 512, floor: float = 1e-8) -> dict[str, np.ndarray]:
    """Per-parameter ``|fd - autograd| / max(|fd|, |autograd|, floor)``.

    Perturbations of one tensor are evaluated ``chunk`` at a time under vmap,
    so every entry of every parameter is checked. Run in float64.
    """
    params = {k: v.detach() for k, v in net.named_parameters()}
    loss = fm_loss(net, x0, x1, t)
    grads = dict(zip(params, torch.autograd.grad(loss, list(net.parameters()))))

    out: dict[str, np.ndarray] = {}
    for name, base in params.items():
        n = base.numel()
        fd = torch.empty(n, dtype=base.dtype)

        def loss_with(p: torch.Tensor) -> torch.Tensor:
            swapped = dict(params)
            swapped[name] = p
            return fm_loss(lambda x, tt: functional_call(net, swapped, (x, tt)), x0, x1, t)

        batched = vmap(loss_with)
        with torch.no_grad():
            for lo in range(0, n, chunk):
                idx = torch.arange(lo, min(lo + chunk, n))
                delta = torch.zeros(len(idx), n, dtype=base.dtype)
                delta[torch.arange(len(idx)), idx] = eps
                delta = delta.reshape(len(idx), *base.shape)
                fd[idx] = (batched(base + delta) - batched(base - delta)) / (2 * eps)
        g = grads[name].reshape(-1)
        denom = torch.maximum(torch.maximum(fd.abs(), g.abs()), torch.tensor(floor, dtype=base.dtype))
        out[name] = ((fd - g).abs() / denom).numpy()
    return out
