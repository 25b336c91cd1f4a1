"""Data-dependent training pairs: noisy partial map -> prior-enriched full map."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeMismatch
from .mapcore import SemanticMap, apply_crop, crop_mask, crop_transform
from .planner import simulate_trajectory_mask
from .prior.field import PriorParams, build_prior_field
from .prior.matrices import PriorMatrices


@dataclass(frozen=True)
class CouplingParams:
    noise_std: float = 0.01
    prior: PriorParams = field(default_factory=PriorParams)
    window: int = 9
    mode: str = "rect"
    size: int = 256
    expansion: float = 2.0
    retries: int = 16
    use_prior: bool = True  # False reproduces the no-prior ablation (lambda = 0)

    def __post_init__(self) -> None:
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")

    @property
    def lam(self) -> float:
        return self.prior.lam if self.use_prior else 0.0


@dataclass(frozen=True)
class TrainingCoupling:
    x0: np.ndarray
    x1: np.ndarray
    mask: np.ndarray


def _check(a: np.ndarray, mask: np.ndarray) -> None:
    if a.shape[-2:] != np.shape(mask):
        raise ShapeMismatch(f"map {a.shape} vs mask {np.shape(mask)}")


def build_source(xp: np.ndarray, mask: np.ndarray, noise_std: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Observed cells copied from ``xp``; unobserved cells i.i.d. N(0, noise_std^2)."""
    _check(xp, mask)
    observed = np.asarray(mask, dtype=bool)
    noise = rng.normal(0.0, 1.0, size=xp.shape).astype(xp.dtype) * xp.dtype.type(noise_std)
    return np.where(observed, xp, noise)


def build_target(xp: np.ndarray, mask: np.ndarray, prior_field: np.ndarray, lam: float) -> np.ndarray:
    """``xp`` plus ``lam`` times the prior density on unobserved cells."""
    _check(xp, mask)
    if prior_field.shape != xp.shape:
        raise ShapeMismatch(f"prior {prior_field.shape} vs map {xp.shape}")
    unseen = ~np.asarray(mask, dtype=bool)
    return (xp + lam * (unseen * prior_field)).astype(xp.dtype)


def interpolate(x0, x1, t: float):
    """Straight-line path between the pair; exact at both ends."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t={t} outside [0, 1]")
    return (1 - t) * x0 + t * x1


def velocity_target(x0, x1):
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"{x0.shape} vs {x1.shape}")
    return x1 - x0


def make_training_sample(scene_map: SemanticMap, prior: PriorMatrices, params: CouplingParams,
                         rng: np.random.Generator) -> TrainingCoupling:
    """Trajectory mask, crop to ``size``, prior field, target, then source noise."""
    mask_full = simulate_trajectory_mask(scene_map, rng, params.window, params.mode, params.retries)
    tf = crop_transform(mask_full, params.expansion, params.size)
    mask = crop_mask(mask_full, tf)
    xp = apply_crop(scene_map.grid, tf).astype(np.float32)
    occ = apply_crop(scene_map.occupancy, tf)
    eff_res = scene_map.resolution * np.sqrt(tf.height * tf.width) / params.size
    observed = SemanticMap(xp * mask, float(eff_res), occ * mask)
    if params.lam > 0:
        p_field = build_prior_field(observed, mask, prior, params.prior, rng)
    else:
        p_field = np.zeros_like(xp, dtype=np.float64)
    x1 = build_target(xp, mask, p_field, params.lam)
    x0 = build_source(xp, mask, params.noise_std, rng)
    return TrainingCoupling(x0, x1, mask)
