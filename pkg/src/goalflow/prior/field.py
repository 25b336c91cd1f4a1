"""Frontier-directed Gaussian prior fields built from pairwise co-occurrence matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..mapcore import SemanticMap, cluster_objects, compute_frontiers, nearest_frontier_direction
from .matrices import PriorMatrices


@dataclass(frozen=True)
class PriorParams:
    """Thresholds and spreads of the prior; defaults are the published values.

    ``sigma_min``/``sigma_max`` are in cells of a ``reference_size`` canvas.
    When the field is rasterized on a smaller canvas the widths shrink in
    proportion and the density is expressed per reference cell, so ``lam``
    keeps its meaning at any working resolution. ``reference_size=None``
    treats the widths as plain grid cells.
    """

    tau_d: float = 2.5
    tau_c: float = 0.85
    sigma_min: float = 20.0
    sigma_max: float = 50.0
    lam: float = 1500.0
    reference_size: int | None = None
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.sigma_min <= self.sigma_max:
            raise DomainError("need 0 < sigma_min <= sigma_max")
        if not 0.0 <= self.tau_c <= 1.0:
            raise DomainError("tau_c must lie in [0, 1]")
        if self.lam < 0:
            raise DomainError("lam must be non-negative")


def candidate_set(i: int, prior: PriorMatrices, params: PriorParams) -> list[int]:
    """Categories ``j != i`` that are close enough or confident enough to co-occur with ``i``."""
    d, c = prior.D[i], prior.C[i]
    hits = (d <= params.tau_d) | (c >= params.tau_c)
    hits[i] = False
    return [int(j) for j in np.flatnonzero(hits)]


def confidence_to_sigma(c: float, params: PriorParams) -> float:
    if not 0.0 <= c <= 1.0:
        raise DomainError(f"confidence {c} outside [0, 1]")
    return params.sigma_min * c + params.sigma_max * (1.0 - c)


def predicted_centroid(mu: tuple[float, float], distance: float, v: np.ndarray,
                       resolution: float) -> tuple[float, float]:
    step = distance / resolution
    return mu[0] + step * float(v[0]), mu[1] + step * float(v[1])


def rasterize_gaussian(mu: tuple[float, float], sigma: float, h: int, w: int) -> np.ndarray:
    """Normalized isotropic Gaussian sampled at cell centres (cell index coordinates)."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    gr = np.exp(-((np.arange(h) - mu[0]) ** 2) / (2 * sigma * sigma))
    gc = np.exp(-((np.arange(w) - mu[1]) ** 2) / (2 * sigma * sigma))
    return np.outer(gr, gc) / (2 * math.pi * sigma * sigma)


def build_prior_field(partial: SemanticMap, mask: np.ndarray, prior: PriorMatrices,
                      params: PriorParams, rng: np.random.Generator) -> np.ndarray:
    """Stack of per-category prior densities for the unobserved part of ``partial``.

    Each observed object draws one co-occurring category uniformly from its
    candidate set and drops a Gaussian on the ray to its nearest frontier,
    ``D[i, j]`` meters out. Objects without candidates add nothing; with no
    frontier at all the field is zero.
    """
    n_c, h, w = partial.grid.shape
    field = np.zeros((n_c, h, w), dtype=np.float64)
    if partial.occupancy is None:
        raise ValueError("prior construction needs the map's occupancy channels")
    observed = np.asarray(mask, dtype=bool)
    frontiers = compute_frontiers(partial.occupancy, observed)
    if len(frontiers) == 0:
        return field
    scale = 1.0 if params.reference_size is None else max(h, w) / params.reference_size
    for obj in cluster_objects(partial.grid * observed, params.threshold):
        cands = candidate_set(obj.category, prior, params)
        if not cands:
            continue
        j = cands[int(rng.integers(len(cands)))]
        d = prior.D[obj.category, j]
        if not math.isfinite(d):
            continue
        _, v = nearest_frontier_direction(obj.centroid, frontiers)
        mu = predicted_centroid(obj.centroid, d, v, partial.resolution)
        sigma = confidence_to_sigma(prior.C[obj.category, j], params) * scale
        field[j] += scale * scale * rasterize_gaussian(mu, sigma, h, w)
    return field
