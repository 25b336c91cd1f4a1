"""Fast-marching distance fields, descent paths, and trajectory visibility masks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NoFreeSpace, SourceBlocked, Unreachable
from .mapcore import SemanticMap

# row-major neighbour order doubles as the tie-break rule
_NB8 = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
_SQRT2 = math.sqrt(2.0)
_NB4 = [(-1, 0), (0, -1), (0, 1), (1, 0)]


@dataclass(frozen=True)
class DistanceField:
    distance: np.ndarray  # cell units, +inf where unreachable or blocked
    sources: np.ndarray  # (k, 2)
    traversable: np.ndarray

    def __getitem__(self, cell: tuple[int, int]) -> float:
        return float(self.distance[cell[0], cell[1]])


def fmm_distance(traversable: np.ndarray, sources) -> DistanceField:
    """Geodesic distance from ``sources`` over ``traversable`` cells.

    Multi-stencil first-order upwind scheme: each update takes the better of
    the axis-aligned and the 45-degree rotated stencil, so the field never
    exceeds the 8-neighbour Dijkstra distance and stays within a cell of the
    Euclidean distance in open space. Diagonal information does not leak
    between two blocked orthogonal cells.
    """
    trav = np.asarray(traversable, dtype=bool)
    src = np.asarray(sources, dtype=np.intp).reshape(-1, 2)
    if len(src) == 0:
        raise ValueError("at least one source cell is required")
    h, w = trav.shape
    inside = (src[:, 0] >= 0) & (src[:, 0] < h) & (src[:, 1] >= 0) & (src[:, 1] < w)
    if not inside.all():
        raise SourceBlocked("source outside the grid")
    if not trav[src[:, 0], src[:, 1]].all():
        raise SourceBlocked("every source must be traversable")
    return DistanceField(kernels.fmm(trav, src), src, trav)


def _diag_ok(trav: np.ndarray, r: int, c: int, dr: int, dc: int) -> bool:
    return bool(trav[r + dr, c] and trav[r, c + dc])


def extract_path(field: DistanceField, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Strictly descending 8-neighbour walk from ``start`` to a source.

    Among the lower neighbours, each step takes the one minimizing step length
    plus remaining distance, which keeps the walk off zigzags that a plain
    steepest-drop rule produces next to obstacles.
    """
    dist, trav = field.distance, field.traversable
    h, w = dist.shape
    r, c = int(start[0]), int(start[1])
    if not math.isfinite(dist[r, c]):
        raise Unreachable(f"{(r, c)} cannot reach any source")
    path = [(r, c)]
    while dist[r, c] > 0:
        best, best_d = None, math.inf
        for dr, dc in _NB8:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w) or not trav[rr, cc]:
                continue
            if dr and dc and not _diag_ok(trav, r, c, dr, dc):
                continue
            if dist[rr, cc] >= dist[r, c]:
                continue
            cost = dist[rr, cc] + (_SQRT2 if dr and dc else 1.0)
            if cost < best_d:
                best, best_d = (rr, cc), cost
        if best is None or len(path) > h * w:
            raise Unreachable(f"descent stalled at {(r, c)}")
        r, c = best
        path.append(best)
    return path


def step_toward(field: DistanceField, cell: tuple[int, int]) -> tuple[int, int] | None:
    """Best strictly-descending 4-neighbour of ``cell``, or None at a source or dead end."""
    dist, trav = field.distance, field.traversable
    h, w = dist.shape
    r, c = cell
    best, best_d = None, dist[r, c]
    for dr, dc in _NB4:
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and trav[rr, cc] and dist[rr, cc] < best_d:
            best, best_d = (rr, cc), dist[rr, cc]
    return best


def visibility_footprint(shape: tuple[int, int], cell: tuple[int, int], window: int,
                         mode: str = "rect", heading: tuple[float, float] | None = None,
                         fan_range: float | None = None) -> np.ndarray:
    """Cells seen from ``cell``: a clipped ``window x window`` box, or a 90-degree fan.

    The fan points along ``heading`` with radius ``fan_range`` (default
    ``window - 1``) and always includes the agent's own 3x3 neighbourhood.
    """
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    r, c = cell
    if mode == "rect":
        k = window // 2
        out[max(r - k, 0):r + k + 1, max(c - k, 0):c + k + 1] = True
        return out
    if mode != "fan":
        raise ValueError(f"unknown observation mode {mode!r}")
    reach = float(window - 1) if fan_range is None else float(fan_range)
    hr, hc = heading if heading is not None else (0.0, 1.0)
    norm = math.hypot(hr, hc) or 1.0
    hr, hc = hr / norm, hc / norm
    k = int(math.ceil(reach))
    r0, r1, c0, c1 = max(r - k, 0), min(r + k + 1, h), max(c - k, 0), min(c + k + 1, w)
    rr, cc = np.mgrid[r0:r1, c0:c1]
    dr, dc = rr - r, cc - c
    dist = np.hypot(dr, dc)
    cos = np.where(dist > 0, (dr * hr + dc * hc) / np.maximum(dist, 1e-12), 1.0)
    out[r0:r1, c0:c1] = (dist <= reach) & (cos >= math.cos(math.pi / 4))
    out[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = True
    return out


def path_headings(path: list[tuple[int, int]]) -> list[tuple[float, float]]:
    if len(path) == 1:
        return [(0.0, 1.0)]
    steps = [(b[0] - a[0], b[1] - a[1]) for a, b in zip(path[:-1], path[1:])]
    return [(float(dr), float(dc)) for dr, dc in steps + [steps[-1]]]


def sample_free_pair(traversable: np.ndarray, rng: np.random.Generator) -> tuple[tuple[int, int], tuple[int, int]]:
    free = np.argwhere(traversable)
    if len(free) < 2:
        raise NoFreeSpace("fewer than two free cells")
    i, j = rng.choice(len(free), size=2, replace=False)
    return tuple(int(v) for v in free[i]), tuple(int(v) for v in free[j])


def simulate_trajectory_mask(smap: SemanticMap | np.ndarray, rng: np.random.Generator,
                             window: int = 9, mode: str = "rect",
                             retries: int = 16) -> np.ndarray:
    """Visibility mask swept along an FMM path between two random free cells."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd number")
    trav = smap.traversable() if isinstance(smap, SemanticMap) else np.asarray(smap, dtype=bool)
    for _ in range(retries):
        start, goal = sample_free_pair(trav, rng)
        field = fmm_distance(trav, [goal])
        if not math.isfinite(field[start]):
            continue
        path = extract_path(field, start)
        return trajectory_mask(trav.shape, path, window, mode)
    raise Unreachable(f"no connected free pair found in {retries} draws")


def trajectory_mask(shape: tuple[int, int], path: list[tuple[int, int]], window: int,
                    mode: str = "rect") -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if mode == "rect":
        k = window // 2
        for r, c in path:
            mask[max(r - k, 0):r + k + 1, max(c - k, 0):c + k + 1] = True
        return mask
    for cell, heading in zip(path, path_headings(path)):
        mask |= visibility_footprint(shape, cell, window, mode, heading)
    return mask
