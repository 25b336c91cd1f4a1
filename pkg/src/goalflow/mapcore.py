"""Semantic grid maps: clustering, frontiers, and crop/resize geometry."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EmptyFrontier, EmptyMask, ShapeMismatch

OBSTACLE, FREE = 0, 1


@dataclass(frozen=True)
class SemanticMap:
    """Per-category evidence grid of shape ``(N_c, h, w)``.

    ``occupancy`` is optional and stacks the obstacle and free channels
    (``2 x h x w``); it is used by the planner, never by the flow model.
    """

    grid: np.ndarray
    resolution: float = 0.05
    occupancy: np.ndarray | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid)
        if grid.ndim != 3:
            raise ShapeMismatch(f"semantic grid must be 3-D, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ValueError("semantic grid contains non-finite values")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "grid", grid)
        if self.occupancy is not None:
            occ = np.asarray(self.occupancy)
            if occ.shape != (2, *grid.shape[1:]):
                raise ShapeMismatch(f"occupancy shape {occ.shape} does not match grid {grid.shape}")
            object.__setattr__(self, "occupancy", occ)
        if self.categories is not None:
            if len(self.categories) != grid.shape[0]:
                raise ShapeMismatch("one category name per channel is required")
            object.__setattr__(self, "categories", tuple(self.categories))

    @property
    def n_channels(self) -> int:
        return self.grid.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape[1], self.grid.shape[2]

    def traversable(self) -> np.ndarray:
        if self.occupancy is None:
            raise ValueError("map has no occupancy channels")
        return self.occupancy[FREE] > 0.5

    def replace(self, **changes) -> SemanticMap:
        values = dict(grid=self.grid, resolution=self.resolution,
                      occupancy=self.occupancy, categories=self.categories)
        values.update(changes)
        return SemanticMap(**values)


@dataclass(frozen=True)
class ObjectCluster:
    category: int
    cells: np.ndarray  # (k, 2) row-major sorted (row, col)
    centroid: tuple[float, float]

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class CropTransform:
    """Window ``[row0, row0+height) x [col0, col0+width)`` resized to ``size x size``."""

    row0: int
    col0: int
    height: int
    width: int
    size: int
    map_shape: tuple[int, int] = field(default=(0, 0))

    @property
    def scale(self) -> tuple[float, float]:
        return self.size / self.height, self.size / self.width

    @property
    def window(self) -> tuple[slice, slice]:
        return slice(self.row0, self.row0 + self.height), slice(self.col0, self.col0 + self.width)

    def to_crop(self, cell: tuple[float, float]) -> tuple[float, float]:
        sr, sc = self.scale
        return (cell[0] - self.row0 + 0.5) * sr - 0.5, (cell[1] - self.col0 + 0.5) * sc - 0.5

    def from_crop(self, cell: tuple[float, float]) -> tuple[float, float]:
        sr, sc = self.scale
        return (cell[0] + 0.5) / sr - 0.5 + self.row0, (cell[1] + 0.5) / sc - 0.5 + self.col0


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # cell-centre aligned sampling, clamped at the borders
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize over the last two axes."""
    arr = np.asarray(array)
    h, w = arr.shape[-2:]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    r0, r1, fr = _axis_weights(h, out_h)
    c0, c1, fc = _axis_weights(w, out_w)
    fr = fr.reshape(-1, 1).astype(arr.dtype if arr.dtype.kind == "f" else np.float64)
    fc = fc.astype(fr.dtype)
    top = np.take(arr, r0, axis=-2)
    bot = np.take(arr, r1, axis=-2)
    rows = top * (1 - fr) + bot * fr
    left = np.take(rows, c0, axis=-1)
    right = np.take(rows, c1, axis=-1)
    return left * (1 - fc) + right * fc


def cluster_objects(smap: SemanticMap | np.ndarray, threshold: float = 0.5) -> list[ObjectCluster]:
    """Maximal 4-connected components of above-threshold cells, per channel.

    Ordered by channel, then by each component's top-left (first raster) cell.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    grid = smap.grid if isinstance(smap, SemanticMap) else np.asarray(smap)
    clusters: list[ObjectCluster] = []
    for ch in range(grid.shape[0]):
        labels, count = kernels.label4(grid[ch] > threshold)
        if count == 0:
            continue
        rows, cols = np.nonzero(labels)
        lab = labels[rows, cols]
        order = np.argsort(lab, kind="stable")
        bounds = np.searchsorted(lab[order], np.arange(1, count + 2))
        for k in range(count):
            sel = order[bounds[k]:bounds[k + 1]]
            cells = np.stack([rows[sel], cols[sel]], axis=1)
            centroid = cells.mean(axis=0)
            clusters.append(ObjectCluster(ch, cells, (float(centroid[0]), float(centroid[1]))))
    return clusters


def frontier_mask(occupancy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    occ = np.asarray(occupancy)
    observed = np.asarray(mask, dtype=bool)
    if occ.shape[1:] != observed.shape:
        raise ShapeMismatch(f"occupancy {occ.shape} vs mask {observed.shape}")
    unseen = np.pad(~observed, 1, constant_values=False)
    near_unseen = unseen[:-2, 1:-1] | unseen[2:, 1:-1] | unseen[1:-1, :-2] | unseen[1:-1, 2:]
    return (occ[FREE] > 0.5) & observed & near_unseen


def compute_frontiers(occupancy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Observed free cells with at least one unobserved 4-neighbour, as ``(k, 2)`` row-major."""
    return np.argwhere(frontier_mask(occupancy, mask))


def nearest_frontier_direction(centroid: tuple[float, float],
                               frontiers: np.ndarray) -> tuple[tuple[int, int], np.ndarray]:
    """Closest frontier cell to ``centroid`` and the unit vector pointing at it.

    Ties go to the row-major first cell. A frontier on the centroid itself
    yields ``v = (1, 0)``.
    """
    cells = np.asarray(frontiers, dtype=np.int64).reshape(-1, 2)
    if len(cells) == 0:
        raise EmptyFrontier("no frontier cells")
    cells = cells[np.lexsort((cells[:, 1], cells[:, 0]))]
    delta = cells - np.asarray(centroid, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", delta, delta)
    k = int(np.argmin(d2))
    norm = np.sqrt(d2[k])
    v = np.array([1.0, 0.0]) if norm == 0 else delta[k] / norm
    return (int(cells[k, 0]), int(cells[k, 1])), v


def observed_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(np.any(mask, axis=1))
    if len(rows) == 0:
        raise EmptyMask("no observed cells")
    cols = np.flatnonzero(np.any(mask, axis=0))
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def crop_transform(mask: np.ndarray, expansion: float, size: int) -> CropTransform:
    if expansion < 1:
        raise ValueError("expansion factor must be >= 1")
    h, w = np.shape(mask)
    r0, r1, c0, c1 = observed_bbox(np.asarray(mask, dtype=bool))

    def expand(lo: int, hi: int, limit: int) -> tuple[int, int]:
        extent = hi - lo
        margin = int(round(extent * expansion)) - extent
        lo -= margin // 2
        hi += margin - margin // 2
        return max(lo, 0), min(hi, limit)

    r0, r1 = expand(r0, r1, h)
    c0, c1 = expand(c0, c1, w)
    return CropTransform(r0, c0, r1 - r0, c1 - c0, size, (h, w))


def apply_crop(array: np.ndarray, tf: CropTransform) -> np.ndarray:
    rs, cs = tf.window
    return resize_bilinear(np.asarray(array)[..., rs, cs], tf.size, tf.size)


def crop_mask(mask: np.ndarray, tf: CropTransform) -> np.ndarray:
    return apply_crop(np.asarray(mask, dtype=np.float64), tf) >= 0.5


def crop_region(smap: SemanticMap, mask: np.ndarray, expansion: float,
                size: int = 256) -> tuple[np.ndarray, CropTransform]:
    """Crop the observed bounding box grown by ``expansion`` and resize to ``size``."""
    if np.shape(mask) != smap.shape:
        raise ShapeMismatch(f"mask {np.shape(mask)} vs map {smap.shape}")
    tf = crop_transform(mask, expansion, size)
    return apply_crop(smap.grid, tf), tf


def merge_back(original: SemanticMap, generated: np.ndarray, tf: CropTransform,
               mask: np.ndarray) -> SemanticMap:
    """Resize ``generated`` into the crop window, writing only unobserved cells."""
    gen = np.asarray(generated)
    if gen.shape != (original.n_channels, tf.size, tf.size):
        raise ShapeMismatch(f"generated {gen.shape} does not match crop size {tf.size}")
    if np.shape(mask) != original.shape:
        raise ShapeMismatch("mask does not match the original map")
    if tf.row0 + tf.height > original.shape[0] or tf.col0 + tf.width > original.shape[1]:
        raise ShapeMismatch("crop window lies outside the original map")
    back = resize_bilinear(gen, tf.height, tf.width)
    out = original.grid.copy()
    rs, cs = tf.window
    unseen = ~np.asarray(mask, dtype=bool)[rs, cs]
    region = out[:, rs, cs]
    region[:, unseen] = back[:, unseen].astype(out.dtype)
    return original.replace(grid=out)
