"""PNG renders: category composites and goal-channel heatmaps with trajectories."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .mapcore import SemanticMap


def load_colormap(path=None) -> dict:
    if path is None:
        text = resources.files("goalflow").joinpath("data/colormap.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _category_colors(names, cmap: dict) -> np.ndarray:
    table = cmap["categories"]
    return np.array([table.get(n, cmap["fallback"]) for n in names], dtype=np.float64)


def composite(smap: SemanticMap, mask: np.ndarray | None = None, cmap: dict | None = None) -> np.ndarray:
    """RGB uint8 image: obstacles, then each category blended by its evidence."""
    cmap = cmap or load_colormap()
    h, w = smap.shape
    img = np.empty((h, w, 3))
    img[:] = cmap["background"]
    if smap.occupancy is not None:
        img[smap.occupancy[0] > 0.5] = cmap["obstacle"]
    names = smap.categories or tuple(f"c{i}" for i in range(smap.n_channels))
    colors = _category_colors(names, cmap)
    for ch in range(smap.n_channels):
        a = np.clip(smap.grid[ch], 0.0, 1.0)[..., None]
        img = img * (1 - a) + colors[ch] * a
    if mask is not None:
        img[~np.asarray(mask, dtype=bool)] *= cmap["unobserved_dim"]
    return np.clip(img, 0, 255).astype(np.uint8)


def heatmap(channel: np.ndarray) -> np.ndarray:
    """Goal-channel evidence mapped to a white-to-dark-red ramp, normalized to its max."""
    c = np.asarray(channel, dtype=np.float64)
    top = c.max()
    v = np.clip(c / top, 0.0, 1.0) if top > 0 else np.zeros_like(c)
    ramp = np.array([[255, 255, 255], [255, 170, 60], [150, 0, 0]], dtype=np.float64)
    lo = np.minimum(v * 2, 1.0)[..., None]
    hi = np.clip(v * 2 - 1, 0.0, 1.0)[..., None]
    img = ramp[0] * (1 - lo) + ramp[1] * lo
    img = img * (1 - hi) + ramp[2] * hi
    return img.astype(np.uint8)


def overlay(img: np.ndarray, trajectory=None, waypoint=None, cmap: dict | None = None) -> np.ndarray:
    cmap = cmap or load_colormap()
    out = img.copy()
    if trajectory:
        for r, c in trajectory:
            out[r, c] = cmap["trajectory"]
        out[trajectory[0][0], trajectory[0][1]] = cmap["start"]
    if waypoint is not None:
        out[waypoint[0], waypoint[1]] = cmap["waypoint"]
    return out


def save_png(path, img: np.ndarray, scale: int = 6) -> Path:
    """Write an 8-bit RGB PNG, upscaled with nearest-neighbour blocks."""
    big = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    Image.fromarray(big, mode="RGB").save(path)
    return Path(path)


def render_episode(path, smap: SemanticMap, goal: int, trajectory=None, waypoint=None,
                   mask=None, scale: int = 6) -> Path:
    """Side by side: category composite and goal-channel heatmap, both with the path."""
    cmap = load_colormap()
    left = overlay(composite(smap, mask, cmap), trajectory, waypoint, cmap)
    right = overlay(heatmap(smap.grid[goal]), trajectory, waypoint, cmap)
    gap = np.full((left.shape[0], 2, 3), 255, dtype=np.uint8)
    return save_png(path, np.concatenate([left, gap, right], axis=1), scale)
