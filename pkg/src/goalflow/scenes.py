"""Synthetic indoor scenes: BSP room layouts with anchor/satellite object placement."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import GenerationFailed
from .mapcore import SemanticMap
from .prior.matrices import PriorMatrices
from .tensorio import load_tensor, save_tensor

CATEGORIES = ("table", "chair", "sofa", "tv", "bed", "cabinet", "toilet", "sink")

# anchor -> satellite: (typical distance in meters, co-occurrence probability).
# Distances exceed the default 1 m view radius, so a seen anchor says
# something about a satellite that is not yet in view.
RELATIONS = {
    ("table", "chair"): (2.0, 0.95),
    ("sofa", "tv"): (3.0, 0.9),
    ("bed", "cabinet"): (2.5, 0.9),
    ("toilet", "sink"): (2.0, 0.95),
}

ROOM_TYPES = {
    "dining": ("table",),
    "living": ("sofa",),
    "bedroom": ("bed",),
    "bathroom": ("toilet",),
}

SIZES = {
    "table": (3, 4), "chair": (2, 2), "sofa": (2, 5), "tv": (2, 3),
    "bed": (4, 5), "cabinet": (2, 3), "toilet": (2, 2), "sink": (2, 2),
}

FAR_DISTANCE = 8.0


@dataclass(frozen=True)
class SceneSpec:
    size: tuple[int, int] = (64, 64)
    resolution: float = 0.25
    rooms: tuple[int, int] = (3, 6)
    min_room: int = 12
    door_width: int = 3
    categories: tuple[str, ...] = CATEGORIES
    relations: dict = field(default_factory=lambda: dict(RELATIONS))
    room_types: dict = field(default_factory=lambda: dict(ROOM_TYPES))
    sizes: dict = field(default_factory=lambda: dict(SIZES))
    jitter: float = 0.2
    max_instances: int = 6
    satellites_in_room: bool = True
    retries: int = 20

    def __post_init__(self) -> None:
        if self.rooms[0] < 1 or self.rooms[0] > self.rooms[1]:
            raise ValueError("room count range must satisfy 1 <= lo <= hi")
        names = set(self.categories)
        for a, b in self.relations:
            if a not in names or b not in names:
                raise ValueError(f"relation {a}->{b} names an unknown category")

    @property
    def n_channels(self) -> int:
        return len(self.categories)

    def distance_matrix(self) -> np.ndarray:
        n = self.n_channels
        D = np.full((n, n), FAR_DISTANCE)
        np.fill_diagonal(D, 0.0)
        for (a, b), (d, _) in self.relations.items():
            i, j = self.categories.index(a), self.categories.index(b)
            D[i, j] = D[j, i] = d
        return D

    def cooccurrence_matrix(self) -> np.ndarray:
        n = self.n_channels
        P = np.zeros((n, n))
        for (a, b), (_, p) in self.relations.items():
            i, j = self.categories.index(a), self.categories.index(b)
            P[i, j] = P[j, i] = p
        return P

    def to_dict(self) -> dict:
        d = asdict(self)
        d["relations"] = [[a, b, v[0], v[1]] for (a, b), v in self.relations.items()]
        return d

    @classmethod
    def from_dict(cls, payload: dict) -> SceneSpec:
        d = dict(payload)
        if "relations" in d and isinstance(d["relations"], list):
            d["relations"] = {(a, b): (float(dist), float(p)) for a, b, dist, p in d["relations"]}
        for key in ("size", "rooms", "categories"):
            if key in d:
                d[key] = tuple(d[key])
        if "room_types" in d:
            d["room_types"] = {k: tuple(v) for k, v in d["room_types"].items()}
        if "sizes" in d:
            d["sizes"] = {k: tuple(v) for k, v in d["sizes"].items()}
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Instance:
    category: int
    box: tuple[int, int, int, int]  # r0, r1, c0, c1 (exclusive ends)
    anchor: int | None = None  # index of the anchor instance this one was placed around

    @property
    def centroid(self) -> tuple[float, float]:
        r0, r1, c0, c1 = self.box
        return (r0 + r1 - 1) / 2, (c0 + c1 - 1) / 2


@dataclass
class Scene:
    smap: SemanticMap
    instances: list[Instance]
    rooms: list[tuple[int, int, int, int]]
    room_types: list[str]

    def counts(self) -> np.ndarray:
        out = np.zeros(self.smap.n_channels, dtype=int)
        for inst in self.instances:
            out[inst.category] += 1
        return out

    def present_categories(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.counts())]


def _split_rooms(spec: SceneSpec, walls: np.ndarray, rng: np.random.Generator,
                 target: int) -> list[tuple[int, int, int, int]]:
    h, w = spec.size
    rooms = [(1, h - 1, 1, w - 1)]
    while len(rooms) < target:
        order = sorted(range(len(rooms)),
                       key=lambda k: -(rooms[k][1] - rooms[k][0]) * (rooms[k][3] - rooms[k][2]))
        for k in order:
            r0, r1, c0, c1 = rooms[k]
            vertical = (c1 - c0) >= (r1 - r0)
            lo, hi = (c0, c1) if vertical else (r0, r1)
            if hi - lo < 2 * spec.min_room + 1:
                continue
            cut = int(rng.integers(lo + spec.min_room, hi - spec.min_room))
            span = (r0, r1) if vertical else (c0, c1)
            door = int(rng.integers(span[0], span[1] - spec.door_width + 1))
            if vertical:
                walls[r0:r1, cut] = True
                walls[door:door + spec.door_width, cut] = False
                rooms[k:k + 1] = [(r0, r1, c0, cut), (r0, r1, cut + 1, c1)]
            else:
                walls[cut, c0:c1] = True
                walls[cut, door:door + spec.door_width] = False
                rooms[k:k + 1] = [(r0, cut, c0, c1), (cut + 1, r1, c0, c1)]
            break
        else:
            break
    return rooms


def _connected(free: np.ndarray) -> bool:
    _, count = kernels.label4(free)
    return count == 1


def _try_place(spec: SceneSpec, cat: str, center: tuple[float, float], occupied: np.ndarray,
               rng: np.random.Generator, room: tuple[int, int, int, int] | None) -> tuple[int, int, int, int] | None:
    lo, hi = spec.sizes.get(cat, (2, 2))
    bh, bw = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
    r0 = int(round(center[0] - (bh - 1) / 2))
    c0 = int(round(center[1] - (bw - 1) / 2))
    r1, c1 = r0 + bh, c0 + bw
    h, w = occupied.shape
    if room is not None:
        rr0, rr1, cc0, cc1 = room
        if r0 < rr0 + 1 or c0 < cc0 + 1 or r1 > rr1 - 1 or c1 > cc1 - 1:
            return None
    if r0 < 1 or c0 < 1 or r1 > h - 1 or c1 > w - 1:
        return None
    if occupied[r0:r1, c0:c1].any():
        return None
    trial = occupied.copy()
    trial[r0:r1, c0:c1] = True
    if not _connected(~trial):
        return None
    return r0, r1, c0, c1


def generate_scene(spec: SceneSpec, rng: np.random.Generator) -> Scene:
    """One ground-truth scene; free space is a single 4-connected component."""
    for _ in range(spec.retries):
        scene = _generate_once(spec, rng)
        if scene is not None:
            return scene
    raise GenerationFailed(f"could not satisfy the scene spec in {spec.retries} attempts")


def _generate_once(spec: SceneSpec, rng: np.random.Generator) -> Scene | None:
    h, w = spec.size
    walls = np.zeros((h, w), dtype=bool)
    walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
    target = int(rng.integers(spec.rooms[0], spec.rooms[1] + 1))
    rooms = _split_rooms(spec, walls, rng, target)
    if len(rooms) < spec.rooms[0] or not _connected(~walls):
        return None

    types = list(spec.room_types)
    deck: list[str] = []
    while len(deck) < len(rooms):
        deck.extend(rng.permutation(types).tolist())
    room_types = deck[:len(rooms)]

    cats = spec.categories
    D, P = spec.distance_matrix(), spec.cooccurrence_matrix()
    occupied = walls.copy()
    grid = np.zeros((len(cats), h, w), dtype=np.float32)
    instances: list[Instance] = []
    counts = np.zeros(len(cats), dtype=int)

    def commit(ci: int, box, anchor=None) -> int:
        r0, r1, c0, c1 = box
        occupied[r0:r1, c0:c1] = True
        grid[ci, r0:r1, c0:c1] = 1.0
        instances.append(Instance(ci, box, anchor))
        counts[ci] += 1
        return len(instances) - 1

    for room, rtype in zip(rooms, room_types):
        for anchor_name in spec.room_types[rtype]:
            ai = cats.index(anchor_name)
            if counts[ai] >= spec.max_instances:
                continue
            rr0, rr1, cc0, cc1 = room
            box = None
            for _ in range(30):
                center = (rng.uniform(rr0 + 2, rr1 - 3), rng.uniform(cc0 + 2, cc1 - 3))
                box = _try_place(spec, anchor_name, center, occupied, rng, room)
                if box is not None:
                    break
            if box is None:
                continue
            a_idx = commit(ai, box)
            a_center = instances[a_idx].centroid
            for sj in range(len(cats)):
                if sj == ai or P[ai, sj] <= 0 or counts[sj] >= spec.max_instances:
                    continue
                if rng.random() >= P[ai, sj]:
                    continue
                for _ in range(30):
                    dist = max(rng.normal(D[ai, sj], spec.jitter), 0.0) / spec.resolution
                    theta = rng.uniform(0, 2 * math.pi)
                    center = (a_center[0] + dist * math.sin(theta), a_center[1] + dist * math.cos(theta))
                    box = _try_place(spec, cats[sj], center, occupied, rng,
                                     room if spec.satellites_in_room else None)
                    if box is not None:
                        commit(sj, box, a_idx)
                        break

    free = ~occupied
    occupancy = np.stack([occupied, free]).astype(np.float32)
    smap = SemanticMap(grid, spec.resolution, occupancy, cats)
    return Scene(smap, instances, rooms, room_types)


def export_ground_truth_priors(spec: SceneSpec, profile: str = "exact",
                               rng: np.random.Generator | None = None,
                               noise: float = 0.5) -> PriorMatrices:
    """Stand-in for LLM answers built from the generator's own distance table.

    ``exact``: true distances, confidence 1 for co-occurring pairs and 0 elsewhere.
    ``noisy``: distances perturbed by N(0, noise^2) meters (clipped at 0).
    ``shuffled``: categories relabelled by a derangement (rows and columns alike),
    so the prior stays confident but names the wrong partners.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    D = spec.distance_matrix()
    C = (spec.cooccurrence_matrix() > 0).astype(np.float64)
    np.fill_diagonal(C, 1.0)
    n = spec.n_channels
    if profile == "exact":
        pass
    elif profile == "noisy":
        e = np.triu(rng.normal(0.0, noise, size=(n, n)), 1)
        D = np.maximum(D + e + e.T, 0.0)
        np.fill_diagonal(D, 0.0)
    elif profile == "shuffled":
        while True:
            perm = rng.permutation(n)
            if n < 2 or not np.any(perm == np.arange(n)):
                break
        D, C = D[perm][:, perm], C[perm][:, perm]
    else:
        raise ValueError(f"unknown prior profile {profile!r}")
    return PriorMatrices(spec.categories, D, C).symmetrized()


def save_scene(path: str | os.PathLike, scene: Scene, spec: SceneSpec) -> None:
    """``<path>.goalt`` holds semantic + occupancy channels; ``<path>.json`` the sidecar."""
    base = Path(path)
    stacked = np.concatenate([scene.smap.grid, scene.smap.occupancy], axis=0)
    save_tensor(base.with_suffix(".goalt"), stacked)
    sidecar = {
        "categories": list(scene.smap.categories),
        "resolution": scene.smap.resolution,
        "instances": [{"category": scene.smap.categories[i.category], "box": list(i.box),
                       "anchor": i.anchor} for i in scene.instances],
        "rooms": [list(r) for r in scene.rooms],
        "room_types": scene.room_types,
        "spec_hash": spec.digest(),
    }
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))


def load_scene(path: str | os.PathLike) -> Scene:
    base = Path(path)
    stacked = load_tensor(base.with_suffix(".goalt"))
    meta = json.loads(base.with_suffix(".json").read_text())
    cats = tuple(meta["categories"])
    n = len(cats)
    smap = SemanticMap(stacked[:n], float(meta["resolution"]), stacked[n:n + 2], cats)
    instances = [Instance(cats.index(i["category"]), tuple(i["box"]), i["anchor"]) for i in meta["instances"]]
    return Scene(smap, instances, [tuple(r) for r in meta["rooms"]], list(meta["room_types"]))
