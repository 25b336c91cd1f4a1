"""Closed-loop object-goal episodes on synthetic scenes.

Each episode runs as a generator that yields imagination requests (a
noise-filled crop) and receives completed crops back, so many episodes can be
stepped in lockstep while sharing one batched Euler solve.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
import torch

from .coupling import build_source
from .errors import DomainError, EmptyMask, EmptySet, UnsolvableEpisode
from .flow.sampler import euler_sample
from .mapcore import SemanticMap, apply_crop, crop_mask, crop_transform, frontier_mask, merge_back
from .planner import DistanceField, fmm_distance, step_toward, visibility_footprint
from .scenes import Scene

POLICIES = ("imagine", "frontier", "oracle")


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 500
    success_distance: float = 0.1  # meters
    expansion: float = 2.0
    n_steps: int = 96
    near_d: float = 3.0  # cells
    far_d: float = 60.0  # cells
    window: int = 9
    mode: str = "rect"
    noise_std: float = 0.01
    size: int = 32

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise DomainError("max_steps must be at least 1")
        if self.success_distance < 0:
            raise DomainError("success_distance must be non-negative")
        if not self.near_d < self.far_d:
            raise DomainError("near_d must be smaller than far_d")
        if self.n_steps < 1 or self.size < 1:
            raise DomainError("n_steps and size must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise DomainError("window must be a positive odd number")
        if self.mode not in ("rect", "fan"):
            raise DomainError(f"unknown observation mode {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Episode:
    episode_id: int
    scene_index: int
    start: tuple[int, int]
    goal: int  # category channel

    def to_dict(self) -> dict:
        return {"episode_id": self.episode_id, "scene_index": self.scene_index,
                "start": list(self.start), "goal": self.goal}

    @classmethod
    def from_dict(cls, d: dict) -> Episode:
        return cls(int(d["episode_id"]), int(d["scene_index"]), tuple(d["start"]), int(d["goal"]))


@dataclass
class EpisodeRecord:
    success: bool
    path_length: float  # meters
    shortest_length: float  # meters
    goal_distance: float  # meters, geodesic, at the end of the episode
    steps: int
    trajectory: list[tuple[int, int]] = field(default_factory=list)
    episode_id: int = -1
    replans: int = 0
    fallbacks: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trajectory"] = [list(c) for c in self.trajectory]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EpisodeRecord:
        d = dict(d)
        d["trajectory"] = [tuple(c) for c in d.get("trajectory", [])]
        return cls(**d)


# --- observation and map bookkeeping -------------------------------------------------

def step_observation(scene: SemanticMap, agent: tuple[int, int], mask: np.ndarray,
                     window: int = 9, mode: str = "rect",
                     heading: tuple[float, float] | None = None) -> np.ndarray:
    """Union of ``mask`` with the cells visible from ``agent``; returns a new mask."""
    if not scene.traversable()[agent]:
        raise DomainError(f"agent cell {agent} is not traversable")
    return np.asarray(mask, dtype=bool) | visibility_footprint(scene.shape, agent, window, mode, heading)


def observed_map(scene: SemanticMap, mask: np.ndarray) -> SemanticMap:
    """Ground truth on observed cells, zero elsewhere (perfect segmentation)."""
    return scene.replace(grid=scene.grid * mask, occupancy=scene.occupancy * mask)


def known_traversable(scene: SemanticMap, mask: np.ndarray) -> np.ndarray:
    """Unobserved cells are optimistically free; observed cells use ground truth."""
    return scene.traversable() | ~np.asarray(mask, dtype=bool)


def viewpoints(goal_cells: np.ndarray, traversable: np.ndarray) -> np.ndarray:
    """Traversable cells 8-adjacent to (or on) a goal cell."""
    g = np.pad(np.asarray(goal_cells, dtype=bool), 1)
    near = np.zeros_like(traversable, dtype=bool)
    h, w = traversable.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            near |= g[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
    return near & traversable


# --- imagination ---------------------------------------------------------------------

@dataclass(frozen=True)
class ImagineRequest:
    x0: np.ndarray  # (N_c, L, L) noise-filled crop


def prepare_imagination(observed: SemanticMap, mask: np.ndarray, cfg: EpisodeConfig,
                        rng: np.random.Generator):
    """Crop the observed map and fill unobserved crop cells with noise."""
    tf = crop_transform(mask, cfg.expansion, cfg.size)
    xp = apply_crop(observed.grid * mask, tf).astype(np.float32)
    cm = crop_mask(mask, tf)
    return build_source(xp, cm, cfg.noise_std, rng), tf


def imagine(observed: SemanticMap, mask: np.ndarray, net, cfg: EpisodeConfig,
            rng: np.random.Generator) -> SemanticMap:
    """Complete the unobserved part of ``observed``; observed cells are left untouched."""
    if not np.any(mask):
        raise EmptyMask("cannot imagine from an empty observation")
    x0, tf = prepare_imagination(observed, mask, cfg, rng)
    with torch.no_grad():
        x1 = euler_sample(net, torch.from_numpy(x0[None]), cfg.n_steps)[0].numpy()
    return merge_back(observed, x1, tf, mask)


def select_waypoint(completed: SemanticMap | np.ndarray, goal: int) -> tuple[int, int]:
    """Highest-valued cell of the goal channel; ties go to the row-major first."""
    grid = completed.grid if isinstance(completed, SemanticMap) else np.asarray(completed)
    if not 0 <= goal < grid.shape[0]:
        raise DomainError(f"goal channel {goal} out of range")
    flat = int(np.argmax(grid[goal]))
    return divmod(flat, grid.shape[2])


def should_replan(agent: tuple[int, int], g_prev: tuple[int, int] | None, near_d: float,
                  far_d: float, traversable: np.ndarray | None = None) -> bool:
    """True when the geodesic distance to the previous waypoint is < near_d or > far_d.

    Without a ``traversable`` grid the straight-line distance in cells is used.
    """
    if g_prev is None:
        return True
    if traversable is None:
        d = math.hypot(agent[0] - g_prev[0], agent[1] - g_prev[1])
    else:
        trav = np.array(traversable, dtype=bool)
        trav[g_prev] = True
        d = fmm_distance(trav, [g_prev])[agent]
    return _replan_needed(d, near_d, far_d)


def _replan_needed(d: float, near_d: float, far_d: float) -> bool:
    return d < near_d or d > far_d


# --- policies ------------------------------------------------------------------------

def _waypoint_field(trav: np.ndarray, waypoint: tuple[int, int]) -> DistanceField:
    # a waypoint inside an obstacle is still a valid planning target
    plan = trav.copy()
    plan[waypoint] = True
    return fmm_distance(plan, [waypoint])


def _nearest(field: DistanceField, cells: np.ndarray) -> tuple[int, int] | None:
    if len(cells) == 0:
        return None
    d = field.distance[cells[:, 0], cells[:, 1]]
    k = int(np.argmin(d))  # cells are row-major, so ties resolve row-major
    return None if not math.isfinite(d[k]) else (int(cells[k, 0]), int(cells[k, 1]))


def _frontier_field(occupancy_seen: np.ndarray, mask: np.ndarray, trav: np.ndarray) -> DistanceField | None:
    cells = np.argwhere(frontier_mask(occupancy_seen, mask) & trav)
    return fmm_distance(trav, cells) if len(cells) else None


def episode_process(scene: Scene, episode: Episode, cfg: EpisodeConfig, policy: str,
                    rng: np.random.Generator) -> Iterator[ImagineRequest]:
    """Generator driving one episode; its return value is the EpisodeRecord.

    For the ``imagine`` policy it yields ImagineRequest objects and expects the
    completed ``(N_c, L, L)`` crop to be sent back.
    """
    if policy not in POLICIES:
        raise DomainError(f"unknown policy {policy!r}")
    gt = scene.smap
    trav_gt = gt.traversable()
    goal_cells = gt.grid[episode.goal] > 0.5
    vp_gt = viewpoints(goal_cells, trav_gt)
    if not vp_gt.any():
        raise UnsolvableEpisode(f"episode {episode.episode_id}: goal category absent")
    dist_gt = fmm_distance(trav_gt, np.argwhere(vp_gt))
    agent = tuple(int(v) for v in episode.start)
    if not trav_gt[agent] or not math.isfinite(dist_gt[agent]):
        raise UnsolvableEpisode(f"episode {episode.episode_id}: goal unreachable from start")
    res = gt.resolution
    shortest = dist_gt[agent] * res

    mask = np.zeros(gt.shape, dtype=bool)
    heading = (0.0, 1.0)
    trajectory = [agent]
    moves = steps = replans = fallbacks = 0
    waypoint: tuple[int, int] | None = None
    success = False

    for _ in range(cfg.max_steps):
        steps += 1
        mask = step_observation(gt, agent, mask, cfg.window, cfg.mode, heading)
        seen_goal = goal_cells & mask
        if seen_goal.any() and viewpoints(seen_goal, trav_gt)[agent]:
            success = True  # stop action
            break
        trav = known_traversable(gt, mask)
        occ_seen = gt.occupancy * mask

        field = None
        if seen_goal.any():
            waypoint = None
            field = fmm_distance(trav, np.argwhere(viewpoints(seen_goal, trav)))
        elif policy == "frontier":
            field = _frontier_field(occ_seen, mask, trav)
        else:
            for _attempt in range(2):
                field = _waypoint_field(trav, waypoint) if waypoint is not None else None
                if field is None or _replan_needed(field[agent], cfg.near_d, cfg.far_d):
                    if policy == "oracle":
                        completed = gt.grid
                    else:
                        x0, tf = prepare_imagination(observed_map(gt, mask), mask, cfg, rng)
                        x1 = yield ImagineRequest(x0)
                        completed = merge_back(observed_map(gt, mask), x1, tf, mask).grid
                    replans += 1
                    waypoint = select_waypoint(completed, episode.goal)
                    field = _waypoint_field(trav, waypoint)
                    if not cfg.near_d <= field[agent] < math.inf:
                        fallbacks += 1
                        here = fmm_distance(trav, [agent])
                        waypoint = _nearest(here, np.argwhere(frontier_mask(occ_seen, mask) & trav))
                        field = _waypoint_field(trav, waypoint) if waypoint is not None else None
                if field is None:
                    break
                nxt = step_toward(field, agent)
                if nxt is not None and trav[nxt]:
                    break
                waypoint, field = None, None  # reached or blocked: choose again
        nxt = step_toward(field, agent) if field is not None else None
        if nxt is None or not trav[nxt]:
            continue
        if not trav_gt[nxt]:
            raise AssertionError(f"agent stepped into an obstacle at {nxt}")
        heading = (float(nxt[0] - agent[0]), float(nxt[1] - agent[1]))
        agent = nxt
        moves += 1
        trajectory.append(agent)

    return EpisodeRecord(
        success=success,
        path_length=moves * res,
        shortest_length=float(shortest),
        goal_distance=float(dist_gt[agent] * res),
        steps=steps,
        trajectory=trajectory,
        episode_id=episode.episode_id,
        replans=replans,
        fallbacks=fallbacks,
    )


def _velocity(net) -> Callable:
    return net if net is not None else (lambda x, t: torch.zeros_like(x))


def run_episodes(scenes: list[Scene], episodes: Iterable[Episode], cfg: EpisodeConfig,
                 policy: str = "imagine", net=None, seed: int = 0) -> list[EpisodeRecord]:
    """Step every episode in lockstep, batching their imagination requests.

    Episode ``k`` draws its noise from ``default_rng([seed, episode_id])`` so
    results do not depend on how episodes are grouped.
    """
    episodes = list(episodes)
    if policy == "imagine" and net is None:
        raise DomainError("the imagine policy needs a velocity network")
    velocity = _velocity(net)
    records: list[EpisodeRecord | None] = [None] * len(episodes)
    active: list[tuple[int, Iterator, object]] = []
    for k, ep in enumerate(episodes):
        gen = episode_process(scenes[ep.scene_index], ep, cfg, policy,
                              np.random.default_rng([seed, ep.episode_id]))
        active.append((k, gen, None))
    while active:
        pending = []
        for k, gen, reply in active:
            try:
                request = gen.send(reply) if reply is not None else next(gen)
            except StopIteration as stop:
                records[k] = stop.value
                continue
            pending.append((k, gen, request))
        if not pending:
            break
        x0 = torch.from_numpy(np.stack([r.x0 for _, _, r in pending]))
        with torch.no_grad():
            x1 = euler_sample(velocity, x0, cfg.n_steps).numpy()
        active = [(k, gen, x1[i]) for i, (k, gen, _) in enumerate(pending)]
    return [r for r in records if r is not None]


def run_episode(scene: Scene, start: tuple[int, int], goal: int, net, cfg: EpisodeConfig,
                rng: np.random.Generator | int = 0, policy: str = "imagine") -> EpisodeRecord:
    """Single-episode convenience wrapper around ``episode_process``."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    gen = episode_process(scene, Episode(0, 0, start, goal), cfg, policy, rng)
    velocity = _velocity(net)
    reply = None
    while True:
        try:
            request = gen.send(reply) if reply is not None else next(gen)
        except StopIteration as stop:
            return stop.value
        with torch.no_grad():
            reply = euler_sample(velocity, torch.from_numpy(request.x0[None]), cfg.n_steps)[0].numpy()


# --- episode sets and metrics --------------------------------------------------------

def sample_episodes(scenes: list[Scene], count: int, rng: np.random.Generator,
                    min_distance: float = 0.0, goals: Iterable[int] | None = None,
                    max_tries: int = 100) -> list[Episode]:
    """Random solvable (scene, start, goal) triples.

    The start is a free cell whose geodesic distance to the goal's nearest
    viewpoint is finite and at least ``min_distance`` cells.
    """
    allowed = None if goals is None else set(goals)
    out: list[Episode] = []
    for _ in range(count * max_tries):
        if len(out) == count:
            break
        si = int(rng.integers(len(scenes)))
        scene = scenes[si]
        present = [c for c in scene.present_categories() if allowed is None or c in allowed]
        if not present:
            continue
        goal = int(present[int(rng.integers(len(present)))])
        trav = scene.smap.traversable()
        vp = viewpoints(scene.smap.grid[goal] > 0.5, trav)
        d = fmm_distance(trav, np.argwhere(vp)).distance
        ok = np.argwhere(np.isfinite(d) & (d >= max(min_distance, 1e-9)))
        if len(ok) == 0:
            continue
        start = ok[int(rng.integers(len(ok)))]
        out.append(Episode(len(out), si, (int(start[0]), int(start[1])), goal))
    if len(out) < count:
        raise UnsolvableEpisode(f"only {len(out)} of {count} solvable episodes found")
    return out


@dataclass(frozen=True)
class Metrics:
    sr: float
    spl: float
    dts: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(records: list[EpisodeRecord], success_distance: float = 0.1) -> Metrics:
    if not records:
        raise EmptySet("no episode records")
    n = len(records)
    s = np.array([float(r.success) for r in records])
    lstar = np.array([r.shortest_length for r in records])
    lpath = np.array([r.path_length for r in records])
    denom = np.maximum(lpath, lstar)
    ratio = np.divide(lstar, denom, out=np.ones_like(lstar), where=denom > 0)
    dts = np.maximum(np.array([r.goal_distance for r in records]) - success_distance, 0.0)
    return Metrics(float(s.sum() / n), float((s * ratio).sum() / n), float(dts.sum() / n), n)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with Path(path).open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
