"""Training and evaluation harness shared by the CLI and the benchmark tests."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import torch

from .coupling import CouplingParams, TrainingCoupling, make_training_sample
from .errors import NoFreeSpace, Unreachable
from .flow.net import NetConfig
from .flow.train import TrainConfig, TrainState, backward_and_step
from .navsim import Episode, EpisodeConfig, EpisodeRecord, run_episodes
from .prior.matrices import PriorMatrices
from .scenes import Scene

log = logging.getLogger(__name__)


def sample_coupling(scenes: list[Scene], prior: PriorMatrices, params: CouplingParams,
                    seed: int, index: int) -> TrainingCoupling:
    """Coupling number ``index``; its rng depends only on ``(seed, index)``."""
    rng = np.random.default_rng([seed, index])
    for _ in range(params.retries):
        scene = scenes[int(rng.integers(len(scenes)))]
        try:
            return make_training_sample(scene.smap, prior, params, rng)
        except (NoFreeSpace, Unreachable):
            continue
    raise Unreachable(f"coupling {index}: no usable scene in {params.retries} draws")


def _coupling_chunk(args) -> list[TrainingCoupling]:
    scenes, prior, params, seed, lo, hi = args
    return [sample_coupling(scenes, prior, params, seed, i) for i in range(lo, hi)]


def coupling_stream(scenes: list[Scene], prior: PriorMatrices, params: CouplingParams,
                    seed: int, start: int = 0, workers: int = 1,
                    chunk: int = 64) -> Iterator[TrainingCoupling]:
    """Endless, ordered stream of fresh couplings.

    With ``workers > 1`` chunks are built in worker processes with at most
    ``workers`` chunks in flight; the order and content do not depend on the
    worker count.
    """
    index = start
    if workers <= 1:
        while True:
            yield sample_coupling(scenes, prior, params, seed, index)
            index += 1
    with ProcessPoolExecutor(max_workers=workers) as pool:
        inflight = []
        while True:
            while len(inflight) < workers:
                inflight.append(pool.submit(_coupling_chunk, (scenes, prior, params, seed, index, index + chunk)))
                index += chunk
            yield from inflight.pop(0).result()


def batches(stream: Iterator[TrainingCoupling], size: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    while True:
        items = [next(stream) for _ in range(size)]
        yield np.stack([c.x0 for c in items]), np.stack([c.x1 for c in items])


@dataclass
class TrainResult:
    state: TrainState
    losses: list[float]
    seconds: float
    couplings: int


def train_model(scenes: list[Scene], prior: PriorMatrices, params: CouplingParams,
                net_cfg: NetConfig, train_cfg: TrainConfig, seed: int = 0, workers: int = 1,
                on_step: Callable[[int, float], None] | None = None) -> TrainResult:
    """Run ``train_cfg.total_steps`` optimizer steps on freshly sampled couplings."""
    torch.manual_seed(seed)
    state = TrainState.create(net_cfg, train_cfg, seed)
    stream = coupling_stream(scenes, prior, params, seed, workers=workers)
    losses: list[float] = []
    t0 = time.perf_counter()
    for step, (x0, x1) in zip(range(train_cfg.total_steps), batches(stream, train_cfg.batch_size)):
        loss = backward_and_step(state, torch.from_numpy(x0), torch.from_numpy(x1))
        losses.append(loss)
        if on_step is not None:
            on_step(step, loss)
        if step % max(train_cfg.steps_per_epoch, 1) == 0:
            log.info("step %d loss %.5f lr %.2e", step, loss, state.lr)
    stream.close()
    return TrainResult(state, losses, time.perf_counter() - t0,
                       train_cfg.total_steps * train_cfg.batch_size)


def _eval_shard(args) -> list[EpisodeRecord]:
    scenes, episodes, cfg, policy, net, seed = args
    torch.set_num_threads(1)
    return run_episodes(scenes, episodes, cfg, policy, net, seed)


def evaluate(scenes: list[Scene], episodes: list[Episode], cfg: EpisodeConfig, policy: str,
             net=None, seed: int = 0, workers: int = 1) -> list[EpisodeRecord]:
    """Run all episodes, optionally sharded over worker processes."""
    if net is not None:
        net.eval()
    if workers <= 1 or len(episodes) < 2:
        return run_episodes(scenes, episodes, cfg, policy, net, seed)
    shards = [episodes[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_eval_shard, [(scenes, s, cfg, policy, net, seed) for s in shards]))
    by_id = {r.episode_id: r for part in parts for r in part}
    return [by_id[e.episode_id] for e in episodes]
