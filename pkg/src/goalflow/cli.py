"""``goalflow`` command line: scenes, priors, training, sampling, evaluation, ablations."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import RunConfig
from .errors import ConfigError, EmptySet, GoalFlowError, ParseError
from .experiment import evaluate, train_model
from .flow.checkpoint import load_checkpoint, save_checkpoint
from .flow.net import parameter_summary
from .flow.sampler import euler_sample
from .mapcore import apply_crop, merge_back
from .navsim import compute_metrics, observed_map, prepare_imagination, sample_episodes, write_jsonl
from .planner import simulate_trajectory_mask
from .prior.llm import LLMConfig, parse_llm_responses, query_llm
from .prior.matrices import load_prior_matrices, save_prior_matrices
from .render import composite, render_episode, save_png
from .scenes import export_ground_truth_priors, generate_scene, load_scene, save_scene
from .tensorio import load_tensor, save_tensor

log = logging.getLogger("goalflow")


# --- shared plumbing -----------------------------------------------------------------

def make_run_dir(cfg: RunConfig, command: str, out: str | None) -> Path:
    if out:
        run_dir = Path(out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        run_dir = Path(cfg["run_root"]) / f"{command}-{stamp}-{os.getpid()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.echo(run_dir)
    return run_dir


def scene_sets(cfg: RunConfig):
    """Train and test scenes, from a manifest when configured, otherwise regenerated."""
    manifest = cfg["data"]["manifest"]
    if manifest:
        try:
            entries = json.loads(Path(manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read scene manifest {manifest}: {exc}") from exc
        root = Path(manifest).parent
        return ([load_scene(root / p) for p in entries.get("train", [])],
                [load_scene(root / p) for p in entries.get("test", [])])
    spec, d = cfg.scene_spec(), cfg["data"]
    train = [generate_scene(spec, np.random.default_rng([d["train_seed"], i])) for i in range(d["train_scenes"])]
    test = [generate_scene(spec, np.random.default_rng([d["test_seed"], i])) for i in range(d["test_scenes"])]
    return train, test


def resolve_prior(cfg: RunConfig):
    p = cfg["prior"]
    if p["path"]:
        return load_prior_matrices(p["path"])
    if p["profile"] in ("llm", "file"):
        raise ConfigError("prior.path is required for the llm and file profiles (run gen-prior first)")
    return export_ground_truth_priors(cfg.scene_spec(), p["profile"], np.random.default_rng(cfg["seed"]), p["noise"])


def episodes_for(cfg: RunConfig, scenes):
    e = cfg["episode"]
    if e["count"] == 0:
        raise EmptySet("episode.count is 0; nothing to evaluate")
    return sample_episodes(scenes, e["count"], np.random.default_rng(e["episode_seed"]),
                           min_distance=e["min_distance"], goals=e["goals"])


def load_net(path: str | None, use_ema: bool):
    if not path:
        raise ConfigError("a checkpoint is required (eval.checkpoint or --checkpoint)")
    return load_checkpoint(path, use_ema=use_ema)


# --- subcommands ---------------------------------------------------------------------

def cmd_gen_scenes(cfg: RunConfig, run_dir: Path, args) -> dict:
    spec, d = cfg.scene_spec(), cfg["data"]
    manifest: dict[str, list[str]] = {"train": [], "test": []}
    for split, seed, count in (("train", d["train_seed"], d["train_scenes"]),
                               ("test", d["test_seed"], d["test_scenes"])):
        (run_dir / split).mkdir(exist_ok=True)
        for i in range(count):
            scene = generate_scene(spec, np.random.default_rng([seed, i]))
            rel = f"{split}/scene_{i:05d}"
            save_scene(run_dir / rel, scene, spec)
            manifest[split].append(rel)
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return {"manifest": str(run_dir / "manifest.json"), "train": d["train_scenes"], "test": d["test_scenes"]}


def cmd_gen_prior(cfg: RunConfig, run_dir: Path, args) -> dict:
    p = cfg["prior"]
    spec = cfg.scene_spec()
    out = run_dir / "prior.json"
    if p["profile"] == "llm":
        llm = LLMConfig(cache_dir=str(run_dir / "llm_cache")).resolved()
        raw = query_llm(list(spec.categories), llm)
        prior, missing = parse_llm_responses(raw, list(spec.categories))
        (run_dir / "llm_raw.json").write_text(json.dumps(raw, indent=1))
        save_prior_matrices(out, prior)
        return {"prior": str(out), "missing_pairs": [list(m) for m in missing]}
    prior = resolve_prior(cfg)
    save_prior_matrices(out, prior)
    return {"prior": str(out), "profile": p["profile"]}


def cmd_train(cfg: RunConfig, run_dir: Path, args) -> dict:
    train, _ = scene_sets(cfg)
    prior = resolve_prior(cfg)
    losses = []

    def on_step(step: int, loss: float) -> None:
        losses.append({"step": step, "loss": loss})

    result = train_model(train, prior, cfg.coupling_params(), cfg.net_config(), cfg.train_config(),
                         seed=cfg["seed"], workers=cfg["workers"], on_step=on_step)
    ckpt = save_checkpoint(run_dir / "checkpoint", result.state.net, result.state.ema, result.state.step,
                           extra={"seconds": result.seconds, "couplings": result.couplings})
    write_jsonl(run_dir / "loss.jsonl", losses)
    log.info(parameter_summary(result.state.net))
    return {"checkpoint": str(ckpt), "steps": result.state.step, "couplings": result.couplings,
            "final_loss": float(np.mean([r["loss"] for r in losses[-50:]])) if losses else None,
            "seconds": round(result.seconds, 1)}


def _oracle_velocity(x1: torch.Tensor, x0: torch.Tensor):
    target = x1 - x0
    return lambda x, t: target


def cmd_sample(cfg: RunConfig, run_dir: Path, args) -> dict:
    scene = load_scene(args.map)
    gt = scene.smap
    if args.mask:
        mask = load_tensor(args.mask) > 0.5
        if mask.shape != gt.shape:
            raise ConfigError(f"mask shape {mask.shape} does not match map {gt.shape}")
    else:
        mask = simulate_trajectory_mask(gt, np.random.default_rng(cfg["seed"]), cfg["coupling"]["window"])
    if not mask.any():
        raise EmptySet("the observation mask is empty")
    observed = observed_map(gt, mask)
    ecfg = cfg.episode_config()
    net = None if args.oracle else load_net(args.checkpoint or cfg["eval"]["checkpoint"], not args.raw)
    outputs = []
    save_png(run_dir / "observed.png", composite(observed, mask))
    for k in range(args.samples):
        rng = np.random.default_rng([cfg["seed"], k])
        x0, tf = prepare_imagination(observed, mask, ecfg, rng)
        x0t = torch.from_numpy(x0[None])
        if args.oracle:
            target = torch.from_numpy(apply_crop(gt.grid, tf).astype(np.float32)[None])
            velocity = _oracle_velocity(target, x0t)
        else:
            velocity = net
        with torch.no_grad():
            x1 = euler_sample(velocity, x0t, ecfg.n_steps)[0].numpy()
        completed = merge_back(observed, x1, tf, mask)
        stem = run_dir / f"sample_{k:02d}"
        save_tensor(stem.with_suffix(".goalt"), completed.grid)
        save_png(stem.with_suffix(".png"), composite(completed.replace(grid=np.clip(completed.grid, 0, 1)), None))
        outputs.append(str(stem.with_suffix(".goalt")))
    save_tensor(run_dir / "mask.goalt", mask.astype(np.float32))
    return {"samples": outputs, "observed_fraction": float(mask.mean())}


def _evaluate_once(cfg: RunConfig, scenes, episodes, net, policy: str, seed: int, ecfg=None):
    records = evaluate(scenes, episodes, ecfg or cfg.episode_config(), policy, net, seed, cfg["workers"])
    return records, compute_metrics(records, cfg["episode"]["success_distance"])


def cmd_eval(cfg: RunConfig, run_dir: Path, args) -> dict:
    _, test = scene_sets(cfg)
    episodes = episodes_for(cfg, test)
    policy = cfg["eval"]["policy"]
    net = load_net(args.checkpoint or cfg["eval"]["checkpoint"], cfg["eval"]["use_ema"]) \
        if policy == "imagine" else None
    per_seed = {}
    for seed in cfg["eval"]["seeds"]:
        records, metrics = _evaluate_once(cfg, test, episodes, net, policy, seed)
        per_seed[str(seed)] = metrics.to_dict()
        write_jsonl(run_dir / f"episodes_seed{seed}.jsonl", [r.to_dict() for r in records])
    for rec in records[:args.renders]:
        ep = episodes[[e.episode_id for e in episodes].index(rec.episode_id)]
        render_episode(run_dir / f"episode_{rec.episode_id:04d}.png", test[ep.scene_index].smap, ep.goal,
                       rec.trajectory)
    srs = [m["sr"] for m in per_seed.values()]
    summary = {"policy": policy, "episodes": len(episodes), "per_seed": per_seed,
               "sr_mean": float(np.mean(srs)), "sr_std": float(np.std(srs))}
    (run_dir / "metrics.json").write_text(json.dumps(summary, indent=2))
    return summary


def cmd_ablate(cfg: RunConfig, run_dir: Path, args) -> dict:
    train, test = scene_sets(cfg)
    episodes = episodes_for(cfg, test)
    seed = cfg["eval"]["seeds"][0]
    ckpts = dict(cfg["ablate"]["checkpoints"])
    for name, use_prior in (("prior", True), ("no_prior", False)):
        if name not in ckpts:
            data = json.loads(cfg.to_json())
            if not use_prior:
                data["prior"]["lam"] = 0.0
            variant = RunConfig(data)
            result = train_model(train, resolve_prior(variant), variant.coupling_params(), variant.net_config(),
                                 variant.train_config(), seed=cfg["seed"], workers=cfg["workers"])
            ckpts[name] = str(save_checkpoint(run_dir / f"checkpoint_{name}", result.state.net,
                                              result.state.ema, result.state.step))
    rows = []
    base = cfg.episode_config()
    for name in ("prior", "no_prior"):
        net = load_checkpoint(ckpts[name], use_ema=cfg["eval"]["use_ema"])
        _, m = _evaluate_once(cfg, test, episodes, net, "imagine", seed, base)
        rows.append({"variant": name, "n_steps": base.n_steps, "expansion": base.expansion, **m.to_dict()})
    net = load_checkpoint(ckpts["prior"], use_ema=cfg["eval"]["use_ema"])
    for n in cfg["ablate"]["n_sweep"]:
        _, m = _evaluate_once(cfg, test, episodes, net, "imagine", seed, replace(base, n_steps=n))
        rows.append({"variant": "n_sweep", "n_steps": n, "expansion": base.expansion, **m.to_dict()})
    for eps in cfg["ablate"]["expansion_sweep"]:
        _, m = _evaluate_once(cfg, test, episodes, net, "imagine", seed, replace(base, expansion=eps))
        rows.append({"variant": "expansion_sweep", "n_steps": base.n_steps, "expansion": eps, **m.to_dict()})
    _, m = _evaluate_once(cfg, test, episodes, None, "frontier", seed, base)
    rows.append({"variant": "frontier", "n_steps": 0, "expansion": base.expansion, **m.to_dict()})
    (run_dir / "ablation.json").write_text(json.dumps(rows, indent=2))
    lines = ["| variant | n | eps | SR | SPL | DTS |", "|---|---|---|---|---|---|"]
    lines += [f"| {r['variant']} | {r['n_steps']} | {r['expansion']} | {r['sr']:.3f} | {r['spl']:.3f} | {r['dts']:.3f} |"
              for r in rows]
    (run_dir / "ablation.md").write_text("\n".join(lines) + "\n")
    return {"rows": rows}


COMMANDS = {
    "gen-scenes": cmd_gen_scenes,
    "gen-prior": cmd_gen_prior,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalflow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"goalflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted override, e.g. prior.lambda=1500 (repeatable)")
        p.add_argument("--out", help="run directory (default: timestamped under run_root)")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("sample", "eval"):
            p.add_argument("--checkpoint", help="checkpoint directory")
        if name == "sample":
            p.add_argument("--map", required=True, help="scene path (without suffix) written by gen-scenes")
            p.add_argument("--mask", help="GOALT1 observation mask; simulated when omitted")
            p.add_argument("--samples", type=int, default=1, help="number of independent completions")
            p.add_argument("--oracle", action="store_true", help="use the ground-truth velocity instead of a net")
            p.add_argument("--raw", action="store_true", help="use raw instead of EMA weights")
        if name == "eval":
            p.add_argument("--renders", type=int, default=4, help="episodes to render as PNG")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        overrides = list(args.overrides)
        if args.workers is not None:
            overrides.append(f"workers={args.workers}")
        cfg = RunConfig.load(args.config, overrides)
    except ConfigError as exc:
        return _fail(2, exc)
    try:
        run_dir = make_run_dir(cfg, args.command, args.out)
        result = COMMANDS[args.command](cfg, run_dir, args)
        result = {"command": args.command, "run_dir": str(run_dir), **result}
        (run_dir / "result.json").write_text(json.dumps(result, indent=2))
        print(json.dumps(result))
        return 0
    except ConfigError as exc:
        return _fail(2, exc)
    except (GoalFlowError, OSError, ValueError) as exc:
        return _fail(3, exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
