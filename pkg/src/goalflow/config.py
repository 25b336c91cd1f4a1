"""Run configuration: one JSON schema for every subcommand, with dotted overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Iterable

from .coupling import CouplingParams
from .errors import ConfigError, GoalFlowError
from .flow.net import NetConfig
from .flow.train import TrainConfig
from .navsim import EpisodeConfig
from .prior.field import PriorParams
from .scenes import SceneSpec

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "run_root": "runs",
    "workers": 1,
    "data": {
        "train_scenes": 400,
        "test_scenes": 100,
        "train_seed": 0,
        "test_seed": 1,
        "manifest": None,
    },
    "scene": {
        "size": [64, 64],
        "resolution": 0.25,
        "rooms": [3, 6],
        "min_room": 12,
        "door_width": 3,
        "jitter": 0.2,
        "max_instances": 6,
    },
    "prior": {
        "tau_d": 2.5,
        "tau_c": 0.85,
        "sigma_min": 20.0,
        "sigma_max": 50.0,
        "lam": 1500.0,
        "reference_size": 256,
        "profile": "exact",
        "noise": 0.5,
        "path": None,
    },
    "coupling": {
        "noise_std": 0.01,
        "window": 9,
        "mode": "rect",
        "size": 32,
        "expansion": 2.0,
    },
    "net": {
        "widths": [32, 64, 64, 32],
        "time_dim": 32,
        "time_hidden": 128,
        "max_frequency": 1e4,
    },
    "train": {
        "lr": 1e-3,
        "weight_decay": 0.01,
        "ema_decay": 0.999,
        "epochs": 20,
        "warmup_epochs": 2,
        "steps_per_epoch": 100,
        "batch_size": 16,
    },
    "episode": {
        "max_steps": 500,
        "success_distance": 0.1,
        "n_steps": 96,
        "near_d": 3.0,
        "far_d": 60.0,
        "count": 200,
        "min_distance": 10.0,
        "goals": None,
        "episode_seed": 7,
    },
    "eval": {
        "policy": "imagine",
        "checkpoint": None,
        "use_ema": True,
        "seeds": [0],
    },
    "ablate": {
        "n_sweep": [12, 48, 96],
        "expansion_sweep": [1.5, 2.0, 3.0],
        "checkpoints": {},
    },
}

ALIASES = {"prior.lambda": "prior.lam"}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(base: dict, patch: dict, prefix: str = "") -> None:
    for key, value in patch.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict) and key != "checkpoints":
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted!r} must be an object")
            _merge(base[key], value, dotted + ".")
        else:
            base[key] = _coerce(dotted, base[key], value)


def _coerce(key: str, default: Any, value: Any) -> Any:
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key!r} expects a boolean, got {value!r}")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key!r} expects a number, got {value!r}")
        return float(value) if isinstance(default, float) else value
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{key!r} expects a list, got {value!r}")
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{key!r} expects a string, got {value!r}")
    return value


def apply_override(data: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override in place; values parse as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    key = ALIASES.get(key.strip(), key.strip())
    patch: dict = {}
    node = patch
    parts = key.split(".")
    for part in parts[:-1]:
        node[part] = {}
        node = node[part]
    node[parts[-1]] = _parse_value(raw)
    _merge(data, patch)


class RunConfig:
    """Validated, merged configuration; build the typed parameter objects on demand."""

    def __init__(self, data: dict):
        self.data = data
        self.validate()

    @classmethod
    def load(cls, path=None, overrides: Iterable[str] = ()) -> RunConfig:
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                user = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(user, dict):
                raise ConfigError("config file must hold a JSON object")
            user = {k: v for k, v in user.items()}
            if isinstance(user.get("prior"), dict) and "lambda" in user["prior"]:
                user["prior"]["lam"] = user["prior"].pop("lambda")
            _merge(data, user)
        for item in overrides:
            apply_override(data, item)
        return cls(data)

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    def validate(self) -> None:
        try:
            self.scene_spec()
            self.prior_params()
            self.coupling_params()
            self.net_config()
            self.train_config()
            self.episode_config()
        except (GoalFlowError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if self.data["prior"]["profile"] not in ("exact", "noisy", "shuffled", "llm", "file"):
            raise ConfigError(f"unknown prior profile {self.data['prior']['profile']!r}")
        if self.data["eval"]["policy"] not in ("imagine", "frontier", "oracle"):
            raise ConfigError(f"unknown policy {self.data['eval']['policy']!r}")
        if self.data["workers"] < 1:
            raise ConfigError("workers must be at least 1")
        if self.data["episode"]["count"] < 0:
            raise ConfigError("episode.count must be non-negative")

    # typed views ------------------------------------------------------------------

    def scene_spec(self) -> SceneSpec:
        s = self.data["scene"]
        return SceneSpec(size=tuple(s["size"]), resolution=s["resolution"], rooms=tuple(s["rooms"]),
                         min_room=s["min_room"], door_width=s["door_width"], jitter=s["jitter"],
                         max_instances=s["max_instances"])

    def prior_params(self) -> PriorParams:
        p = self.data["prior"]
        lam = p["lam"] if p["lam"] > 0 else PriorParams().lam
        return PriorParams(tau_d=p["tau_d"], tau_c=p["tau_c"], sigma_min=p["sigma_min"],
                           sigma_max=p["sigma_max"], lam=lam, reference_size=p["reference_size"])

    def coupling_params(self) -> CouplingParams:
        c = self.data["coupling"]
        return CouplingParams(noise_std=c["noise_std"], prior=self.prior_params(), window=c["window"],
                              mode=c["mode"], size=c["size"], expansion=c["expansion"],
                              use_prior=self.data["prior"]["lam"] > 0)

    def net_config(self, channels: int | None = None) -> NetConfig:
        n = self.data["net"]
        return NetConfig(channels=channels or self.scene_spec().n_channels, widths=tuple(n["widths"]),
                         time_dim=n["time_dim"], time_hidden=n["time_hidden"],
                         max_frequency=n["max_frequency"])

    def train_config(self) -> TrainConfig:
        t = self.data["train"]
        return TrainConfig(**{f.name: t[f.name] for f in fields(TrainConfig) if f.name in t})

    def episode_config(self) -> EpisodeConfig:
        e, c = self.data["episode"], self.data["coupling"]
        return EpisodeConfig(max_steps=e["max_steps"], success_distance=e["success_distance"],
                             expansion=c["expansion"], n_steps=e["n_steps"], near_d=e["near_d"],
                             far_d=e["far_d"], window=c["window"], mode=c["mode"],
                             noise_std=c["noise_std"], size=c["size"])

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def echo(self, run_dir) -> Path:
        path = Path(run_dir) / "config.json"
        path.write_text(self.to_json())
        return path
