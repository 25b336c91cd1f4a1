"""Checkpoints: one GOALT1 tensor per parameter plus a JSON header."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import ParseError
from ..tensorio import load_tensor, save_tensor
from .net import NetConfig, VelocityNet

FORMAT = "goalflow-checkpoint-1"


def save_checkpoint(directory, net: VelocityNet, ema: VelocityNet | None = None,
                    step: int = 0, extra: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for kind, model in (("raw", net), ("ema", ema)):
        if model is None:
            continue
        (out / kind).mkdir(exist_ok=True)
        for name, p in model.state_dict().items():
            rel = f"{kind}/{name}.goalt"
            save_tensor(out / rel, p.detach().cpu().numpy())
            entries.append({"name": name, "kind": kind, "shape": list(p.shape), "file": rel})
    header = {"format": FORMAT, "step": step, "ema": ema is not None,
              "net": net.config.to_dict(), "tensors": entries, "extra": extra or {}}
    (out / "header.json").write_text(json.dumps(header, indent=2))
    return out


def read_header(directory) -> dict:
    path = Path(directory) / "header.json"
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read checkpoint header {path}: {exc}") from exc
    if header.get("format") != FORMAT:
        raise ParseError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    return header


def load_checkpoint(directory, use_ema: bool = True) -> VelocityNet:
    """Rebuild the network with EMA weights (or raw weights) from ``directory``."""
    header = read_header(directory)
    kind = "ema" if use_ema and header["ema"] else "raw"
    net = VelocityNet(NetConfig.from_dict(header["net"]))
    state = {}
    for entry in header["tensors"]:
        if entry["kind"] != kind:
            continue
        arr = load_tensor(Path(directory) / entry["file"])
        if list(arr.shape) != entry["shape"]:
            raise ParseError(f"tensor {entry['name']} has shape {arr.shape}, header says {entry['shape']}")
        state[entry["name"]] = torch.from_numpy(np.ascontiguousarray(arr))
    missing = set(net.state_dict()) - set(state)
    if missing:
        raise ParseError(f"checkpoint lacks tensors: {sorted(missing)}")
    net.load_state_dict(state)
    net.eval()
    return net
