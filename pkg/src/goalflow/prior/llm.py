"""Chat-completions client for co-occurrence priors, with an on-disk response cache.

The endpoint is provider agnostic: any HTTP service accepting the common
``{"model", "messages"}`` JSON body and answering with
``choices[0].message.content`` works. URL and key come from
``GOALFLOW_LLM_URL`` / ``GOALFLOW_LLM_KEY`` unless given explicitly.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import httpx
import numpy as np

from ..errors import ConfigError, NetworkError, ParseError
from .matrices import PriorMatrices

log = logging.getLogger(__name__)

PROMPT_VERSION = "v2"

_BLOCK = re.compile(r"qu(?:e)?ri(?:e)?d\s+object\s*[:=\-]\s*\**\s*(?P<name>[^\n*]+)", re.I)
_DIST = re.compile(r"distance\s*\**\s*[:=]\s*\**\s*(?P<v>[-+]?\d+(?:\.\d+)?)", re.I)
_CONF = re.compile(r"confidence\s*\**\s*[:=]\s*\**\s*(?P<v>[-+]?\d+(?:\.\d+)?)", re.I)


@dataclass
class LLMConfig:
    url: str | None = None
    api_key: str | None = None
    model: str = "gpt-4"
    max_concurrency: int = 2
    retries: int = 3
    backoff: float = 1.0
    timeout: float = 120.0
    temperature: float = 0.0
    cache_dir: str | None = None
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    def resolved(self) -> LLMConfig:
        url = self.url or os.environ.get("GOALFLOW_LLM_URL")
        key = self.api_key or os.environ.get("GOALFLOW_LLM_KEY")
        if not url:
            raise ConfigError("no LLM endpoint: set GOALFLOW_LLM_URL or pass a url")
        return LLMConfig(url, key, self.model, self.max_concurrency, self.retries, self.backoff,
                         self.timeout, self.temperature, self.cache_dir, self.transport)


def _template(name: str) -> str:
    return resources.files(__package__).joinpath("prompts", name).read_text()


def build_prompt(central: str, categories: list[str]) -> list[dict[str, str]]:
    user = _template("user.txt").format(categories=", ".join(categories), central=central)
    return [{"role": "system", "content": _template("system.txt").strip()},
            {"role": "user", "content": user}]


def _normalize(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", " ", name.lower()).strip()


def parse_response_text(text: str, categories: list[str]) -> tuple[dict[str, tuple[float, float]], list[str]]:
    """Pull ``name -> (distance, confidence)`` out of one labeled response.

    Prose between blocks is ignored. Blocks naming an unknown object, or
    missing either number, are reported in the second return value.
    """
    lookup = {_normalize(c): c for c in categories}
    lookup.update({_normalize(c).replace(" ", ""): c for c in categories})
    found: dict[str, tuple[float, float]] = {}
    problems: list[str] = []
    heads = list(_BLOCK.finditer(text))
    for k, head in enumerate(heads):
        body = text[head.end(): heads[k + 1].start() if k + 1 < len(heads) else len(text)]
        raw_name = _normalize(head.group("name"))
        name = lookup.get(raw_name) or lookup.get(raw_name.replace(" ", ""))
        if name is None:
            problems.append(f"unknown object {head.group('name').strip()!r}")
            continue
        d, c = _DIST.search(body), _CONF.search(body)
        if d is None or c is None:
            problems.append(f"{name}: missing distance or confidence")
            continue
        found[name] = (float(d.group("v")), float(c.group("v")))
    return found, problems


def parse_llm_responses(raw: dict[str, str], categories: list[str]) -> tuple[PriorMatrices, list[tuple[str, str]]]:
    """Assemble symmetric matrices from one response per central object.

    Pairs without a usable answer get distance +inf and confidence 0 and are
    returned in the missing list; both directions are then averaged.
    """
    n = len(categories)
    D = np.full((n, n), math.inf)
    C = np.zeros((n, n))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(C, 1.0)
    missing: list[tuple[str, str]] = []
    for i, central in enumerate(categories):
        text = raw.get(central, "")
        pairs, problems = parse_response_text(text, categories)
        for msg in problems:
            log.warning("central %s: %s", central, msg)
        for j, other in enumerate(categories):
            if i == j:
                continue
            if other not in pairs:
                missing.append((central, other))
                continue
            d, c = pairs[other]
            if d < 0 or not 0.0 <= c <= 1.0:
                log.warning("central %s, object %s: out-of-range answer %s", central, other, (d, c))
                missing.append((central, other))
                continue
            D[i, j], C[i, j] = d, c
    if missing:
        log.warning("%d of %d pairs missing from LLM responses", len(missing), n * (n - 1))
    return PriorMatrices(tuple(categories), D, C).symmetrized(), missing


class _Cache:
    def __init__(self, root: str | None) -> None:
        self.root = Path(root) if root else None
        self._lock = threading.Lock()

    def key(self, model: str, messages: list[dict[str, str]]) -> str:
        blob = json.dumps({"v": PROMPT_VERSION, "model": model, "messages": messages}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def get(self, key: str) -> str | None:
        if self.root is None:
            return None
        path = self.root / f"{key}.json"
        return json.loads(path.read_text())["content"] if path.exists() else None

    def put(self, key: str, content: str) -> None:
        if self.root is None:
            return
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            (self.root / f"{key}.json").write_text(json.dumps({"content": content}))


def _post_with_retries(client: httpx.Client, cfg: LLMConfig, messages: list[dict[str, str]]) -> str:
    headers = {"Authorization": f"Bearer {cfg.api_key}"} if cfg.api_key else {}
    body = {"model": cfg.model, "messages": messages, "temperature": cfg.temperature}
    last: Exception | None = None
    for attempt in range(cfg.retries + 1):
        try:
            resp = client.post(cfg.url, json=body, headers=headers)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            last = exc
            if attempt < cfg.retries:
                time.sleep(cfg.backoff * 2 ** attempt)
    raise NetworkError(f"LLM request failed after {cfg.retries + 1} attempts: {last}")


def query_llm(categories: list[str], config: LLMConfig) -> dict[str, str]:
    """One hierarchical prompt per central object; returns raw response text by central object."""
    cfg = config.resolved()
    cache = _Cache(cfg.cache_dir)
    with httpx.Client(timeout=cfg.timeout, transport=cfg.transport) as client:

        def ask(central: str) -> tuple[str, str]:
            messages = build_prompt(central, categories)
            key = cache.key(cfg.model, messages)
            hit = cache.get(key)
            if hit is not None:
                return central, hit
            content = _post_with_retries(client, cfg, messages)
            cache.put(key, content)
            return central, content

        with ThreadPoolExecutor(max_workers=max(1, cfg.max_concurrency)) as pool:
            return dict(pool.map(ask, categories))
