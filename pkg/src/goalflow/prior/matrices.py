"""Pairwise distance/confidence matrices over object categories, and their JSON file."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError, RangeError


@dataclass(frozen=True)
class PriorMatrices:
    """Symmetric distance ``D`` (meters, may hold +inf for unknown pairs) and confidence ``C``."""

    categories: tuple[str, ...]
    D: np.ndarray
    C: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.categories)
        D = np.asarray(self.D, dtype=np.float64)
        C = np.asarray(self.C, dtype=np.float64)
        if D.shape != (n, n) or C.shape != (n, n):
            raise RangeError(f"matrices must be {n}x{n}, got D{D.shape} C{C.shape}")
        if np.isnan(D).any() or (D < 0).any():
            raise RangeError("distances must be non-negative")
        if not np.isfinite(C).all() or (C < 0).any() or (C > 1).any():
            raise RangeError("confidences must lie in [0, 1]")
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return len(self.categories)

    def index(self, name: str) -> int:
        return self.categories.index(name)

    def symmetrized(self) -> PriorMatrices:
        with np.errstate(invalid="ignore"):
            D = (self.D + self.D.T) / 2
        return PriorMatrices(self.categories, D, (self.C + self.C.T) / 2)

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.D, self.D.T) and np.array_equal(self.C, self.C.T))


def _encode(matrix: np.ndarray) -> list[list[float | None]]:
    return [[None if math.isinf(v) else float(v) for v in row] for row in matrix]


def _decode(rows, name: str) -> np.ndarray:
    try:
        return np.array([[math.inf if v is None else float(v) for v in row] for row in rows],
                        dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"matrix {name} is not a list of numeric rows") from exc


def save_prior_matrices(path: str | os.PathLike, prior: PriorMatrices) -> None:
    """Write ``{"categories", "D", "C"}``; unknown distances are stored as ``null``."""
    payload = {"categories": list(prior.categories), "D": _encode(prior.D), "C": _encode(prior.C)}
    Path(path).write_text(json.dumps(payload, indent=1))


def load_prior_matrices(path: str | os.PathLike) -> PriorMatrices:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return prior_from_dict(payload)


def prior_from_dict(payload: dict) -> PriorMatrices:
    if not isinstance(payload, dict) or not {"categories", "D", "C"} <= payload.keys():
        raise ParseError("prior file needs 'categories', 'D' and 'C'")
    categories = payload["categories"]
    if not isinstance(categories, list) or not all(isinstance(c, str) for c in categories):
        raise ParseError("'categories' must be a list of names")
    D = _decode(payload["D"], "D")
    C = _decode(payload["C"], "C")
    n = len(categories)
    if D.shape != (n, n) or C.shape != (n, n):
        raise ParseError(f"expected {n}x{n} matrices")
    if np.isinf(C).any():
        raise RangeError("confidences may not be null")
    return PriorMatrices(tuple(categories), D, C).symmetrized()
