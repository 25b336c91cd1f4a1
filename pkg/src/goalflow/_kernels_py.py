"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same tie behaviour, roughly two orders of magnitude slower.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

_INF = math.inf
_SQRT2 = math.sqrt(2.0)
_NB8 = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]


def _solve(a: float, b: float, hh: float) -> float:
    if a > b:
        a, b = b, a
    if a == _INF:
        return _INF
    if b - a >= hh:
        return a + hh
    return 0.5 * (a + b + math.sqrt(2.0 * hh * hh - (a - b) ** 2))


def fmm(trav: np.ndarray, sources: np.ndarray) -> np.ndarray:
    h, w = trav.shape
    tv = trav.astype(bool).tolist()
    T = [[_INF] * w for _ in range(h)]
    known = [[False] * w for _ in range(h)]
    heap: list[tuple[float, int]] = []
    for r, c in np.asarray(sources).tolist():
        if T[r][c] != 0.0:
            T[r][c] = 0.0
            heapq.heappush(heap, (0.0, r * w + c))

    def kn(r: int, c: int) -> float:
        if 0 <= r < h and 0 <= c < w and known[r][c]:
            return T[r][c]
        return _INF

    def kd(r: int, c: int, r0: int, c0: int) -> float:
        if 0 <= r < h and 0 <= c < w and known[r][c] and tv[r0][c] and tv[r][c0]:
            return T[r][c]
        return _INF

    while heap:
        _, idx = heapq.heappop(heap)
        r, c = divmod(idx, w)
        if known[r][c]:
            continue
        known[r][c] = True
        for dr, dc in _NB8:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w) or not tv[rr][cc] or known[rr][cc]:
                continue
            t = _solve(min(kn(rr - 1, cc), kn(rr + 1, cc)), min(kn(rr, cc - 1), kn(rr, cc + 1)), 1.0)
            t2 = _solve(
                min(kd(rr - 1, cc - 1, rr, cc), kd(rr + 1, cc + 1, rr, cc)),
                min(kd(rr - 1, cc + 1, rr, cc), kd(rr + 1, cc - 1, rr, cc)),
                _SQRT2,
            )
            if t2 < t:
                t = t2
            if t < T[rr][cc]:
                T[rr][cc] = t
                heapq.heappush(heap, (t, rr * w + cc))
    return np.array(T, dtype=np.float64)


def label4(mask: np.ndarray) -> tuple[np.ndarray, int]:
    h, w = mask.shape
    m = mask.astype(bool).tolist()
    labels = [[0] * w for _ in range(h)]
    count = 0
    for r0 in range(h):
        for c0 in range(w):
            if not m[r0][c0] or labels[r0][c0]:
                continue
            count += 1
            labels[r0][c0] = count
            stack = [(r0, c0)]
            while stack:
                r, c = stack.pop()
                for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= rr < h and 0 <= cc < w and m[rr][cc] and not labels[rr][cc]:
                        labels[rr][cc] = count
                        stack.append((rr, cc))
    return np.array(labels, dtype=np.int32), count
