"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--size 64] [--repeat 5]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from goalflow import kernels


def cases(size: int, rng: np.random.Generator):
    trav = rng.random((size, size)) > 0.2
    free = np.argwhere(trav)
    src = free[rng.choice(len(free), 1)]
    return {
        "fmm": lambda backend: kernels.fmm(trav, src, backend=backend),
        "label4": lambda backend: kernels.label4(rng.random((size, size)) > 0.5, backend=backend),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"grid {args.size}x{args.size}, best of {args.repeat}; default backend: {kernels.BACKEND}")
    print(f"{'kernel':8s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases(args.size, np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends}
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else "       -"
        print(f"{name:8s} " + " ".join(f"{times[b] * 1e3:10.2f}ms" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
