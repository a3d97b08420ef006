"""Compiled vs numpy grid-search kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times a full (B, f, beta) table build and a threshold selection per room and
checks both backends agree bit for bit.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from metaalloc import kernels
from metaalloc.config import DEFAULT_ROOMS, GlobalParams
from metaalloc.immersion import resolve_tau
from metaalloc.policies import RoomGrid


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend unavailable; only the pure-Python backend is timed")
    params = GlobalParams()
    print(f"{'room':8s} {'points':>7s} " + " ".join(f"{n + ' us':>12s}" for n in impls)
          + "   speedup  identical")
    for name, room in DEFAULT_ROOMS.items():
        grid = RoomGrid(room, params, room.eps_mid, resolve_tau(room, params))
        clients = max(1, room.capacity // 2)
        points = len(grid.bitrates) * len(grid.framerates) * len(grid.betas)
        times = {}
        for n, impl in impls.items():
            t = timeit.timeit(lambda: grid.select(clients, 0.6, impl), number=args.repeat)
            times[n] = 1e6 * t / args.repeat
        tabs = [grid.tables(clients, impl) for impl in impls.values()]
        same = all(np.array_equal(a[0], tabs[0][0]) and np.array_equal(a[1], tabs[0][1])
                   for a in tabs)
        speed = times["python"] / times["cython"] if "cython" in times else 1.0
        print(f"{name:8s} {points:7d} " + " ".join(f"{times[n]:12.1f}" for n in impls)
              + f"   {speed:7.1f}x  {same}")


if __name__ == "__main__":
    main()
