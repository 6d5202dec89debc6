#!/usr/bin/env python3
"""Numba kernels against their pure Python/numpy fallbacks.

Each kernel is timed in-process twice: once as the ``@njit`` build and once as
the undecorated function (the path taken under CONETESS_DISABLE_JIT=1).
Prints a table, or JSON with --json.
"""
import argparse
import json
import sys
import time

import numpy as np

from conetess import _kernels as K
from conetess._jit import JIT_ENABLED
from conetess.sampler import RngStream, sample_arrangement


def timeit(func, args, repeat):
    func(*args)  # warm-up (triggers compilation for jitted kernels)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(seed):
    g = np.random.default_rng(seed)
    arr = sample_arrangement(7, 4, rng=RngStream(seed, 0))
    M = g.standard_normal((8, 4))
    t, _ = K.max_slack(M, 1.0)
    while t <= 0:
        M = g.standard_normal((8, 4))
        t, _ = K.max_slack(M, 1.0)
    ring = np.array([[np.cos(a), np.sin(a), 1.5] for a in np.linspace(0, 2 * np.pi, 9)[:-1]])
    ring /= np.linalg.norm(ring, axis=1)[:, None]
    X = g.standard_normal((200_000, 4))
    G = g.standard_normal((6, 4))
    return [
        ("max_slack 8x4", K.max_slack, K._max_slack_py, (M, 1.0)),
        ("incremental_cells n=7 d=4", K.incremental_cells, K._incremental_cells_py,
         (np.ascontiguousarray(arr.normals), 1e-9, 64)),
        ("girard_area 8 vertices", K.girard_area, K._girard_area_py, (ring,)),
        ("count_inside 2e5 x 6", K.count_inside, K._count_inside_np, (X, G, 0.0)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    if not JIT_ENABLED:
        print("JIT is disabled; both columns time the fallback", file=sys.stderr)

    rows = []
    for name, fast, slow, a in cases(args.seed):
        t_jit = timeit(fast, a, args.repeat)
        t_py = timeit(slow, a, max(1, args.repeat // 4))
        rows.append({"kernel": name, "jit_s": t_jit, "fallback_s": t_py, "speedup": t_py / t_jit})

    if args.json:
        json.dump({"jit_enabled": JIT_ENABLED, "results": rows}, sys.stdout, indent=2)
        print()
        return
    print(f"{'kernel':32s} {'jit [us]':>12s} {'fallback [us]':>14s} {'speedup':>8s}")
    for r in rows:
        print(f"{r['kernel']:32s} {r['jit_s'] * 1e6:12.1f} {r['fallback_s'] * 1e6:14.1f} {r['speedup']:8.1f}")


if __name__ == "__main__":
    main()
